use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use forcestrat::controller::deploy::{DeployConfig, Plant};
use forcestrat::controller::{Encoding, PolicyKind};
use forcestrat::demonstrator::{generate_dataset, DemonstratorConfig, GenerateError, NoiseKind};
use forcestrat::demos::io::{read_dataset_config, DemoError};
use forcestrat::demos::{
    band_plot, occurrence_grid, partition_by_duration, read_dataset, read_demo, write_dataset,
    Feature,
};
use forcestrat::eval::{evaluate, run_trial, EvalError};
use forcestrat::sim::{SimConfig, SimError};
use forcestrat::teleop::{serve, ServerConfig};
use forcestrat::train::{
    grad_check, load, random_instance, save, train, train_quartile_suite, write_curve_csv,
    CheckpointError, Hyper, TrainError,
};

#[derive(Parser)]
#[command(
    name = "forcestrat",
    version,
    about = "Learn and deploy probabilistic force strategies for peg-in-hole assembly"
)]
struct Cli {
    /// Default directory for datasets, checkpoints and reports.
    #[arg(
        long,
        global = true,
        env = "FORCESTRAT_DATA_DIR",
        default_value = "data"
    )]
    data_dir: PathBuf,
    /// Simulator config (TOML). Defaults to the dataset's stored config, then built-in defaults.
    #[arg(long, global = true)]
    sim_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations.
    GenDemos {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset directory [default: <data-dir>/demos].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use uncorrelated demonstrator noise.
        #[arg(long)]
        white_noise: bool,
    },
    /// Duration quartiles, distance band statistics and occurrence grid of a dataset.
    Analyze {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "fz")]
        feature: Feature,
        /// Grid size as WIDTHxHEIGHT.
        #[arg(long, default_value = "180x60")]
        grid: String,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Write the full analysis as JSON here instead of a summary to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model on a dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint path [default: <data-dir>/model.json].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Learning curve CSV [default: next to the checkpoint].
        #[arg(long)]
        curve: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Train one model per duration quartile plus one on all demonstrations.
    TrainQuartiles {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory [default: <data-dir>/quartiles].
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Compare analytic and finite-difference gradients on random instances.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-loop evaluation over seeded trials.
    Eval {
        /// Checkpoints to evaluate [default: <data-dir>/model.json].
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Also evaluate the zero-wrench baseline.
        #[arg(long)]
        zero_baseline: bool,
        #[command(flatten)]
        deploy: DeployArgs,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a demonstration or one evaluation trial to CSV.
    Replay {
        #[arg(long, conflicts_with = "checkpoint")]
        demo: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[command(flatten)]
        deploy: DeployArgs,
        /// CSV destination [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the teleoperation WebSocket endpoint.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Where recordings are written [default: <data-dir>/teleop].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        max_sessions: usize,
        /// Built browser client (the `teleop_ui` directory) to serve under `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct HyperArgs {
    /// Hyperparameter file (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl HyperArgs {
    fn resolve(&self) -> Result<Hyper> {
        let mut h = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => Hyper::default(),
        };
        macro_rules! set {
            ($($f:ident => $t:ident),*) => { $(if let Some(v) = self.$f { h.$t = v; })* };
        }
        set!(k => k, n => n, m => m, lr => learning_rate, batch => batch_size, steps => steps, eval_every => eval_every, seed => seed);
        h.validate()?;
        Ok(h)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantArg {
    Arm,
    FreeBody,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Window,
    Incremental,
}

#[derive(Args)]
struct DeployArgs {
    #[arg(long, value_enum, default_value = "arm")]
    plant: PlantArg,
    #[arg(long, value_enum, default_value = "window")]
    encoding: EncodingArg,
    /// Episode time budget (s).
    #[arg(long, default_value_t = 30.0)]
    cutoff: f64,
    /// Success goal distance (m).
    #[arg(long, default_value_t = 0.001)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    post_scale: f64,
    #[arg(long, default_value_t = 100.0)]
    model_rate: f64,
    #[arg(long, default_value_t = 1000.0)]
    control_rate: f64,
    /// Controller integration step (s) [default: 1 / control-rate].
    #[arg(long)]
    sim_dt: Option<f64>,
    /// Fixed diagonal gains instead of the calibrated ones.
    #[arg(long, num_args = 3, value_names = ["KX", "KZ", "KTAU"])]
    kp: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DeployArgs {
    fn config(&self) -> DeployConfig {
        let mut d = DeployConfig {
            plant: match self.plant {
                PlantArg::Arm => Plant::Arm,
                PlantArg::FreeBody => Plant::FreeBody,
            },
            encoding: match self.encoding {
                EncodingArg::Window => Encoding::SlidingWindow,
                EncodingArg::Incremental => Encoding::Incremental,
            },
            max_time: self.cutoff,
            success_threshold: self.threshold,
            temperature: self.temperature,
            post_scale: self.post_scale,
            ..DeployConfig::default()
        };
        d.controller.model_rate = self.model_rate;
        d.controller.control_rate = self.control_rate;
        d.controller.sim_dt = self.sim_dt.unwrap_or(1.0 / self.control_rate);
        if let Some(kp) = &self.kp {
            d.controller.kp = [kp[0], kp[1], kp[2]];
            d.calibrate_gains = false;
        }
        d
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid configuration: {0}")]
struct ConfigError(String);

/// Process exit status per failure class.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<SimError>().is_some()
        {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<DemoError>() {
            return if matches!(e, DemoError::Io { .. }) {
                4
            } else {
                5
            };
        }
        if let Some(e) = cause.downcast_ref::<CheckpointError>() {
            return if matches!(e, CheckpointError::Io { .. }) {
                4
            } else {
                5
            };
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return if matches!(e, TrainError::Hyper(_)) {
                3
            } else {
                6
            };
        }
        if cause.downcast_ref::<GenerateError>().is_some() {
            return 6;
        }
        if cause.downcast_ref::<EvalError>().is_some() {
            return 7;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Joins the error chain, skipping causes that a library error already prints itself.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn sim_config(cli: &Cli, dataset: Option<&Path>) -> Result<SimConfig> {
    if let Some(p) = &cli.sim_config {
        return Ok(SimConfig::load(p)?);
    }
    Ok(dataset.and_then(read_dataset_config).unwrap_or_default())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| ConfigError(format!("grid '{s}' is not WIDTHxHEIGHT")))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(w), parse(h)) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(ConfigError(format!("grid '{s}' needs positive integers")).into()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let data_dir = cli.data_dir.clone();
    let or_default =
        |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| data_dir.join(name));
    match &cli.command {
        Command::GenDemos {
            count,
            seed,
            out,
            white_noise,
        } => {
            let out = or_default(out, "demos");
            let cfg = sim_config(&cli, None)?;
            let dcfg = DemonstratorConfig {
                noise: if *white_noise {
                    NoiseKind::White
                } else {
                    NoiseKind::Correlated
                },
                ..DemonstratorConfig::default()
            };
            let demos = generate_dataset(&cfg, &dcfg, *count, *seed)?;
            let manifest = write_dataset(&out, &demos, &cfg)?;
            let total: f64 = manifest.demos.iter().map(|d| d.duration).sum();
            println!(
                "wrote {} demonstrations ({total:.1} s) to {}",
                demos.len(),
                out.display()
            );
        }
        Command::Analyze {
            data,
            feature,
            grid,
            bins,
            out,
        } => {
            let dir = or_default(data, "demos");
            let (width, height) = parse_grid(grid)?;
            if *bins == 0 {
                bail!(ConfigError("bins must be positive".into()));
            }
            let (_, demos) = read_dataset(&dir)?;
            if demos.is_empty() {
                bail!(ConfigError(format!(
                    "{} holds no demonstrations",
                    dir.display()
                )));
            }
            let part = partition_by_duration(&demos);
            let bands = band_plot(&demos, *feature, *bins, None);
            let occ = occurrence_grid(&demos, *feature, width, height, None, None);
            match out {
                Some(p) => {
                    let v = serde_json::json!({ "partition": part, "bands": bands, "grid": occ });
                    write_text(p, &serde_json::to_string_pretty(&v)?)?;
                    println!("wrote analysis to {}", p.display());
                }
                None => {
                    println!("demonstrations: {}", demos.len());
                    println!(
                        "duration quartiles (s): {:.2} {:.2} {:.2}",
                        part.q1, part.q2, part.q3
                    );
                    for (name, idx) in part.named() {
                        println!("  {name:>7}: {}", idx.len());
                    }
                    println!("distance_lo,distance_hi,count,min,max,mean");
                    for b in &bands {
                        let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                        println!(
                            "{},{},{},{},{},{}",
                            b.lo,
                            b.hi,
                            b.count,
                            f(b.min),
                            f(b.max),
                            f(b.mean)
                        );
                    }
                    println!(
                        "occurrence grid {width}x{height}: {} samples in range",
                        occ.total()
                    );
                }
            }
        }
        Command::Train {
            data,
            out,
            curve,
            hyper,
        } => {
            let dir = or_default(data, "demos");
            let out = or_default(out, "model.json");
            let hyper = hyper.resolve()?;
            let cfg = sim_config(&cli, Some(&dir))?;
            let (_, demos) = read_dataset(&dir)?;
            let result = train(&demos, &hyper, &cfg.hash())?;
            save(&result.checkpoint, &out)?;
            let curve_path = curve
                .clone()
                .unwrap_or_else(|| out.with_extension("curve.csv"));
            let mut buf = Vec::new();
            write_curve_csv(&result.curve, &mut buf)?;
            write_text(&curve_path, std::str::from_utf8(&buf)?)?;
            let s = &result.checkpoint.summary;
            println!(
                "held-out NLL {:.4} -> {:.4} after {} steps; checkpoint {}",
                s.initial_eval_loss,
                s.final_eval_loss,
                s.steps,
                out.display()
            );
        }
        Command::TrainQuartiles { data, out, hyper } => {
            let dir = or_default(data, "demos");
            let out = or_default(out, "quartiles");
            let hyper = hyper.resolve()?;
            let cfg = sim_config(&cli, Some(&dir))?;
            let (_, demos) = read_dataset(&dir)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for m in train_quartile_suite(&demos, &hyper, &cfg.hash())? {
                let Some(o) = m.output else {
                    println!(
                        "{:>7}: {} demos, no windows, skipped",
                        m.name,
                        m.demos.len()
                    );
                    continue;
                };
                save(&o.checkpoint, &out.join(format!("{}.json", m.name)))?;
                let mut buf = Vec::new();
                write_curve_csv(&o.curve, &mut buf)?;
                write_text(
                    &out.join(format!("{}.curve.csv", m.name)),
                    std::str::from_utf8(&buf)?,
                )?;
                let s = &o.checkpoint.summary;
                println!(
                    "{:>7}: {} demos, held-out NLL {:.4} -> {:.4}",
                    m.name,
                    m.demos.len(),
                    s.initial_eval_loss,
                    s.final_eval_loss
                );
            }
        }
        Command::GradCheck {
            instances,
            m,
            k,
            n,
            eps,
            tolerance,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut worst = 0.0f64;
            for i in 0..*instances {
                let (net, seq, y) = random_instance(*m, *k, *n, 3, 2, &mut rng);
                let r = grad_check(&net, &seq, &y, *eps)?;
                println!(
                    "instance {i}: max relative error {:.3e} at {}{:?} ({} parameters)",
                    r.max_rel_error, r.tensor, r.index, r.checked
                );
                worst = worst.max(r.max_rel_error);
            }
            if worst >= *tolerance {
                bail!("gradient check failed: {worst:.3e} >= {tolerance:.1e}");
            }
            println!("all instances below {tolerance:.1e}");
        }
        Command::Eval {
            checkpoints,
            zero_baseline,
            deploy,
            trials,
            workers,
            out,
        } => {
            let cfg = sim_config(&cli, None)?;
            let dcfg = deploy.config();
            let paths = if checkpoints.is_empty() {
                vec![data_dir.join("model.json")]
            } else {
                checkpoints.clone()
            };
            let mut reports = Vec::new();
            for p in &paths {
                let ck = load(p)?;
                if ck.sim_config_hash != cfg.hash() {
                    log::warn!(
                        "{} was trained under a different simulator config",
                        p.display()
                    );
                }
                let name = p
                    .file_stem()
                    .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into());
                reports.push(evaluate(
                    &name,
                    &PolicyKind::Model(&ck),
                    &cfg,
                    &dcfg,
                    *trials,
                    deploy.seed,
                    *workers,
                )?);
            }
            if *zero_baseline {
                reports.push(evaluate(
                    "zero",
                    &PolicyKind::Zero,
                    &cfg,
                    &dcfg,
                    *trials,
                    deploy.seed,
                    *workers,
                )?);
            }
            for r in &reports {
                let times = r.completion_times();
                let median = if times.is_empty() {
                    f64::NAN
                } else {
                    let mut t = times.clone();
                    t.sort_by(f64::total_cmp);
                    t[t.len() / 2]
                };
                println!(
                    "{}: {}/{} successes ({:.1}%), median completion {:.2} s, outliers {:?}",
                    r.model,
                    r.successes,
                    r.trials,
                    100.0 * r.success_rate,
                    median,
                    r.outliers
                );
            }
            if let Some(p) = out {
                write_text(p, &serde_json::to_string_pretty(&reports)?)?;
            }
        }
        Command::Replay {
            demo,
            checkpoint,
            trial,
            deploy,
            out,
        } => {
            let mut buf = Vec::new();
            if let Some(p) = demo {
                let d = read_demo(p)?;
                writeln!(buf, "t,x,z,theta,vx,vz,omega,fx,fz,tau,goal_distance")?;
                for s in &d.samples {
                    let mut f = vec![s.t];
                    f.extend(s.pose.to_array());
                    f.extend(s.twist.to_array());
                    f.extend(s.wrench.to_array());
                    f.push(s.goal_distance());
                    writeln!(
                        buf,
                        "{}",
                        f.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
                    )?;
                }
                eprintln!(
                    "{}: {} samples, {:.2} s, success {}",
                    d.id,
                    d.len(),
                    d.duration(),
                    d.success
                );
            } else {
                let p = checkpoint
                    .clone()
                    .unwrap_or_else(|| data_dir.join("model.json"));
                let ck = load(&p)?;
                let cfg = sim_config(&cli, None)?;
                let log = run_trial(
                    &PolicyKind::Model(&ck),
                    &cfg,
                    &deploy.config(),
                    deploy.seed,
                    *trial,
                )?;
                log.write_csv(&mut buf)?;
                eprintln!(
                    "trial {trial}: {:?} after {} model ticks",
                    log.outcome, log.model_ticks
                );
            }
            match out {
                Some(p) => write_text(p, std::str::from_utf8(&buf)?)?,
                None => std::io::stdout().write_all(&buf)?,
            }
        }
        Command::Serve {
            bind,
            out,
            max_sessions,
            ui_dir,
        } => {
            let cfg = sim_config(&cli, None)?;
            let mut scfg = ServerConfig::new(cfg, or_default(out, "teleop"));
            scfg.max_sessions = *max_sessions;
            if let Some(dir) = ui_dir {
                if !dir.join("index.html").is_file() {
                    bail!(ConfigError(format!("{} has no index.html", dir.display())));
                }
                scfg.ui_dir = Some(dir.clone());
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(*bind, scfg, |a| {
                log::info!("listening on ws://{a}/session")
            }))?;
        }
    }
    Ok(())
}
