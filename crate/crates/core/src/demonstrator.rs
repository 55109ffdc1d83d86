//! Scripted stand-in for a human teleoperator.
//!
//! The policy funnels the part over the hole, descends with compliance, and on a
//! jam applies randomized lateral and rotational jiggles. Every demonstration draws
//! a skill level that scales noise and gains, so durations spread out and the
//! duration quartiles separate careful from clumsy recordings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demos::{DemoSample, Demonstration, Source};
use crate::sim::{random_start, SimConfig, SimError, SimState, Simulator, Wrench};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Ornstein-Uhlenbeck noise with correlation time `noise_corr_time`.
    Correlated,
    /// Independent noise per step (ablation).
    White,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemonstratorConfig {
    /// Recording stops as a failure after this much simulated time (s).
    pub timeout: f64,
    /// Goal distance that ends a recording as a success (m).
    pub success_threshold: f64,
    pub noise: NoiseKind,
    pub noise_corr_time: f64,
    /// Range of the per-demonstration skill draw; 0 is the most careful operator.
    pub skill_range: [f64; 2],
}

impl Default for DemonstratorConfig {
    fn default() -> Self {
        Self {
            timeout: 30.0,
            success_threshold: 0.0005,
            noise: NoiseKind::Correlated,
            noise_corr_time: 0.3,
            skill_range: [0.0, 1.0],
        }
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("scripted policy succeeded in {successes} of {attempts} attempts (< 50%); dataset generation infeasible")]
    Infeasible { successes: usize, attempts: usize },
}

/// Stateful funnel policy with jam recovery.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    skill: f64,
    noise_kind: NoiseKind,
    rho: f64,
    noise: [f64; 3],
    noise_scale: [f64; 3],
    stuck_time: f64,
    wiggle_left: f64,
    wiggle_dir: f64,
    wiggle_amp: [f64; 2],
    rng: ChaCha8Rng,
}

impl ScriptedPolicy {
    pub fn new(skill: f64, dcfg: &DemonstratorConfig, dt: f64, rng: ChaCha8Rng) -> Self {
        let rho = match dcfg.noise {
            NoiseKind::Correlated => (-dt / dcfg.noise_corr_time).exp(),
            NoiseKind::White => 0.0,
        };
        Self {
            skill,
            noise_kind: dcfg.noise,
            rho,
            noise: [0.0; 3],
            noise_scale: [0.4 + 2.4 * skill, 0.4 + 2.0 * skill, 0.008 + 0.03 * skill],
            stuck_time: 0.0,
            wiggle_left: 0.0,
            wiggle_dir: 1.0,
            wiggle_amp: [0.0; 2],
            rng,
        }
    }

    fn advance_noise(&mut self) {
        let innov = (1.0 - self.rho * self.rho).sqrt();
        for i in 0..3 {
            let e: f64 = StandardNormal.sample(&mut self.rng);
            self.noise[i] = self.rho * self.noise[i] + innov * self.noise_scale[i] * e;
        }
        if self.noise_kind == NoiseKind::White {
            debug_assert_eq!(self.rho, 0.0);
        }
    }

    /// Command for the current state.
    pub fn act(&mut self, state: &SimState, cfg: &SimConfig) -> Wrench {
        let dt = cfg.dt;
        self.advance_noise();
        let p = &state.pose;
        let v = &state.twist;
        let clumsy = self.skill;

        let kx = 700.0 * (1.0 - 0.5 * clumsy);
        let mut fx = -kx * p.x - 40.0 * v.vx;
        let mut tau = -0.6 * (1.0 - 0.4 * clumsy) * p.theta - 0.2 * v.omega;

        let bottom_height = p.z - cfg.hole_depth;
        let mut fz = if bottom_height > 0.002 {
            let allowed = 0.0008 + 0.4 * bottom_height;
            if p.x.abs() < allowed {
                -(5.0 + 3.0 * (1.0 - clumsy))
            } else {
                0.5
            }
        } else {
            -(1.5 + 800.0 * p.z.max(0.0)).min(7.0)
        };

        let engaged = bottom_height <= 0.002 && p.z > 0.001;
        if engaged && v.vz.abs() < 0.002 && self.wiggle_left <= 0.0 {
            self.stuck_time += dt;
        } else if self.wiggle_left <= 0.0 {
            self.stuck_time = (self.stuck_time - 2.0 * dt).max(0.0);
        }
        if self.stuck_time > 0.3 + 0.4 * clumsy {
            self.stuck_time = 0.0;
            self.wiggle_left = self.rng.random_range(0.3..0.9);
            self.wiggle_dir = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            self.wiggle_amp = [
                self.rng.random_range(1.5..5.0),
                self.rng.random_range(0.02..0.08),
            ];
        }
        if self.wiggle_left > 0.0 {
            self.wiggle_left -= dt;
            let phase = (self.wiggle_left * 8.0).sin();
            fx += self.wiggle_dir * self.wiggle_amp[0] * phase;
            tau -= self.wiggle_dir * self.wiggle_amp[1] * phase;
            fz *= 0.4;
        }

        fx += self.noise[0];
        fz += self.noise[1];
        tau += self.noise[2];
        Wrench::new(fx, fz, tau).clamp(cfg.wrench_limits)
    }
}

/// Records one scripted episode from a random start. Samples are taken before each
/// command is applied; the final sample is the state that met the goal threshold.
pub fn scripted_demonstrator(
    cfg: &SimConfig,
    dcfg: &DemonstratorConfig,
    rng: &mut ChaCha8Rng,
    id: impl Into<String>,
) -> Result<Demonstration, SimError> {
    let start = random_start(cfg, rng)?;
    let skill = if dcfg.skill_range[0] == dcfg.skill_range[1] {
        dcfg.skill_range[0]
    } else {
        rng.random_range(dcfg.skill_range[0]..=dcfg.skill_range[1])
    };
    let mut policy =
        ScriptedPolicy::new(skill, dcfg, cfg.dt, ChaCha8Rng::seed_from_u64(rng.random()));
    let mut sim = Simulator::new(cfg.clone(), start)?;
    let max_steps = (dcfg.timeout / cfg.dt).round() as usize;
    let mut samples = Vec::with_capacity(1024);
    let mut success = false;
    for i in 0..=max_steps {
        let s = *sim.state();
        if sim.goal_distance() <= dcfg.success_threshold {
            samples.push(DemoSample {
                t: i as f64 * cfg.dt,
                pose: s.pose,
                twist: s.twist,
                wrench: Wrench::ZERO,
            });
            success = true;
            break;
        }
        if i == max_steps {
            break;
        }
        let w = policy.act(&s, cfg);
        samples.push(DemoSample {
            t: i as f64 * cfg.dt,
            pose: s.pose,
            twist: s.twist,
            wrench: w,
        });
        sim.step(&w)?;
    }
    Ok(Demonstration {
        id: id.into(),
        sim_config_hash: cfg.hash(),
        dt: cfg.dt,
        samples,
        success,
        source: Source::Scripted,
    })
}

/// Generates `count` successful demonstrations. Attempt `k` draws from its own
/// ChaCha stream of `seed`, so datasets are reproducible and prefixes are stable.
pub fn generate_dataset(
    cfg: &SimConfig,
    dcfg: &DemonstratorConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Demonstration>, GenerateError> {
    let mut demos = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while demos.len() < count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempts as u64);
        attempts += 1;
        let d = scripted_demonstrator(cfg, dcfg, &mut rng, format!("demo-{:06}", demos.len()))?;
        if d.success {
            demos.push(d);
        }
        if attempts >= 20 && demos.len() * 2 < attempts {
            return Err(GenerateError::Infeasible {
                successes: demos.len(),
                attempts,
            });
        }
    }
    Ok(demos)
}
