use forcestrat::controller::deploy::{
    deploy, trial_rng, DeployConfig, ModelPolicy, Plant, ReplayPolicy, ZeroPolicy,
};
use forcestrat::controller::Encoding;
use forcestrat::controller::PolicyKind;
use forcestrat::demonstrator::{generate_dataset, DemonstratorConfig};
use forcestrat::eval::{evaluate, run_trial};
use forcestrat::model::{lstm, LstmState};
use forcestrat::sim::{random_start, SimConfig};
use forcestrat::train::{train, Checkpoint, Hyper};
use ndarray::Array2;

fn tiny_checkpoint() -> Checkpoint {
    let cfg = SimConfig::default();
    let demos = generate_dataset(&cfg, &DemonstratorConfig::default(), 6, 3).unwrap();
    let hyper = Hyper {
        m: 8,
        k: 2,
        n: 5,
        batch_size: 16,
        steps: 20,
        eval_every: 10,
        seed: 3,
        ..Hyper::default()
    };
    train(&demos, &hyper, &cfg.hash()).unwrap().checkpoint
}

fn fast_arm() -> DeployConfig {
    let mut d = DeployConfig {
        plant: Plant::Arm,
        max_time: 0.5,
        ..DeployConfig::default()
    };
    d.controller.model_rate = 100.0;
    d.controller.control_rate = 1000.0;
    d.controller.sim_dt = 0.001;
    d
}

#[test]
fn replay_on_free_body_reproduces_the_demo() {
    let cfg = SimConfig::default();
    let dcfg = DemonstratorConfig::default();
    let demo = &generate_dataset(&cfg, &dcfg, 1, 11).unwrap()[0];
    let mut d = DeployConfig {
        plant: Plant::FreeBody,
        max_time: 60.0,
        success_threshold: dcfg.success_threshold,
        ..DeployConfig::default()
    };
    d.controller.model_rate = 1.0 / cfg.dt;
    d.controller.control_rate = 1.0 / cfg.dt;
    d.controller.sim_dt = cfg.dt;
    let start = forcestrat::sim::SimState::at_rest(demo.samples[0].pose);
    let log = deploy(
        &mut ReplayPolicy::new(demo),
        &cfg,
        start,
        &d,
        &mut trial_rng(0, 0),
    )
    .unwrap();
    assert!(log.success());
    assert_eq!(log.rows.len(), demo.samples.len());
    for (row, s) in log.rows.iter().zip(&demo.samples) {
        assert_eq!(row.pose, s.pose);
        assert_eq!(row.twist, s.twist);
    }
}

#[test]
fn zero_policy_never_succeeds() {
    let cfg = SimConfig::default();
    let d = DeployConfig {
        max_time: 2.0,
        ..fast_arm()
    };
    let r = evaluate("zero", &PolicyKind::Zero, &cfg, &d, 5, 1, 0).unwrap();
    assert_eq!(r.successes, 0);
    let log = run_trial(&PolicyKind::Zero, &cfg, &d, 1, 0).unwrap();
    let held = log.rows[1].pose;
    assert!((held.x - log.rows[0].pose.x).abs() < 1e-12);
    assert!(log.rows[1..].iter().all(|r| r.pose == held));
}

#[test]
fn seeded_episodes_are_identical() {
    let ck = tiny_checkpoint();
    let cfg = SimConfig::default();
    for temperature in [0.0, 1.0] {
        let d = DeployConfig {
            temperature,
            ..fast_arm()
        };
        let a = run_trial(&PolicyKind::Model(&ck), &cfg, &d, 5, 2).unwrap();
        let b = run_trial(&PolicyKind::Model(&ck), &cfg, &d, 5, 2).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn incremental_state_matches_full_recompute() {
    let ck = tiny_checkpoint();
    let cfg = SimConfig::default();
    let d = fast_arm();
    let start = random_start(&cfg, &mut trial_rng(9, 0)).unwrap();
    let mut policy = ModelPolicy::new(&ck, Encoding::Incremental, 1.0, cfg.wrench_limits)
        .unwrap()
        .record_history();
    let log = deploy(&mut policy, &cfg, start, &d, &mut trial_rng(9, 1)).unwrap();
    assert!(log.model_ticks > 10);
    let seq: Vec<Array2<f64>> = policy
        .pushed()
        .iter()
        .map(|x| Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap())
        .collect();
    let (full, _) = lstm::forward(&ck.net.lstm, &seq, &LstmState::zeros(1, ck.dims.m)).unwrap();
    assert_eq!(&full, policy.state());
}

#[test]
fn rate_contract_and_inertia() {
    let ck = tiny_checkpoint();
    let cfg = SimConfig::default();
    let d = fast_arm();
    let log = run_trial(&PolicyKind::Model(&ck), &cfg, &d, 4, 0).unwrap();
    let ratio = d.controller.ratio();
    assert_eq!(ratio, 10);
    assert_eq!(log.rows.len(), log.control_steps + 1);
    assert!(log.control_steps <= log.model_ticks * ratio);
    assert!(log.control_steps > (log.model_ticks - 1) * ratio);
    if !log.success() {
        assert_eq!(log.control_steps, 500);
        assert_eq!(log.model_ticks, 50);
    }
    assert!(log.rows.iter().all(|r| r.h_min_eig > 0.0));
    assert_eq!(log.regularized_solves, 0);
    // the reference is held constant between model ticks
    for tick in log.rows[1..].chunks(ratio) {
        assert!(tick.iter().all(|r| r.f_ref == tick[0].f_ref));
    }
}

#[test]
fn idle_reference_keeps_the_arm_still() {
    let cfg = SimConfig::default();
    let d = DeployConfig {
        max_time: 1.0,
        ..fast_arm()
    };
    let start = random_start(&cfg, &mut trial_rng(2, 0)).unwrap();
    let log = deploy(&mut ZeroPolicy, &cfg, start, &d, &mut trial_rng(2, 1)).unwrap();
    assert_eq!(log.control_steps, 1000);
    assert!(log.rows.iter().all(|r| r.q == log.rows[0].q));
}

#[test]
fn report_does_not_depend_on_worker_count() {
    let ck = tiny_checkpoint();
    let cfg = SimConfig::default();
    let d = DeployConfig {
        max_time: 0.3,
        ..fast_arm()
    };
    let one = evaluate("m", &PolicyKind::Model(&ck), &cfg, &d, 7, 4, 1).unwrap();
    let three = evaluate("m", &PolicyKind::Model(&ck), &cfg, &d, 7, 4, 3).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.trials, 7);
    assert_eq!(
        one.results.iter().map(|r| r.index).collect::<Vec<_>>(),
        (0..7).collect::<Vec<_>>()
    );
}
