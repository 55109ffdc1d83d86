//! Dual-rate deployment loop: the policy proposes a reference wrench every model tick
//! and the admittance controller tracks it for `control_rate / model_rate` steps.

use serde::{Deserialize, Serialize};
use std::borrow::Borrow;
use std::collections::VecDeque;
use std::io::Write;

use super::{
    control_step, post_scale, ArmGeometry, ControllerConfig, ControllerError, ManipulatorModel,
};
use crate::demos::{features, Demonstration, FEATURE_DIM, WRENCH_DIM};
use crate::model::{lstm, mdn, LstmState};
use crate::sim::{Pose, SimConfig, SimState, Simulator, Twist, Wrench};
use crate::train::{Checkpoint, CheckpointError};

/// What moves the part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plant {
    /// The part is held by the simulated arm and follows its tool frame.
    Arm,
    /// The reference wrench is applied directly to the free part.
    FreeBody,
}

/// How the model's LSTM consumes the feature history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// State threaded across ticks, one LSTM step per tick.
    Incremental,
    /// The last `N + 1` features are re-encoded from a zero state every tick.
    SlidingWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeployConfig {
    pub controller: ControllerConfig,
    pub plant: Plant,
    pub arm: ArmGeometry,
    /// Replace `controller.kp` by gains matched to the free part's damping.
    pub calibrate_gains: bool,
    pub max_time: f64,
    pub success_threshold: f64,
    pub temperature: f64,
    pub post_scale: f64,
    pub encoding: Encoding,
}

impl Default for DeployConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            plant: Plant::Arm,
            arm: ArmGeometry::default(),
            calibrate_gains: true,
            max_time: 12.0,
            success_threshold: 0.0005,
            temperature: 1.0,
            post_scale: 1.0,
            encoding: Encoding::SlidingWindow,
        }
    }
}

/// Produces a reference wrench once per model tick.
pub trait Policy {
    /// Called once with the start state before the first tick.
    fn reset(&mut self, start: &SimState);
    /// `prev` is the state and command of the previous tick, `None` on the first tick.
    fn act(
        &mut self,
        prev: Option<(&SimState, &Wrench)>,
        now: &SimState,
        rng: &mut dyn rand::RngCore,
    ) -> Wrench;
}

/// Always commands zero.
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn reset(&mut self, _: &SimState) {}
    fn act(
        &mut self,
        _: Option<(&SimState, &Wrench)>,
        _: &SimState,
        _: &mut dyn rand::RngCore,
    ) -> Wrench {
        Wrench::ZERO
    }
}

/// Replays the recorded commands of a demonstration, then zero.
pub struct ReplayPolicy<'a> {
    demo: &'a Demonstration,
    tick: usize,
}

impl<'a> ReplayPolicy<'a> {
    pub fn new(demo: &'a Demonstration) -> Self {
        Self { demo, tick: 0 }
    }
}

impl Policy for ReplayPolicy<'_> {
    fn reset(&mut self, _: &SimState) {
        self.tick = 0;
    }
    fn act(
        &mut self,
        _: Option<(&SimState, &Wrench)>,
        _: &SimState,
        _: &mut dyn rand::RngCore,
    ) -> Wrench {
        let w = self
            .demo
            .samples
            .get(self.tick)
            .map_or(Wrench::ZERO, |s| s.wrench);
        self.tick += 1;
        w
    }
}

/// Samples wrenches from a trained LSTM-MDN. `C` is either a borrowed or an owned checkpoint.
pub struct ModelPolicy<C: Borrow<Checkpoint>> {
    ckpt: C,
    encoding: Encoding,
    temperature: f64,
    limits: [f64; 3],
    state: LstmState,
    history: VecDeque<[f64; FEATURE_DIM]>,
    pushed: Vec<[f64; FEATURE_DIM]>,
    keep_all: bool,
}

impl<C: Borrow<Checkpoint>> ModelPolicy<C> {
    pub fn new(
        ckpt: C,
        encoding: Encoding,
        temperature: f64,
        limits: [f64; 3],
    ) -> Result<Self, CheckpointError> {
        ckpt.borrow().expect_dims(FEATURE_DIM, WRENCH_DIM)?;
        let m = ckpt.borrow().dims.m;
        Ok(Self {
            ckpt,
            encoding,
            temperature,
            limits,
            state: LstmState::zeros(1, m),
            history: VecDeque::new(),
            pushed: Vec::new(),
            keep_all: false,
        })
    }

    /// Keeps every pushed (normalized) feature row, for consistency checks.
    pub fn record_history(mut self) -> Self {
        self.keep_all = true;
        self
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        self.ckpt.borrow()
    }

    pub fn pushed(&self) -> &[[f64; FEATURE_DIM]] {
        &self.pushed
    }

    /// Current incremental encoding.
    pub fn state(&self) -> &LstmState {
        &self.state
    }

    fn push(&mut self, pose: &Pose, twist: &Twist, wrench: &Wrench) {
        let mut x = features(pose, twist, wrench);
        self.checkpoint().norm.apply_in_place(&mut x);
        if self.keep_all {
            self.pushed.push(x);
        }
        let row = ndarray::Array2::from_shape_vec((1, FEATURE_DIM), x.to_vec()).expect("one row");
        if self.encoding == Encoding::Incremental {
            self.state = lstm::step(&self.checkpoint().net.lstm, row.view(), &self.state)
                .expect("dims checked on load");
        }
        self.history.push_back(x);
        while self.history.len() > self.checkpoint().dims.n + 1 {
            self.history.pop_front();
        }
    }

    fn encoding_now(&self) -> LstmState {
        match self.encoding {
            Encoding::Incremental => self.state.clone(),
            Encoding::SlidingWindow => {
                let seq: Vec<_> = self
                    .history
                    .iter()
                    .map(|x| {
                        ndarray::Array2::from_shape_vec((1, FEATURE_DIM), x.to_vec())
                            .expect("one row")
                    })
                    .collect();
                self.checkpoint()
                    .net
                    .encode(&seq)
                    .expect("dims checked on load")
            }
        }
    }
}

impl<C: Borrow<Checkpoint>> Policy for ModelPolicy<C> {
    fn reset(&mut self, start: &SimState) {
        self.state = LstmState::zeros(1, self.checkpoint().dims.m);
        self.history.clear();
        self.pushed.clear();
        for _ in 0..=self.checkpoint().dims.n {
            self.push(&start.pose, &start.twist, &Wrench::ZERO);
        }
    }

    fn act(
        &mut self,
        prev: Option<(&SimState, &Wrench)>,
        _now: &SimState,
        rng: &mut dyn rand::RngCore,
    ) -> Wrench {
        if let Some((s, w)) = prev {
            self.push(&s.pose, &s.twist, w);
        }
        let enc = self.encoding_now();
        let mix =
            mdn::head_forward(&self.checkpoint().net.head, &enc).expect("dims checked on load");
        let mut rng = rng;
        let y = mdn::sample(&mix, &mut rng, self.temperature);
        self.checkpoint()
            .norm
            .denormalize_wrench(&y)
            .clamp(self.limits)
    }
}

/// Which policy drives an episode.
pub enum PolicyKind<'a> {
    Model(&'a Checkpoint),
    Zero,
    Replay(&'a Demonstration),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpisodeOutcome {
    Success { time: f64 },
    Timeout,
    Fault { reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// Joint angles; zero for the free-body plant.
    pub q: [f64; 3],
    pub pose: Pose,
    pub twist: Twist,
    pub f_ref: Wrench,
    pub f_meas: Wrench,
    pub goal_distance: f64,
    /// Smallest eigenvalue of the joint inertia; zero for the free-body plant.
    pub h_min_eig: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
    pub outcome: EpisodeOutcome,
    pub model_ticks: usize,
    pub control_steps: usize,
    /// Control steps that needed a regularized inertia solve.
    pub regularized_solves: usize,
    pub start: SimState,
    pub kp: [f64; 3],
}

impl EpisodeLog {
    pub fn success(&self) -> bool {
        matches!(self.outcome, EpisodeOutcome::Success { .. })
    }

    pub fn completion_time(&self) -> Option<f64> {
        match self.outcome {
            EpisodeOutcome::Success { time } => Some(time),
            _ => None,
        }
    }

    pub fn final_distance(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.goal_distance)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "t,q1,q2,q3,x,z,theta,vx,vz,omega,fx_ref,fz_ref,tau_ref,fx_meas,fz_meas,tau_meas,goal_distance,h_min_eig"
        )?;
        for r in &self.rows {
            let mut fields = vec![r.t];
            fields.extend(r.q);
            fields.extend(r.pose.to_array());
            fields.extend(r.twist.to_array());
            fields.extend(r.f_ref.to_array());
            fields.extend(r.f_meas.to_array());
            fields.push(r.goal_distance);
            fields.push(r.h_min_eig);
            let line: Vec<String> = fields.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Runs one episode from `start` until the goal threshold, the time budget or a fault.
pub fn deploy(
    policy: &mut dyn Policy,
    sim_cfg: &SimConfig,
    start: SimState,
    cfg: &DeployConfig,
    rng: &mut dyn rand::RngCore,
) -> Result<EpisodeLog, ControllerError> {
    cfg.controller.validate()?;
    let mut ctrl = cfg.controller.clone();
    let mut start = start;
    let mut arm = match cfg.plant {
        Plant::Arm => {
            let q = ManipulatorModel::inverse_kinematics(&cfg.arm, &start.pose)
                .ok_or(ControllerError::Unreachable)?;
            let arm = ManipulatorModel::new(cfg.arm.clone(), q);
            if cfg.calibrate_gains {
                ctrl.calibrate(&arm, sim_cfg)?;
            }
            // The part starts where the arm actually holds it, not at the requested pose.
            start.pose = arm.forward_kinematics().0;
            Some(arm)
        }
        Plant::FreeBody => None,
    };
    let plant_cfg = SimConfig {
        dt: ctrl.sim_dt,
        ..sim_cfg.clone()
    };
    let mut sim =
        Simulator::new(plant_cfg, start).map_err(|e| ControllerError::Config(e.to_string()))?;
    let ratio = ctrl.ratio();
    let max_steps = (cfg.max_time / ctrl.sim_dt).round() as usize;
    let mut log = EpisodeLog {
        rows: Vec::with_capacity(max_steps.min(1 << 16) + 1),
        outcome: EpisodeOutcome::Timeout,
        model_ticks: 0,
        control_steps: 0,
        regularized_solves: 0,
        start,
        kp: ctrl.kp,
    };
    let row = |sim: &Simulator, arm: &Option<ManipulatorModel>, f_ref, f_meas| {
        let s = sim.state();
        let (q, eig) = match arm {
            Some(a) => (
                [a.q[0], a.q[1], a.q[2]],
                a.inertia().symmetric_eigenvalues().min(),
            ),
            None => ([0.0; 3], 0.0),
        };
        LogRow {
            t: s.t,
            q,
            pose: s.pose,
            twist: s.twist,
            f_ref,
            f_meas,
            goal_distance: sim.goal_distance(),
            h_min_eig: eig,
        }
    };
    log.rows.push(row(&sim, &arm, Wrench::ZERO, Wrench::ZERO));
    if sim.goal_distance() <= cfg.success_threshold {
        log.outcome = EpisodeOutcome::Success { time: 0.0 };
        return Ok(log);
    }

    policy.reset(&start);
    let mut prev: Option<(SimState, Wrench)> = None;
    'episode: while log.control_steps < max_steps {
        let now = *sim.state();
        let f_ref = policy.act(prev.as_ref().map(|(s, w)| (s, w)), &now, rng);
        let f_ref = post_scale(&f_ref.clamp(sim_cfg.wrench_limits), cfg.post_scale);
        log.model_ticks += 1;
        if !f_ref.is_finite() {
            log.outcome = EpisodeOutcome::Fault {
                reason: format!("non-finite reference {f_ref:?}"),
            };
            break;
        }
        prev = Some((now, f_ref));
        for _ in 0..ratio {
            let f_meas = -sim.state().contact_wrench;
            let stepped = match arm.as_mut() {
                Some(a) => {
                    let info = control_step(&ctrl, a, &f_ref, &f_meas);
                    log.regularized_solves += info.regularized as usize;
                    let (pose, twist) = a.forward_kinematics();
                    sim.follow(pose, twist, ctrl.sim_dt).map(|_| ())
                }
                None => sim.step(&f_ref).map(|_| ()),
            };
            log.control_steps += 1;
            if let Err(e) = stepped {
                log.outcome = EpisodeOutcome::Fault {
                    reason: e.to_string(),
                };
                break 'episode;
            }
            log.rows.push(row(&sim, &arm, f_ref, f_meas));
            if sim.goal_distance() <= cfg.success_threshold {
                log.outcome = EpisodeOutcome::Success {
                    time: sim.state().t - start.t,
                };
                break 'episode;
            }
            if log.control_steps >= max_steps {
                break 'episode;
            }
        }
    }
    Ok(log)
}

/// Draws a random start for trial `index` from a per-trial ChaCha stream of `seed`.
pub fn trial_rng(seed: u64, index: usize) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Builds the policy for a [`PolicyKind`].
pub fn make_policy<'a>(
    kind: &PolicyKind<'a>,
    cfg: &DeployConfig,
    limits: [f64; 3],
) -> Result<Box<dyn Policy + 'a>, CheckpointError> {
    Ok(match kind {
        PolicyKind::Model(ck) => Box::new(ModelPolicy::new(
            *ck,
            cfg.encoding,
            cfg.temperature,
            limits,
        )?),
        PolicyKind::Zero => Box::new(ZeroPolicy),
        PolicyKind::Replay(d) => Box::new(ReplayPolicy::new(d)),
    })
}
