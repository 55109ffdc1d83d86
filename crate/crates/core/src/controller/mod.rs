//! Forward-dynamics admittance control: the wrench error is mapped through the
//! Jacobian transpose onto a virtual arm whose simulated response becomes the
//! joint-position command.

pub mod arm;
pub mod deploy;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arm::{ArmGeometry, ManipulatorModel};
pub use deploy::{deploy, Encoding, EpisodeLog, EpisodeOutcome, LogRow, Plant, PolicyKind};

use crate::sim::{SimConfig, Wrench};

/// Regularization added to a non-SPD joint inertia before solving.
pub const INERTIA_REGULARIZATION: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller config: {0}")]
    Config(String),
    #[error("start pose is out of reach of the arm")]
    Unreachable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Diagonal of the wrench-error gain.
    pub kp: [f64; 3],
    /// Integration step of the virtual arm (s).
    pub sim_dt: f64,
    pub model_rate: f64,
    pub control_rate: f64,
    /// Joint velocity is multiplied by this after every control step.
    pub joint_damping: f64,
    /// Per-joint acceleration limit (rad/s^2).
    pub qdd_limit: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: [1.0; 3],
            sim_dt: 0.002,
            model_rate: 5.0,
            control_rate: 500.0,
            joint_damping: 0.9,
            qdd_limit: 1e4,
        }
    }
}

impl ControllerConfig {
    /// Control steps per model tick.
    pub fn ratio(&self) -> usize {
        (self.control_rate / self.model_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let err = |m: &str| Err(ControllerError::Config(m.to_string()));
        if self.kp.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return err("kp entries must be positive");
        }
        if !(self.sim_dt > 0.0 && self.model_rate > 0.0 && self.control_rate > 0.0) {
            return err("rates and step must be positive");
        }
        let ratio = self.control_rate / self.model_rate;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return err("control_rate must be an integer multiple of model_rate");
        }
        if !(0.0..=1.0).contains(&self.joint_damping) || !(self.qdd_limit > 0.0) {
            return err("joint_damping must be in [0, 1] and qdd_limit positive");
        }
        Ok(())
    }

    /// Gains that make the arm's steady-state velocity under a constant wrench match
    /// the free part's damping in `sim`, using the diagonal of the tool mobility
    /// `J H^-1 J^T` at `arm`.
    pub fn calibrate(
        &mut self,
        arm: &ManipulatorModel,
        sim: &SimConfig,
    ) -> Result<(), ControllerError> {
        let mobility = arm.mobility().ok_or(ControllerError::Unreachable)?;
        let g = self.joint_damping;
        let damping = [sim.lin_damping, sim.lin_damping, sim.rot_damping];
        for i in 0..3 {
            self.kp[i] = (1.0 - g) / (g * self.sim_dt * damping[i] * mobility[(i, i)]);
        }
        Ok(())
    }
}

/// Diagnostics of one control step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub regularized: bool,
    pub qdd: Vector3<f64>,
}

/// One control cycle: wrench error, joint torque via `J^T`, forward dynamics,
/// explicit Euler and joint damping. Updates `arm` in place.
pub fn control_step(
    cfg: &ControllerConfig,
    arm: &mut ManipulatorModel,
    f_ref: &Wrench,
    f_meas: &Wrench,
) -> StepInfo {
    let err = (*f_ref - *f_meas).to_array();
    let f_hat = Vector3::new(cfg.kp[0] * err[0], cfg.kp[1] * err[1], cfg.kp[2] * err[2]);
    let tau = arm.jacobian().transpose() * f_hat;
    let h = arm.inertia();
    let (mut qdd, regularized) = match h.cholesky() {
        Some(ch) => (ch.solve(&tau), false),
        None => {
            let reg = h + nalgebra::Matrix3::identity() * INERTIA_REGULARIZATION;
            let sol = reg
                .cholesky()
                .map(|c| c.solve(&tau))
                .unwrap_or_else(Vector3::zeros);
            (sol, true)
        }
    };
    qdd.iter_mut()
        .for_each(|a| *a = a.clamp(-cfg.qdd_limit, cfg.qdd_limit));
    arm.q += arm.qd * cfg.sim_dt;
    arm.qd += qdd * cfg.sim_dt;
    arm.qd *= cfg.joint_damping;
    StepInfo { regularized, qdd }
}

/// Element-wise scaling of a reference wrench; `factor` is clamped to `[0, 1]`.
pub fn post_scale(w: &Wrench, factor: f64) -> Wrench {
    *w * factor.clamp(0.0, 1.0)
}
