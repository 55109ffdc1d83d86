//! Deterministic planar peg-in-hole simulator.

mod config;
pub mod contact;
mod types;

pub use config::{SimConfig, StartBox};
pub use contact::{contact_resolve, is_penetrating};
pub use types::{normalize_angle, Pose, SimState, Twist, Wrench};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite simulation input: {0}")]
    NonFinite(String),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// Euclidean distance of the part position to the goal (orientation excluded).
pub fn goal_distance(state: &SimState) -> f64 {
    state.pose.x.hypot(state.pose.z)
}

/// Advances the part by one `cfg.dt` with semi-implicit Euler.
///
/// Normal contact damping acts on the current velocity. Friction acts on the velocity
/// predicted from the applied wrench and damping, which lets the friction cap hold
/// the part in stiction.
pub fn step(state: &SimState, applied: &Wrench, cfg: &SimConfig) -> Result<SimState, SimError> {
    if !state.is_finite() {
        return Err(SimError::NonFinite(format!("state {state:?}")));
    }
    if !applied.is_finite() {
        return Err(SimError::NonFinite(format!("applied wrench {applied:?}")));
    }
    let dt = cfg.dt;
    let tw = &state.twist;
    let predicted = Twist::new(
        tw.vx + dt * (applied.fx - cfg.lin_damping * tw.vx) / cfg.mass,
        tw.vz + dt * (applied.fz - cfg.lin_damping * tw.vz) / cfg.mass,
        tw.omega + dt * (applied.tau - cfg.rot_damping * tw.omega) / cfg.rot_inertia,
    );
    let contact = contact::contact_resolve_split(&state.pose, tw, &predicted, cfg);
    let in_contact = contact != Wrench::ZERO || is_penetrating(&state.pose, cfg);
    let twist = Twist::new(
        predicted.vx + dt * contact.fx / cfg.mass,
        predicted.vz + dt * contact.fz / cfg.mass,
        predicted.omega + dt * contact.tau / cfg.rot_inertia,
    );
    let pose = Pose::new(
        state.pose.x + dt * twist.vx,
        state.pose.z + dt * twist.vz,
        normalize_angle(state.pose.theta + dt * twist.omega),
    );
    let next = SimState {
        pose,
        twist,
        contact_wrench: contact,
        t: state.t + dt,
        in_contact,
    };
    if !next.is_finite() {
        return Err(SimError::NonFinite(format!(
            "step diverged from {state:?} under {applied:?}"
        )));
    }
    Ok(next)
}

/// Lowest point of the peg over the whole start box lies above the top surface.
fn start_box_clear(cfg: &SimConfig) -> bool {
    let b = &cfg.start_box;
    let max_abs_theta = b.theta[0].abs().max(b.theta[1].abs());
    // lowest corner depth below the center, maximal at atan(w / h)
    let worst = max_abs_theta.min(cfg.part_half_width.atan2(cfg.part_half_height));
    let reach = cfg.part_half_height * worst.cos() + cfg.part_half_width * worst.sin();
    let surface = cfg.surface_z() + cfg.goal_perturbation.z.abs() + cfg.goal_perturbation.x.abs();
    b.z[0] - reach > surface
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Samples a resting start pose uniformly from `cfg.start_box`.
pub fn random_start(cfg: &SimConfig, rng: &mut impl Rng) -> Result<SimState, SimError> {
    cfg.validate()?;
    if !start_box_clear(cfg) {
        return Err(SimError::Config(
            "start_box overlaps the hole geometry".into(),
        ));
    }
    let b = &cfg.start_box;
    let pose = Pose::new(uniform(rng, b.x), uniform(rng, b.z), uniform(rng, b.theta));
    debug_assert!(!is_penetrating(&pose, cfg));
    Ok(SimState::at_rest(pose))
}

/// Owns a configuration and the evolving state of one part.
#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    state: SimState,
}

impl Simulator {
    pub fn new(cfg: SimConfig, state: SimState) -> Result<Self, SimError> {
        cfg.validate()?;
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn reset(&mut self, state: SimState) {
        self.state = state;
    }

    pub fn step(&mut self, applied: &Wrench) -> Result<&SimState, SimError> {
        self.state = step(&self.state, applied, &self.cfg)?;
        Ok(&self.state)
    }

    /// Moves the part kinematically (e.g. rigidly held by a robot) and measures the
    /// contact reaction at the new pose.
    pub fn follow(&mut self, pose: Pose, twist: Twist, dt: f64) -> Result<&SimState, SimError> {
        if !(pose.is_finite() && twist.is_finite()) {
            return Err(SimError::NonFinite(format!(
                "follow target {pose:?} {twist:?}"
            )));
        }
        let pose = Pose::new(pose.x, pose.z, normalize_angle(pose.theta));
        let contact = contact_resolve(&pose, &twist, &self.cfg);
        self.state = SimState {
            pose,
            twist,
            contact_wrench: contact,
            t: self.state.t + dt,
            in_contact: contact != Wrench::ZERO || is_penetrating(&pose, &self.cfg),
        };
        Ok(&self.state)
    }

    pub fn goal_distance(&self) -> f64 {
        goal_distance(&self.state)
    }
}
