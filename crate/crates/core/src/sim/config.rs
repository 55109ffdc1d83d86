use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use super::{Pose, SimError};

/// Region from which episodes start, in goal-frame coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartBox {
    pub x: [f64; 2],
    pub z: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for StartBox {
    fn default() -> Self {
        Self {
            x: [-0.015, 0.015],
            z: [0.020, 0.040],
            theta: [-0.3, 0.3],
        }
    }
}

/// Physical and geometric parameters of the planar peg-in-hole cell.
///
/// The peg is a rectangle of half extents `part_half_width` x `part_half_height`.
/// The goal pose puts the peg bottom on the hole bottom, so the hole floor sits at
/// `z = -part_half_height` and the top surface at `z = hole_depth - part_half_height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub part_half_width: f64,
    pub part_half_height: f64,
    /// Per-side clearance is `hole_half_width - part_half_width`.
    pub hole_half_width: f64,
    pub hole_depth: f64,
    pub chamfer: f64,
    pub mass: f64,
    pub rot_inertia: f64,
    pub lin_damping: f64,
    pub rot_damping: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_mu: f64,
    pub stiction_mu: f64,
    pub stiction_vel_eps: f64,
    pub dt: f64,
    /// Per-axis magnitude limits `[fx, fz, tau]`.
    pub wrench_limits: [f64; 3],
    /// Offset of the true goal relative to the estimated goal the state is reported in.
    pub goal_perturbation: Pose,
    pub start_box: StartBox,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            part_half_width: 0.005,
            part_half_height: 0.010,
            hole_half_width: 0.0052,
            hole_depth: 0.010,
            chamfer: 0.0015,
            mass: 5.0,
            rot_inertia: 0.01,
            lin_damping: 250.0,
            rot_damping: 0.5,
            contact_stiffness: 2.0e4,
            contact_damping: 100.0,
            friction_mu: 0.4,
            stiction_mu: 0.6,
            stiction_vel_eps: 1.0e-3,
            dt: 0.01,
            wrench_limits: [10.0, 10.0, 0.15],
            goal_perturbation: Pose::ZERO,
            start_box: StartBox::default(),
        }
    }
}

impl SimConfig {
    pub fn clearance(&self) -> f64 {
        self.hole_half_width - self.part_half_width
    }

    /// Height of the top surface in the (true) goal frame.
    pub fn surface_z(&self) -> f64 {
        self.hole_depth - self.part_half_height
    }

    pub fn floor_z(&self) -> f64 {
        -self.part_half_height
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("part_half_width", self.part_half_width),
            ("part_half_height", self.part_half_height),
            ("hole_depth", self.hole_depth),
            ("mass", self.mass),
            ("rot_inertia", self.rot_inertia),
            ("lin_damping", self.lin_damping),
            ("rot_damping", self.rot_damping),
            ("contact_stiffness", self.contact_stiffness),
            ("contact_damping", self.contact_damping),
            ("stiction_vel_eps", self.stiction_vel_eps),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.clearance() > 0.0) {
            return Err(SimError::Config(format!(
                "clearance must be positive (hole_half_width {} <= part_half_width {})",
                self.hole_half_width, self.part_half_width
            )));
        }
        if !(self.chamfer >= 0.0 && self.chamfer < self.hole_depth) {
            return Err(SimError::Config(format!(
                "chamfer {} must lie in [0, hole_depth)",
                self.chamfer
            )));
        }
        if !(self.friction_mu >= 0.0) {
            return Err(SimError::Config("friction_mu must be non-negative".into()));
        }
        if !(self.stiction_mu >= self.friction_mu) {
            return Err(SimError::Config(format!(
                "stiction_mu {} must be >= friction_mu {}",
                self.stiction_mu, self.friction_mu
            )));
        }
        if self
            .wrench_limits
            .iter()
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(SimError::Config("wrench_limits must be positive".into()));
        }
        if !self.goal_perturbation.is_finite() {
            return Err(SimError::Config("goal_perturbation must be finite".into()));
        }
        let b = &self.start_box;
        for (name, r) in [("x", b.x), ("z", b.z), ("theta", b.theta)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(SimError::Config(format!(
                    "start_box.{name} must be an ordered finite range"
                )));
            }
        }
        Ok(())
    }

    /// Canonical text form used for files and hashing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SimConfig serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical TOML text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.clearance() - 0.0002).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip_preserves_hash() {
        let mut cfg = SimConfig::default();
        cfg.friction_mu = 0.45;
        let back = SimConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.hash(), SimConfig::default().hash());
    }

    #[test]
    fn partial_file_falls_back_to_defaults() {
        let cfg = SimConfig::from_toml("friction_mu = 0.5\nstiction_mu = 0.9\n").unwrap();
        assert_eq!(cfg.friction_mu, 0.5);
        assert_eq!(cfg.mass, SimConfig::default().mass);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SimConfig::default();
        cfg.hole_half_width = cfg.part_half_width;
        assert!(cfg.validate().is_err());

        let mut cfg = SimConfig::default();
        cfg.stiction_mu = 0.1;
        assert!(cfg.validate().is_err());

        let mut cfg = SimConfig::default();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());

        assert!(SimConfig::from_toml("nonsense_key = 1").is_err());
    }
}
