//! JSON text frames exchanged on the `/session` WebSocket.

use serde::{Deserialize, Serialize};

use crate::sim::{SimConfig, SimState, Wrench};

pub const PROTOCOL_VERSION: u32 = 1;
/// Axis magnitudes below this map to zero.
pub const DEAD_ZONE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Normalized stick axes `[fx, fz, tau]` in `[-1, 1]`.
    Wrench {
        axes: Vec<f64>,
    },
    StartRecording,
    StopRecording {
        success: bool,
    },
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First frame of every session.
    Hello {
        version: u32,
        session: u64,
        dt: f64,
        state_rate: f64,
        wrench_limits: [f64; 3],
        geometry: Geometry,
    },
    State(StateFrame),
    Ack {
        request: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        detail: Option<String>,
        /// Length (s) of a finished recording.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        duration: Option<f64>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

/// Scene dimensions (m) a client needs to draw the cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub part_half_width: f64,
    pub part_half_height: f64,
    pub hole_half_width: f64,
    pub hole_depth: f64,
    pub chamfer: f64,
}

impl Geometry {
    pub fn of(cfg: &SimConfig) -> Self {
        Self {
            part_half_width: cfg.part_half_width,
            part_half_height: cfg.part_half_height,
            hole_half_width: cfg.hole_half_width,
            hole_depth: cfg.hole_depth,
            chamfer: cfg.chamfer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    BadRequest,
    Recording,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: f64,
    pub pose: [f64; 3],
    pub twist: [f64; 3],
    pub contact_wrench: [f64; 3],
    pub in_contact: bool,
    pub goal_distance: f64,
    pub recording: bool,
}

impl StateFrame {
    pub fn new(s: &SimState, recording: bool) -> Self {
        Self {
            t: s.t,
            pose: s.pose.to_array(),
            twist: s.twist.to_array(),
            contact_wrench: s.contact_wrench.to_array(),
            in_contact: s.in_contact,
            goal_distance: crate::sim::goal_distance(s),
            recording,
        }
    }
}

/// Maps normalized axes to a wrench: clamp to `[-1, 1]`, zero the dead zone, scale
/// by `limits`. Returns `None` unless exactly three finite axes are given.
pub fn scale_input(axes: &[f64], limits: [f64; 3]) -> Option<Wrench> {
    if axes.len() != 3 || axes.iter().any(|a| !a.is_finite()) {
        return None;
    }
    let v: [f64; 3] = std::array::from_fn(|i| {
        let a = axes[i].clamp(-1.0, 1.0);
        if a.abs() < DEAD_ZONE {
            0.0
        } else {
            a * limits[i]
        }
    });
    Some(Wrench::from_array(v))
}
