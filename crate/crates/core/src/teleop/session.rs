//! Transport-independent session logic: zero-order hold of the client wrench,
//! liveness decay, recording and reset. Time is counted in simulation ticks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::protocol::{scale_input, ClientMessage, ErrorCode, ServerMessage, StateFrame};
use crate::demos::{DemoSample, Demonstration, Source};
use crate::sim::{random_start, SimConfig, SimError, SimState, Simulator, Wrench};

/// Timing knobs of a session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionTiming {
    /// Client silence (s) after which the held wrench starts to decay.
    pub liveness: f64,
    /// Duration (s) of the linear ramp from the held wrench to zero.
    pub decay: f64,
}

impl Default for SessionTiming {
    fn default() -> Self {
        Self {
            liveness: 0.5,
            decay: 0.2,
        }
    }
}

pub struct Session {
    id: u64,
    sim: Simulator,
    timing: SessionTiming,
    held: Wrench,
    /// Ticks since the last wrench message.
    silent_ticks: u64,
    recording: Option<Vec<DemoSample>>,
    demos_recorded: usize,
}

impl Session {
    pub fn new(
        id: u64,
        cfg: SimConfig,
        timing: SessionTiming,
        seed: u64,
    ) -> Result<Self, SimError> {
        let start = random_start(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(Self {
            id,
            sim: Simulator::new(cfg, start)?,
            timing,
            held: Wrench::ZERO,
            silent_ticks: 0,
            recording: None,
            demos_recorded: 0,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn state(&self) -> &SimState {
        self.sim.state()
    }

    pub fn config(&self) -> &SimConfig {
        self.sim.config()
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    pub fn hello(&self, state_rate: f64) -> ServerMessage {
        let cfg = self.sim.config();
        ServerMessage::Hello {
            version: super::protocol::PROTOCOL_VERSION,
            session: self.id,
            dt: cfg.dt,
            state_rate,
            wrench_limits: cfg.wrench_limits,
            geometry: super::protocol::Geometry::of(cfg),
        }
    }

    pub fn frame(&self) -> StateFrame {
        StateFrame::new(self.sim.state(), self.is_recording())
    }

    /// Wrench applied on the next tick after hold and decay.
    pub fn applied_wrench(&self) -> Wrench {
        let dt = self.sim.config().dt;
        let silent = self.silent_ticks as f64 * dt;
        if silent <= self.timing.liveness {
            return self.held;
        }
        let left = 1.0 - (silent - self.timing.liveness) / self.timing.decay;
        if left <= 0.0 {
            Wrench::ZERO
        } else {
            self.held * left
        }
    }

    /// Advances the simulation by one step, recording the sample first.
    pub fn tick(&mut self) -> Result<(), SimError> {
        let w = self.applied_wrench();
        let s = *self.sim.state();
        if let Some(buf) = self.recording.as_mut() {
            let t = buf.len() as f64 * self.sim.config().dt;
            buf.push(DemoSample {
                t,
                pose: s.pose,
                twist: s.twist,
                wrench: w,
            });
        }
        self.sim.step(&w)?;
        self.silent_ticks = self.silent_ticks.saturating_add(1);
        Ok(())
    }

    /// Handles one client message. A finished recording is returned alongside the reply.
    pub fn handle(&mut self, msg: ClientMessage) -> (ServerMessage, Option<Demonstration>) {
        let ack = |r: &str, detail: Option<String>| ServerMessage::Ack {
            request: r.into(),
            detail,
            duration: None,
        };
        let err = |code, m: &str| ServerMessage::Error {
            code,
            message: m.into(),
        };
        match msg {
            ClientMessage::Wrench { axes } => {
                match scale_input(&axes, self.sim.config().wrench_limits) {
                    Some(w) => {
                        self.held = w;
                        self.silent_ticks = 0;
                        (ack("wrench", None), None)
                    }
                    None => (
                        err(ErrorCode::BadRequest, "wrench needs three finite axes"),
                        None,
                    ),
                }
            }
            ClientMessage::StartRecording => {
                if self.recording.is_some() {
                    return (err(ErrorCode::Recording, "already recording"), None);
                }
                self.recording = Some(Vec::with_capacity(4096));
                (ack("start_recording", None), None)
            }
            ClientMessage::StopRecording { success } => {
                let Some(mut samples) = self.recording.take() else {
                    return (err(ErrorCode::Recording, "not recording"), None);
                };
                let s = *self.sim.state();
                let t = samples.len() as f64 * self.sim.config().dt;
                samples.push(DemoSample {
                    t,
                    pose: s.pose,
                    twist: s.twist,
                    wrench: Wrench::ZERO,
                });
                let id = format!("session-{}-{:04}", self.id, self.demos_recorded);
                let duration = t;
                self.demos_recorded += 1;
                let demo = Demonstration {
                    id: id.clone(),
                    sim_config_hash: self.sim.config().hash(),
                    dt: self.sim.config().dt,
                    samples,
                    success,
                    source: Source::Human,
                };
                let reply = ServerMessage::Ack {
                    request: "stop_recording".into(),
                    detail: Some(id),
                    duration: Some(duration),
                };
                (reply, Some(demo))
            }
            ClientMessage::Reset { seed } => {
                if self.recording.is_some() {
                    return (
                        err(ErrorCode::Recording, "stop the recording before reset"),
                        None,
                    );
                }
                let seed = seed.unwrap_or(self.id);
                match random_start(self.sim.config(), &mut ChaCha8Rng::seed_from_u64(seed)) {
                    Ok(s) => {
                        self.sim.reset(s);
                        self.held = Wrench::ZERO;
                        (ack("reset", None), None)
                    }
                    Err(e) => (err(ErrorCode::Internal, &e.to_string()), None),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::step;

    fn session() -> Session {
        Session::new(1, SimConfig::default(), SessionTiming::default(), 5).unwrap()
    }

    #[test]
    fn hold_then_decay() {
        let mut s = session();
        s.handle(ClientMessage::Wrench {
            axes: vec![0.0, -1.0, 0.0],
        });
        let full = Wrench::new(0.0, -10.0, 0.0);
        for _ in 0..50 {
            assert_eq!(s.applied_wrench(), full);
            s.tick().unwrap();
        }
        s.tick().unwrap();
        let w = s.applied_wrench();
        assert!(w.fz > -10.0 && w.fz < 0.0);
        for _ in 0..20 {
            s.tick().unwrap();
        }
        assert_eq!(s.applied_wrench(), Wrench::ZERO);
    }

    #[test]
    fn recording_replays_exactly() {
        let mut s = session();
        s.handle(ClientMessage::Wrench {
            axes: vec![0.3, -0.6, 0.2],
        });
        s.tick().unwrap();
        s.handle(ClientMessage::StartRecording);
        for k in 0..120 {
            if k == 40 {
                s.handle(ClientMessage::Wrench {
                    axes: vec![-0.5, -1.0, 0.0],
                });
            }
            s.tick().unwrap();
        }
        let (_, demo) = s.handle(ClientMessage::StopRecording { success: true });
        let demo = demo.unwrap();
        assert_eq!(demo.samples.len(), 121);
        let first = demo.samples[0];
        let mut state = SimState {
            pose: first.pose,
            twist: first.twist,
            ..SimState::default()
        };
        for pair in demo.samples.windows(2) {
            state = step(&state, &pair[0].wrench, s.config()).unwrap();
            assert_eq!(state.pose, pair[1].pose);
        }
    }

    #[test]
    fn protocol_misuse_is_reported() {
        let mut s = session();
        assert!(matches!(
            s.handle(ClientMessage::StopRecording { success: true }).0,
            ServerMessage::Error { .. }
        ));
        s.handle(ClientMessage::StartRecording);
        assert!(matches!(
            s.handle(ClientMessage::StartRecording).0,
            ServerMessage::Error { .. }
        ));
        assert!(matches!(
            s.handle(ClientMessage::Reset { seed: None }).0,
            ServerMessage::Error { .. }
        ));
        assert!(matches!(
            s.handle(ClientMessage::Wrench { axes: vec![1.0] }).0,
            ServerMessage::Error { .. }
        ));
    }

    #[test]
    fn reset_uses_seeded_start() {
        let mut s = session();
        s.handle(ClientMessage::Reset { seed: Some(42) });
        let expected =
            random_start(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(*s.state(), expected);
    }
}
