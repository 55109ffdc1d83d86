//! Teleoperation service: a human steers the part over a WebSocket and records
//! demonstrations.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{scale_input, ClientMessage, ServerMessage, StateFrame, PROTOCOL_VERSION};
pub use server::{router, serve, ServerConfig};
pub use session::{Session, SessionTiming};
