//! Live WebSocket bridge for a running pursuit simulation.
//!
//! Frames go out at up to 30 Hz; evader velocity commands and session
//! controls come in. The message schema lives in [`protocol`].

pub mod bridge;
pub mod protocol;

pub use bridge::{Bridge, BridgeOptions};
pub use protocol::{parse_command, Command, Frame, ProtocolError, Reply, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("network: {0}")]
    Io(#[from] std::io::Error),
    #[error("websocket handshake: {0}")]
    Handshake(String),
    #[error(transparent)]
    Sim(#[from] pursuit_core::SimError),
}
