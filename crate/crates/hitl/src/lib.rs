//! Human-in-the-loop AdapMen sessions over a WebSocket.
//!
//! The environment pauses while an intervention request is outstanding. The
//! gate uses the environment's exact `Q*` against the learner's action
//! distribution; the client only supplies the expert labels.

pub mod log;
pub mod protocol;
pub mod server;
pub mod session;

pub use log::{replay, LogLine, Replay, ReplayError, SessionLog};
pub use protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};
pub use server::{router, serve, ServerConfig};
pub use session::{Applied, Session, SessionConfig, SessionError, SessionInput, SessionSnapshot};
