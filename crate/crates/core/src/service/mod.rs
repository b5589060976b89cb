//! Live canceller-tuning sessions and their HTTP/WebSocket interface.

pub mod http;
mod session;

pub use session::{
    CancellerAck, CodeUpdate, Frame, Session, SessionHandle, SessionRegistry, SessionView, StreamSettings,
};
