//! WebSocket server and scripted client for live sessions.

pub mod client;
pub mod server;
