//! Websocket server and command-line tools around `dronepick-core`.

pub mod cli;
pub mod server;
