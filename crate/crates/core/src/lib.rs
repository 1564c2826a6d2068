//! Deterministic simulator for hand-teleoperated drone picking.
//!
//! The operator steers a quadcopter by moving one hand, clasps to make it
//! descend onto an object and pick it up with a magnetic grabber, and feels
//! the object's direction as vibration patterns on five fingertips. The crate
//! holds everything that does not touch the network:
//!
//! - [`types`]: world frame, arena, state types
//! - [`config`]: flat key-value configuration
//! - [`teleop`]: hand-to-goal law, clasp detection, altitude rules
//! - [`drone`]: motion model and grabber
//! - [`haptics`]: cue selection, finger intensities, glove wire frame
//! - [`mission`]: pick-and-deliver stages, event log, metrics
//! - [`trial`]: recognition trials and their analysis
//! - [`protocol`]: client/server message codec
//! - [`sim`]: the per-tick pipeline
//! - [`session`]: session recording and replay

pub mod config;
pub mod drone;
pub mod haptics;
pub mod mission;
pub mod protocol;
pub mod session;
pub mod sim;
pub mod teleop;
pub mod trial;
pub mod types;

pub use config::{load_config, parse_config, ConfigError, SimConfig};
pub use haptics::{PatternId, TactileFrame};
pub use mission::{MissionStage, SessionLog};
pub use protocol::{InboundKind, InboundMsg, OutboundMsg, ServerMsg};
pub use sim::Simulator;
pub use types::{DroneMode, DroneState, HandSample, TargetObject, Vec3, WorldState};
