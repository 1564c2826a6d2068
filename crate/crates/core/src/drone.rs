//! Fixed-tick quadcopter motion model and the magnetic grabber.
//!
//! Motion is a first-order lag toward the goal with a speed clamp, integrated
//! with explicit Euler. Flight stabilization is out of scope; the model only
//! needs to be deterministic and to settle where the operator points.

use crate::config::{ConfigError, GrabberModel, SimConfig};
use crate::teleop::AltitudeCommand;
use crate::types::{clamp_to_arena, DroneMode, DroneState, TargetObject, Vec3, WorldState};

/// Altitude band around `pick_alt` / `cruise_alt` that counts as arrived.
pub const ALTITUDE_TOLERANCE: f64 = 0.01;

/// Height above the floor below which a landing drone is considered down.
pub const TOUCHDOWN_HEIGHT: f64 = 1e-3;

/// Advances the drone one tick toward `goal`.
pub fn step(state: DroneState, goal: Vec3, dt: f64, cfg: &SimConfig) -> DroneState {
    let mut velocity = (goal - state.position) * (1.0 / cfg.tau);
    let speed = velocity.norm();
    if speed > cfg.v_max {
        velocity = velocity * (cfg.v_max / speed);
    }
    let position = clamp_to_arena(state.position + velocity * dt, &cfg.arena);
    DroneState { position, velocity, mode: state.mode }
}

/// Mode transition requested by an altitude command, before motion.
pub fn apply_command(mode: DroneMode, cmd: AltitudeCommand) -> DroneMode {
    use DroneMode::*;
    match cmd {
        AltitudeCommand::Land => match mode {
            Landed => Landed,
            _ => Landing,
        },
        AltitudeCommand::DescendToPick => match mode {
            Picking => Picking,
            _ => Descending,
        },
        AltitudeCommand::ReturnToCruise => Returning,
        AltitudeCommand::HoldCruise => match mode {
            Returning | Descending | Picking => Returning,
            Cruise | Landing | Landed => Cruise,
        },
    }
}

/// Altitude the drone tracks in a given mode.
pub fn target_altitude(mode: DroneMode, cfg: &SimConfig) -> f64 {
    match mode {
        DroneMode::Cruise | DroneMode::Returning => cfg.cruise_alt,
        DroneMode::Descending | DroneMode::Picking => cfg.pick_alt,
        DroneMode::Landing | DroneMode::Landed => cfg.arena.min.z,
    }
}

/// Mode transitions caused by arriving at the tracked altitude, after motion.
pub fn settle(mut state: DroneState, cfg: &SimConfig) -> DroneState {
    let z = state.position.z;
    match state.mode {
        DroneMode::Descending if (z - cfg.pick_alt).abs() <= ALTITUDE_TOLERANCE => {
            state.mode = DroneMode::Picking;
        }
        DroneMode::Returning if (z - cfg.cruise_alt).abs() <= ALTITUDE_TOLERANCE => {
            state.mode = DroneMode::Cruise;
        }
        DroneMode::Landing if z - cfg.arena.min.z <= TOUCHDOWN_HEIGHT => {
            state.mode = DroneMode::Landed;
            state.position.z = cfg.arena.min.z;
            state.velocity = Vec3::ZERO;
        }
        _ => {}
    }
    state
}

/// Attaches the object when the drone hovers over it at pick altitude, and
/// keeps an attached object rigidly under the drone.
pub fn grabber_update(
    drone: &DroneState,
    object: TargetObject,
    grabber: &GrabberModel,
    pick_alt: f64,
) -> TargetObject {
    let hanging = drone.position - Vec3::new(0.0, 0.0, grabber.offset_z);
    if object.attached {
        return TargetObject { position: hanging, attached: true };
    }
    let at_pick_alt = (drone.position.z - pick_alt).abs() <= ALTITUDE_TOLERANCE;
    let over_object = drone.position.horizontal_distance(&object.position) <= grabber.r_capture;
    if drone.mode == DroneMode::Picking && at_pick_alt && over_object {
        TargetObject { position: hanging, attached: true }
    } else {
        object
    }
}

/// Explicit release: the object stays where it is, detached.
pub fn release(object: TargetObject) -> TargetObject {
    TargetObject { position: object.position, attached: false }
}

/// Initial world: drone landed at the start pose, object detached at its
/// configured spot, tick 0.
pub fn reset(cfg: &SimConfig) -> Result<WorldState, ConfigError> {
    let cfg = cfg.clone().validate()?;
    Ok(WorldState {
        drone: DroneState::landed_at(cfg.start),
        object: TargetObject { position: cfg.object_start, attached: false },
        tick: 0,
    })
}
