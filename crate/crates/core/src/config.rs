//! Simulator configuration and its flat `key = value` file format.
//!
//! Every key is optional; missing keys take the defaults listed below. Unknown
//! keys are rejected. Units are SI throughout.
//!
//! | key                   | unit  | default |
//! |-----------------------|-------|---------|
//! | `K`                   | -     | 1.0     |
//! | `tick_rate`           | Hz    | 50      |
//! | `v_max`               | m/s   | 1.0     |
//! | `tau`                 | s     | 0.5     |
//! | `cruise_alt`          | m     | 1.2     |
//! | `pick_alt`            | m     | 0.15    |
//! | `land_hand_height`    | m     | 1.0     |
//! | `r_on`                | m     | 0.05    |
//! | `r_capture`           | m     | 0.05    |
//! | `clasp_on`            | -     | 0.6     |
//! | `clasp_off`           | -     | 0.4     |
//! | `arena_{x,y}_{min,max}` | m   | -5 / 5  |
//! | `arena_z_{min,max}`   | m     | 0 / 3   |
//! | `seed`                | -     | 0       |
//! | `start_{x,y,z}`       | m     | 0, 0, 0 |
//! | `object_{x,y,z}`      | m     | 1.0, 1.5, 0 |
//! | `grabber_offset_z`    | m     | 0.10    |
//! | `delivery_{x,y}`      | m     | 0, 0    |
//! | `delivery_radius`     | m     | 0.5     |
//! | `stimulus_duration`   | s     | 3.0     |
//! | `inbound_delay_ticks` | ticks | 0       |

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Arena, Vec3};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config key `{key}`: {constraint}")]
    Invalid { key: &'static str, constraint: String },
}

impl ConfigError {
    fn invalid(key: &'static str, constraint: impl Into<String>) -> Self {
        ConfigError::Invalid { key, constraint: constraint.into() }
    }
}

/// Magnetic grabber geometry: the object hangs `offset_z` below the drone center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrabberModel {
    pub offset_z: f64,
    pub r_capture: f64,
}

/// Vertical cylinder (unbounded in z) where handover is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryZone {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

impl DeliveryZone {
    pub fn contains(&self, p: &Vec3) -> bool {
        (p.x - self.center_x).hypot(p.y - self.center_y) <= self.radius
    }
}

/// Validated simulator configuration.
///
/// Construct through [`SimConfig::default`], [`load_config`], [`parse_config`]
/// or [`SimConfig::validate`]; serialized form is the flat key set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatConfig", into = "FlatConfig")]
pub struct SimConfig {
    /// Hand-to-goal scaling coefficient.
    pub k: f64,
    pub tick_rate: f64,
    pub v_max: f64,
    /// First-order response time constant of the drone.
    pub tau: f64,
    pub cruise_alt: f64,
    pub pick_alt: f64,
    /// Hand heights strictly below this trigger landing.
    pub land_hand_height: f64,
    /// Horizontal radius inside which the drone counts as on the object.
    pub r_on: f64,
    pub clasp_on: f64,
    pub clasp_off: f64,
    pub arena: Arena,
    pub seed: u64,
    pub start: Vec3,
    pub object_start: Vec3,
    pub grabber: GrabberModel,
    pub delivery_zone: DeliveryZone,
    pub stimulus_duration: f64,
    pub inbound_delay_ticks: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::try_from(FlatConfig::default()).expect("defaults are valid")
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn r_capture(&self) -> f64 {
        self.grabber.r_capture
    }

    /// Re-checks every invariant; useful after editing fields in place.
    pub fn validate(self) -> Result<Self, ConfigError> {
        SimConfig::try_from(FlatConfig::from(self))
    }
}

/// On-disk form: one scalar per key, no nesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    #[serde(rename = "K", alias = "k")]
    pub k: f64,
    pub tick_rate: f64,
    pub v_max: f64,
    pub tau: f64,
    pub cruise_alt: f64,
    pub pick_alt: f64,
    pub land_hand_height: f64,
    pub r_on: f64,
    pub r_capture: f64,
    pub clasp_on: f64,
    pub clasp_off: f64,
    pub arena_x_min: f64,
    pub arena_x_max: f64,
    pub arena_y_min: f64,
    pub arena_y_max: f64,
    pub arena_z_min: f64,
    pub arena_z_max: f64,
    pub seed: u64,
    pub start_x: f64,
    pub start_y: f64,
    pub start_z: f64,
    pub object_x: f64,
    pub object_y: f64,
    pub object_z: f64,
    pub grabber_offset_z: f64,
    pub delivery_x: f64,
    pub delivery_y: f64,
    pub delivery_radius: f64,
    pub stimulus_duration: f64,
    pub inbound_delay_ticks: u64,
}

impl Default for FlatConfig {
    fn default() -> Self {
        FlatConfig {
            k: 1.0,
            tick_rate: 50.0,
            v_max: 1.0,
            tau: 0.5,
            cruise_alt: 1.2,
            pick_alt: 0.15,
            land_hand_height: 1.0,
            r_on: 0.05,
            r_capture: 0.05,
            clasp_on: 0.6,
            clasp_off: 0.4,
            arena_x_min: -5.0,
            arena_x_max: 5.0,
            arena_y_min: -5.0,
            arena_y_max: 5.0,
            arena_z_min: 0.0,
            arena_z_max: 3.0,
            seed: 0,
            start_x: 0.0,
            start_y: 0.0,
            start_z: 0.0,
            object_x: 1.0,
            object_y: 1.5,
            object_z: 0.0,
            grabber_offset_z: 0.10,
            delivery_x: 0.0,
            delivery_y: 0.0,
            delivery_radius: 0.5,
            stimulus_duration: 3.0,
            inbound_delay_ticks: 0,
        }
    }
}

impl From<SimConfig> for FlatConfig {
    fn from(c: SimConfig) -> Self {
        FlatConfig {
            k: c.k,
            tick_rate: c.tick_rate,
            v_max: c.v_max,
            tau: c.tau,
            cruise_alt: c.cruise_alt,
            pick_alt: c.pick_alt,
            land_hand_height: c.land_hand_height,
            r_on: c.r_on,
            r_capture: c.grabber.r_capture,
            clasp_on: c.clasp_on,
            clasp_off: c.clasp_off,
            arena_x_min: c.arena.min.x,
            arena_x_max: c.arena.max.x,
            arena_y_min: c.arena.min.y,
            arena_y_max: c.arena.max.y,
            arena_z_min: c.arena.min.z,
            arena_z_max: c.arena.max.z,
            seed: c.seed,
            start_x: c.start.x,
            start_y: c.start.y,
            start_z: c.start.z,
            object_x: c.object_start.x,
            object_y: c.object_start.y,
            object_z: c.object_start.z,
            grabber_offset_z: c.grabber.offset_z,
            delivery_x: c.delivery_zone.center_x,
            delivery_y: c.delivery_zone.center_y,
            delivery_radius: c.delivery_zone.radius,
            stimulus_duration: c.stimulus_duration,
            inbound_delay_ticks: c.inbound_delay_ticks,
        }
    }
}

impl TryFrom<FlatConfig> for SimConfig {
    type Error = ConfigError;

    fn try_from(f: FlatConfig) -> Result<Self, Self::Error> {
        let finite = [
            ("K", f.k),
            ("tick_rate", f.tick_rate),
            ("v_max", f.v_max),
            ("tau", f.tau),
            ("cruise_alt", f.cruise_alt),
            ("pick_alt", f.pick_alt),
            ("land_hand_height", f.land_hand_height),
            ("r_on", f.r_on),
            ("r_capture", f.r_capture),
            ("clasp_on", f.clasp_on),
            ("clasp_off", f.clasp_off),
            ("arena_x_min", f.arena_x_min),
            ("arena_x_max", f.arena_x_max),
            ("arena_y_min", f.arena_y_min),
            ("arena_y_max", f.arena_y_max),
            ("arena_z_min", f.arena_z_min),
            ("arena_z_max", f.arena_z_max),
            ("start_x", f.start_x),
            ("start_y", f.start_y),
            ("start_z", f.start_z),
            ("object_x", f.object_x),
            ("object_y", f.object_y),
            ("object_z", f.object_z),
            ("grabber_offset_z", f.grabber_offset_z),
            ("delivery_x", f.delivery_x),
            ("delivery_y", f.delivery_y),
            ("delivery_radius", f.delivery_radius),
            ("stimulus_duration", f.stimulus_duration),
        ];
        for (key, value) in finite {
            if !value.is_finite() {
                return Err(ConfigError::invalid(key, "must be finite"));
            }
        }

        let positive = [
            ("K", f.k),
            ("tick_rate", f.tick_rate),
            ("v_max", f.v_max),
            ("tau", f.tau),
            ("pick_alt", f.pick_alt),
            ("r_on", f.r_on),
            ("r_capture", f.r_capture),
            ("grabber_offset_z", f.grabber_offset_z),
            ("delivery_radius", f.delivery_radius),
        ];
        for (key, value) in positive {
            if value <= 0.0 {
                return Err(ConfigError::invalid(key, format!("must be > 0, got {value}")));
            }
        }

        if f.tau < 1.0 / f.tick_rate {
            return Err(ConfigError::invalid(
                "tau",
                format!("must be >= 1/tick_rate = {}, got {}", 1.0 / f.tick_rate, f.tau),
            ));
        }
        if f.pick_alt >= f.cruise_alt {
            return Err(ConfigError::invalid(
                "pick_alt",
                format!("pick_alt ({}) must be < cruise_alt ({})", f.pick_alt, f.cruise_alt),
            ));
        }
        if f.land_hand_height < 0.0 {
            return Err(ConfigError::invalid("land_hand_height", "must be >= 0"));
        }
        if f.r_capture > f.r_on {
            return Err(ConfigError::invalid(
                "r_capture",
                format!("r_capture ({}) must be <= r_on ({})", f.r_capture, f.r_on),
            ));
        }
        if !(0.0..=1.0).contains(&f.clasp_off) {
            return Err(ConfigError::invalid("clasp_off", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&f.clasp_on) {
            return Err(ConfigError::invalid("clasp_on", "must lie in [0, 1]"));
        }
        if f.clasp_off >= f.clasp_on {
            return Err(ConfigError::invalid(
                "clasp_off",
                format!("clasp_off ({}) must be < clasp_on ({})", f.clasp_off, f.clasp_on),
            ));
        }
        for (key, lo, hi) in [
            ("arena_x_max", f.arena_x_min, f.arena_x_max),
            ("arena_y_max", f.arena_y_min, f.arena_y_max),
            ("arena_z_max", f.arena_z_min, f.arena_z_max),
        ] {
            if lo >= hi {
                return Err(ConfigError::invalid(key, format!("max ({hi}) must exceed min ({lo})")));
            }
        }
        let arena = Arena::new(
            Vec3::new(f.arena_x_min, f.arena_y_min, f.arena_z_min),
            Vec3::new(f.arena_x_max, f.arena_y_max, f.arena_z_max),
        );
        for (key, alt) in [("cruise_alt", f.cruise_alt), ("pick_alt", f.pick_alt)] {
            if alt < arena.min.z || alt > arena.max.z {
                return Err(ConfigError::invalid(key, "must lie inside the arena z range"));
            }
        }
        let start = Vec3::new(f.start_x, f.start_y, f.start_z);
        if !arena.contains(&start) {
            return Err(ConfigError::invalid("start_x", "start position must lie inside the arena"));
        }
        let object_start = Vec3::new(f.object_x, f.object_y, f.object_z);
        if !arena.contains(&object_start) {
            return Err(ConfigError::invalid("object_x", "object position must lie inside the arena"));
        }
        if f.stimulus_duration < 0.0 {
            return Err(ConfigError::invalid("stimulus_duration", "must be >= 0"));
        }

        Ok(SimConfig {
            k: f.k,
            tick_rate: f.tick_rate,
            v_max: f.v_max,
            tau: f.tau,
            cruise_alt: f.cruise_alt,
            pick_alt: f.pick_alt,
            land_hand_height: f.land_hand_height,
            r_on: f.r_on,
            clasp_on: f.clasp_on,
            clasp_off: f.clasp_off,
            arena,
            seed: f.seed,
            start,
            object_start,
            grabber: GrabberModel { offset_z: f.grabber_offset_z, r_capture: f.r_capture },
            delivery_zone: DeliveryZone {
                center_x: f.delivery_x,
                center_y: f.delivery_y,
                radius: f.delivery_radius,
            },
            stimulus_duration: f.stimulus_duration,
            inbound_delay_ticks: f.inbound_delay_ticks,
        })
    }
}

/// Parses config text. Either every key is valid or the error names the
/// offending key; no partially-applied config is ever returned.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let flat: FlatConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
    SimConfig::try_from(flat)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Renders a config in the file format accepted by [`parse_config`].
pub fn render_config(cfg: &SimConfig) -> String {
    toml::to_string(&FlatConfig::from(cfg.clone())).expect("flat config always serializes")
}
