//! Geometric primitives and world-state types shared by every module.
//!
//! World frame: `x` points to the operator's right, `y` points forward (the
//! operator faces `+y`), `z` points up. All lengths are meters.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the operator-aligned world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Distance in the horizontal (x, y) plane.
    pub fn horizontal_distance(&self, other: &Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

/// Axis-aligned flight volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arena {
    pub min: Vec3,
    pub max: Vec3,
}

impl Arena {
    pub const fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// True when every axis has `min < max` and all bounds are finite.
    pub fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
            && self.min.z < self.max.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }
}

impl Default for Arena {
    fn default() -> Self {
        Arena::new(Vec3::new(-5.0, -5.0, 0.0), Vec3::new(5.0, 5.0, 3.0))
    }
}

/// Componentwise clamp of `p` into `arena`. Identity for points already inside.
pub fn clamp_to_arena(p: Vec3, arena: &Arena) -> Vec3 {
    Vec3::new(
        p.x.clamp(arena.min.x, arena.max.x),
        p.y.clamp(arena.min.y, arena.max.y),
        p.z.clamp(arena.min.z, arena.max.z),
    )
}

/// One operator hand measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandSample {
    /// Hand position in the world frame; `z` is the hand height above the floor.
    pub position: Vec3,
    /// Normalized flex-sensor reading, 0 = open hand, 1 = fully clasped.
    pub flex_raw: f64,
    /// Seconds since session start.
    pub timestamp: f64,
}

impl HandSample {
    pub fn new(position: Vec3, flex_raw: f64, timestamp: f64) -> Self {
        Self { position, flex_raw, timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DroneMode {
    Cruise,
    Descending,
    Picking,
    Returning,
    Landing,
    Landed,
}

impl DroneMode {
    pub fn is_airborne(self) -> bool {
        !matches!(self, DroneMode::Landed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mode: DroneMode,
}

impl DroneState {
    pub fn landed_at(position: Vec3) -> Self {
        Self { position, velocity: Vec3::ZERO, mode: DroneMode::Landed }
    }
}

/// The object to be picked. While `attached`, it hangs rigidly under the drone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetObject {
    pub position: Vec3,
    pub attached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldState {
    pub drone: DroneState,
    pub object: TargetObject,
    pub tick: u64,
}
