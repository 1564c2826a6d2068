//! Vibrotactile cue engine.
//!
//! The object's horizontal offset from the drone selects one of four patterns
//! (or silence). Each pattern assigns one intensity level per finger, ordered
//! thumb to little finger, and every level maps to a PWM duty cycle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternId {
    #[serde(rename = "OB")]
    OnObject,
    #[serde(rename = "MR")]
    MoveRight,
    #[serde(rename = "MF")]
    MoveForward,
    #[serde(rename = "ML")]
    MoveLeft,
    /// No vibration. Also emitted when the object is behind the drone, for
    /// which no cue exists.
    #[serde(rename = "None")]
    Silent,
}

impl PatternId {
    /// The four presentable cues in table order.
    pub const CUES: [PatternId; 4] =
        [PatternId::OnObject, PatternId::MoveRight, PatternId::MoveForward, PatternId::MoveLeft];

    pub const ALL: [PatternId; 5] = [
        PatternId::OnObject,
        PatternId::MoveRight,
        PatternId::MoveForward,
        PatternId::MoveLeft,
        PatternId::Silent,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            PatternId::OnObject => "OB",
            PatternId::MoveRight => "MR",
            PatternId::MoveForward => "MF",
            PatternId::MoveLeft => "ML",
            PatternId::Silent => "None",
        }
    }

    /// Identifier used in the glove wire frame.
    pub fn wire_id(self) -> u8 {
        match self {
            PatternId::Silent => 0,
            PatternId::OnObject => 1,
            PatternId::MoveRight => 2,
            PatternId::MoveForward => 3,
            PatternId::MoveLeft => 4,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<PatternId> {
        PatternId::ALL.into_iter().find(|p| p.wire_id() == id)
    }

    /// Row/column index in confusion tables; `None` for `Silent`.
    pub fn cue_index(self) -> Option<usize> {
        PatternId::CUES.iter().position(|p| *p == self)
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown pattern `{0}` (expected OB, MR, MF, ML or None)")]
pub struct UnknownPattern(pub String);

impl FromStr for PatternId {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternId::ALL
            .into_iter()
            .find(|p| p.short_name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownPattern(s.to_string()))
    }
}

/// Per-finger vibration intensity, in the glove's nominal units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u16", try_from = "u16")]
pub enum IntensityLevel {
    Off,
    Low,
    Mid,
    High,
}

impl IntensityLevel {
    pub fn value(self) -> u16 {
        match self {
            IntensityLevel::Off => 0,
            IntensityLevel::Low => 100,
            IntensityLevel::Mid => 150,
            IntensityLevel::High => 200,
        }
    }
}

impl From<IntensityLevel> for u16 {
    fn from(level: IntensityLevel) -> u16 {
        level.value()
    }
}

impl TryFrom<u16> for IntensityLevel {
    type Error = String;

    fn try_from(v: u16) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(IntensityLevel::Off),
            100 => Ok(IntensityLevel::Low),
            150 => Ok(IntensityLevel::Mid),
            200 => Ok(IntensityLevel::High),
            other => Err(format!("intensity {other} is not one of 0, 100, 150, 200")),
        }
    }
}

/// Picks the cue for an object at `object_xy` seen from a drone at `drone_xy`.
///
/// Within `r_on` the drone is on the object. Otherwise the dominant axis of
/// the offset wins, with ties going to the lateral cue.
pub fn select_pattern(object_xy: (f64, f64), drone_xy: (f64, f64), r_on: f64) -> PatternId {
    let dx = object_xy.0 - drone_xy.0;
    let dy = object_xy.1 - drone_xy.1;
    if dx.hypot(dy) <= r_on {
        PatternId::OnObject
    } else if dx.abs() >= dy.abs() {
        if dx > 0.0 {
            PatternId::MoveRight
        } else {
            PatternId::MoveLeft
        }
    } else if dy > 0.0 {
        PatternId::MoveForward
    } else {
        PatternId::Silent
    }
}

/// Finger layout `[thumb, index, middle, ring, little]` for each pattern.
pub fn pattern_intensities(p: PatternId) -> [IntensityLevel; 5] {
    use IntensityLevel::*;
    match p {
        PatternId::OnObject => [High; 5],
        PatternId::MoveRight => [High, Mid, Mid, Mid, Low],
        PatternId::MoveLeft => [Low, Mid, Mid, Mid, High],
        PatternId::MoveForward => [Low, High, High, High, Low],
        PatternId::Silent => [Off; 5],
    }
}

/// Affine map from the 100..200 intensity range onto 0.5..1.0 duty; Off is 0.
pub fn intensity_to_duty(level: IntensityLevel) -> f64 {
    match level {
        IntensityLevel::Off => 0.0,
        level => 0.5 + (f64::from(level.value()) - 100.0) / (200.0 - 100.0) * 0.5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTactileFrame")]
pub struct TactileFrame {
    pub pattern: PatternId,
    pub fingers: [IntensityLevel; 5],
    pub duties: [f64; 5],
}

#[derive(Deserialize)]
struct RawTactileFrame {
    pattern: PatternId,
    fingers: [IntensityLevel; 5],
    duties: [f64; 5],
}

impl TryFrom<RawTactileFrame> for TactileFrame {
    type Error = String;

    fn try_from(raw: RawTactileFrame) -> Result<Self, Self::Error> {
        for (i, (level, duty)) in raw.fingers.iter().zip(raw.duties).enumerate() {
            if intensity_to_duty(*level) != duty {
                return Err(format!("duties[{i}] = {duty} does not match finger intensity {}", level.value()));
            }
        }
        if raw.pattern == PatternId::Silent && raw.fingers.iter().any(|l| *l != IntensityLevel::Off) {
            return Err("pattern None must have every finger Off".to_string());
        }
        Ok(TactileFrame { pattern: raw.pattern, fingers: raw.fingers, duties: raw.duties })
    }
}

impl TactileFrame {
    pub fn from_pattern(pattern: PatternId) -> Self {
        let fingers = pattern_intensities(pattern);
        TactileFrame { pattern, fingers, duties: fingers.map(intensity_to_duty) }
    }

    pub fn silent() -> Self {
        Self::from_pattern(PatternId::Silent)
    }
}

pub const GLOVE_SYNC: u8 = 0xA5;
pub const GLOVE_FRAME_LEN: usize = 8;

fn xor_checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

/// Serial frame for the glove controller:
/// `[sync, pattern, thumb, index, middle, ring, little, xor(bytes 0..7)]`,
/// duties quantized as `round(duty * 255)`.
pub fn encode_glove_frame(frame: &TactileFrame) -> [u8; GLOVE_FRAME_LEN] {
    let mut out = [0u8; GLOVE_FRAME_LEN];
    out[0] = GLOVE_SYNC;
    out[1] = frame.pattern.wire_id();
    for (slot, duty) in out[2..7].iter_mut().zip(frame.duties) {
        *slot = (duty.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    out[7] = xor_checksum(&out[..7]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GloveFrameError {
    #[error("glove frame must be {GLOVE_FRAME_LEN} bytes, got {0}")]
    Length(usize),
    #[error("bad sync byte {0:#04x}")]
    Sync(u8),
    #[error("checksum mismatch: expected {expected:#04x}, got {actual:#04x}")]
    Checksum { expected: u8, actual: u8 },
    #[error("unknown pattern id {0}")]
    Pattern(u8),
}

/// What a glove controller recovers from one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GloveCommand {
    pub pattern: PatternId,
    /// Quantized duties, thumb to little finger.
    pub duty_bytes: [u8; 5],
}

pub fn decode_glove_frame(bytes: &[u8]) -> Result<GloveCommand, GloveFrameError> {
    if bytes.len() != GLOVE_FRAME_LEN {
        return Err(GloveFrameError::Length(bytes.len()));
    }
    let expected = xor_checksum(&bytes[..7]);
    if expected != bytes[7] {
        return Err(GloveFrameError::Checksum { expected, actual: bytes[7] });
    }
    if bytes[0] != GLOVE_SYNC {
        return Err(GloveFrameError::Sync(bytes[0]));
    }
    let pattern = PatternId::from_wire_id(bytes[1]).ok_or(GloveFrameError::Pattern(bytes[1]))?;
    let mut duty_bytes = [0u8; 5];
    duty_bytes.copy_from_slice(&bytes[2..7]);
    Ok(GloveCommand { pattern, duty_bytes })
}
