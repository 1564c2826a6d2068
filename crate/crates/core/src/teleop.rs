//! Operator hand motion to drone commands.
//!
//! Horizontal goal: `goal = K * hand_delta + previous_goal`, clamped to the
//! arena. Vertical behavior is a small rule table driven by hand height and
//! the clasp gesture.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Arena, DroneMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("`{0}` must be finite")]
    NonFinite(&'static str),
    #[error("`{field}` = {value} is outside [0, 1]")]
    OutOfUnitRange { field: &'static str, value: f64 },
}

/// Unclamped goal law. Exposed separately so its algebra can be checked
/// without the arena interfering.
pub fn raw_goal_xy(hand_delta: (f64, f64), prev_goal: (f64, f64), k: f64) -> (f64, f64) {
    (k * hand_delta.0 + prev_goal.0, k * hand_delta.1 + prev_goal.1)
}

/// Horizontal goal from a hand displacement, clamped into the arena's x/y bounds.
pub fn goal_xy(
    hand_delta: (f64, f64),
    prev_goal: (f64, f64),
    k: f64,
    arena: &Arena,
) -> Result<(f64, f64), ValidationError> {
    for (name, v) in [
        ("hand_delta.x", hand_delta.0),
        ("hand_delta.y", hand_delta.1),
        ("prev_goal.x", prev_goal.0),
        ("prev_goal.y", prev_goal.1),
        ("K", k),
    ] {
        if !v.is_finite() {
            return Err(ValidationError::NonFinite(name));
        }
    }
    let (x, y) = raw_goal_xy(hand_delta, prev_goal, k);
    Ok((x.clamp(arena.min.x, arena.max.x), y.clamp(arena.min.y, arena.max.y)))
}

/// Two-threshold clasp detector state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClaspTracker {
    pub engaged: bool,
    pub last_flex: f64,
}

/// Hysteresis update: engage at `flex >= clasp_on`, release at
/// `flex <= clasp_off`, hold in between.
pub fn detect_clasp(
    tracker: ClaspTracker,
    flex_raw: f64,
    clasp_on: f64,
    clasp_off: f64,
) -> Result<(ClaspTracker, bool), ValidationError> {
    if !flex_raw.is_finite() {
        return Err(ValidationError::NonFinite("flex_raw"));
    }
    if !(0.0..=1.0).contains(&flex_raw) {
        return Err(ValidationError::OutOfUnitRange { field: "flex_raw", value: flex_raw });
    }
    debug_assert!(clasp_off < clasp_on);
    let engaged = if flex_raw >= clasp_on {
        true
    } else if flex_raw <= clasp_off {
        false
    } else {
        tracker.engaged
    };
    Ok((ClaspTracker { engaged, last_flex: flex_raw }, engaged))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AltitudeCommand {
    HoldCruise,
    DescendToPick,
    ReturnToCruise,
    Land,
}

/// Altitude rule table. Landing dominates: a hand below `land_hand_height`
/// lands the drone whatever the clasp state.
pub fn altitude_command(
    hand_height: f64,
    engaged: bool,
    mode: DroneMode,
    land_hand_height: f64,
) -> AltitudeCommand {
    if hand_height < land_hand_height {
        AltitudeCommand::Land
    } else if engaged {
        AltitudeCommand::DescendToPick
    } else if matches!(mode, DroneMode::Descending | DroneMode::Picking) {
        AltitudeCommand::ReturnToCruise
    } else {
        AltitudeCommand::HoldCruise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Vec3;
    use proptest::prelude::*;

    const ON: f64 = 0.6;
    const OFF: f64 = 0.4;

    #[test]
    fn zero_delta_is_fixed_point() {
        let g = goal_xy((0.0, 0.0), (1.0, 2.0), 1.0, &Arena::default()).unwrap();
        assert_eq!(g, (1.0, 2.0));
    }

    #[test]
    fn scaled_delta() {
        let (x, y) = goal_xy((0.2, -0.1), (1.0, 2.0), 0.5, &Arena::default()).unwrap();
        assert!((x - 1.10).abs() < 1e-12);
        assert!((y - 1.95).abs() < 1e-12);
    }

    #[test]
    fn goal_clamped_to_arena() {
        // Oracle: unclamped 10 * 1.0 + 4.9 = 14.9, then clamp to x_max = 5.
        let unclamped = 10.0 * 1.0 + 4.9;
        assert!(unclamped > 5.0);
        let g = goal_xy((10.0, 0.0), (4.9, 0.0), 1.0, &Arena::default()).unwrap();
        assert_eq!(g, (5.0, 0.0));
    }

    #[test]
    fn non_finite_rejected() {
        let arena = Arena::default();
        assert_eq!(
            goal_xy((f64::NAN, 0.0), (0.0, 0.0), 1.0, &arena),
            Err(ValidationError::NonFinite("hand_delta.x"))
        );
        assert_eq!(
            goal_xy((0.0, 0.0), (0.0, 0.0), f64::INFINITY, &arena),
            Err(ValidationError::NonFinite("K"))
        );
    }

    #[test]
    fn clasp_engages_above_on() {
        let (_, e) = detect_clasp(ClaspTracker::default(), 0.7, ON, OFF).unwrap();
        assert!(e);
    }

    #[test]
    fn clasp_holds_in_band() {
        let t = ClaspTracker { engaged: true, last_flex: 0.9 };
        let (t, e) = detect_clasp(t, 0.5, ON, OFF).unwrap();
        assert!(e);
        assert_eq!(t.last_flex, 0.5);
    }

    #[test]
    fn clasp_releases_below_off() {
        let t = ClaspTracker { engaged: true, last_flex: 0.9 };
        let (_, e) = detect_clasp(t, 0.3, ON, OFF).unwrap();
        assert!(!e);
    }

    #[test]
    fn clasp_thresholds_are_inclusive() {
        let (_, e) = detect_clasp(ClaspTracker::default(), ON, ON, OFF).unwrap();
        assert!(e);
        let t = ClaspTracker { engaged: true, last_flex: 1.0 };
        let (_, e) = detect_clasp(t, OFF, ON, OFF).unwrap();
        assert!(!e);
    }

    #[test]
    fn flex_out_of_range_rejected() {
        assert!(matches!(
            detect_clasp(ClaspTracker::default(), 1.2, ON, OFF),
            Err(ValidationError::OutOfUnitRange { field: "flex_raw", .. })
        ));
        assert!(detect_clasp(ClaspTracker::default(), -0.1, ON, OFF).is_err());
        assert!(detect_clasp(ClaspTracker::default(), f64::NAN, ON, OFF).is_err());
    }

    #[test]
    fn altitude_examples() {
        assert_eq!(altitude_command(1.5, false, DroneMode::Cruise, 1.0), AltitudeCommand::HoldCruise);
        assert_eq!(altitude_command(1.5, true, DroneMode::Cruise, 1.0), AltitudeCommand::DescendToPick);
        assert_eq!(altitude_command(0.8, true, DroneMode::Picking, 1.0), AltitudeCommand::Land);
    }

    #[test]
    fn opening_hand_returns_to_cruise() {
        for mode in [DroneMode::Descending, DroneMode::Picking] {
            assert_eq!(altitude_command(1.5, false, mode, 1.0), AltitudeCommand::ReturnToCruise);
        }
        assert_eq!(altitude_command(1.5, false, DroneMode::Returning, 1.0), AltitudeCommand::HoldCruise);
    }

    #[test]
    fn hand_exactly_at_threshold_does_not_land() {
        assert_eq!(altitude_command(1.0, false, DroneMode::Cruise, 1.0), AltitudeCommand::HoldCruise);
    }

    fn any_mode() -> impl Strategy<Value = DroneMode> {
        prop_oneof![
            Just(DroneMode::Cruise),
            Just(DroneMode::Descending),
            Just(DroneMode::Picking),
            Just(DroneMode::Returning),
            Just(DroneMode::Landing),
            Just(DroneMode::Landed),
        ]
    }

    proptest! {
        #[test]
        fn flex_inside_band_never_toggles(
            start in any::<bool>(),
            flex in proptest::collection::vec(0.4001f64..0.5999, 1..200),
        ) {
            let mut t = ClaspTracker { engaged: start, last_flex: 0.5 };
            for f in flex {
                let (next, e) = detect_clasp(t, f, ON, OFF).unwrap();
                prop_assert_eq!(e, start);
                t = next;
            }
        }

        #[test]
        fn low_hand_always_lands(h in 0.0f64..0.99999, engaged in any::<bool>(), mode in any_mode()) {
            prop_assert_eq!(altitude_command(h, engaged, mode, 1.0), AltitudeCommand::Land);
        }

        #[test]
        fn goal_stays_in_arena(dx in -100.0f64..100.0, dy in -100.0f64..100.0, k in 0.01f64..10.0) {
            let arena = Arena::default();
            let (x, y) = goal_xy((dx, dy), (0.0, 0.0), k, &arena).unwrap();
            prop_assert!(arena.contains(&Vec3::new(x, y, 0.0)));
        }
    }
}
