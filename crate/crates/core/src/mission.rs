//! Pick-and-deliver mission: approach the object, pick it, bring it to the
//! operator, hand it over.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DeliveryZone;
use crate::drone::ALTITUDE_TOLERANCE;
use crate::haptics::PatternId;
use crate::types::{DroneMode, Vec3, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissionStage {
    Approach,
    Pick,
    Deliver,
    Handover,
    Complete,
    Aborted,
}

impl MissionStage {
    pub fn is_terminal(self) -> bool {
        matches!(self, MissionStage::Complete | MissionStage::Aborted)
    }
}

/// One stage step per call; landing aborts any unfinished mission.
pub fn advance(
    stage: MissionStage,
    world: &WorldState,
    engaged: bool,
    delivery_zone: &DeliveryZone,
    cruise_alt: f64,
) -> MissionStage {
    use MissionStage::*;
    if stage.is_terminal() {
        return stage;
    }
    let drone = &world.drone;
    if drone.mode == DroneMode::Landing {
        return Aborted;
    }
    let attached = world.object.attached;
    match stage {
        Approach if engaged && drone.mode == DroneMode::Picking => Pick,
        Pick if attached
            && drone.mode == DroneMode::Cruise
            && (drone.position.z - cruise_alt).abs() <= ALTITUDE_TOLERANCE =>
        {
            Deliver
        }
        Deliver if attached && delivery_zone.contains(&drone.position) => Handover,
        Handover if !attached => Complete,
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    StageEntered { stage: MissionStage },
    ObjectAttached { position: Vec3 },
    ObjectReleased { position: Vec3 },
    PatternChanged { from: PatternId, to: PatternId },
    ClaspChanged { engaged: bool },
    LandTriggered { hand_height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl MissionEvent {
    pub fn new(tick: u64, kind: EventKind) -> Self {
        Self { tick, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("event at tick {tick} precedes last logged tick {last}")]
    OutOfOrder { tick: u64, last: u64 },
}

/// Append-only, tick-ordered event log for one mission.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionLog {
    events: Vec<MissionEvent>,
    /// Last simulated tick of the session, if known.
    pub end_tick: Option<u64>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[MissionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.events.last().map(|e| e.tick)
    }

    /// Appends `event`; equal ticks are fine, going backwards is not.
    pub fn record_event(&mut self, event: MissionEvent) -> Result<(), LogError> {
        if let Some(last) = self.last_tick() {
            if event.tick < last {
                return Err(LogError::OutOfOrder { tick: event.tick, last });
            }
        }
        self.events.push(event);
        Ok(())
    }

    /// Stages entered, in order.
    pub fn stages(&self) -> Vec<MissionStage> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::StageEntered { stage } => Some(stage),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    /// Seconds from mission start to attachment.
    pub time_to_pick: Option<f64>,
    /// Seconds from attachment to release.
    pub time_to_deliver: Option<f64>,
    /// Fraction of the session spent under each pattern; sums to 1.
    pub pattern_time_shares: BTreeMap<PatternId, f64>,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("session log must begin with StageEntered(Approach)")]
    MissingStart,
    #[error("tick_rate must be positive")]
    TickRate,
    #[error("inconsistent log: {0}")]
    Inconsistent(&'static str),
}

pub fn metrics(log: &SessionLog, tick_rate: f64) -> Result<MissionMetrics, MetricsError> {
    if !(tick_rate.is_finite() && tick_rate > 0.0) {
        return Err(MetricsError::TickRate);
    }
    let start = match log.events().first() {
        Some(MissionEvent { tick, kind: EventKind::StageEntered { stage: MissionStage::Approach } }) => *tick,
        _ => return Err(MetricsError::MissingStart),
    };

    let attach = log
        .events()
        .iter()
        .find(|e| matches!(e.kind, EventKind::ObjectAttached { .. }))
        .map(|e| e.tick);
    let release = attach.and_then(|a| {
        log.events()
            .iter()
            .find(|e| e.tick >= a && matches!(e.kind, EventKind::ObjectReleased { .. }))
            .map(|e| e.tick)
    });
    let completed = log.stages().contains(&MissionStage::Complete);
    if completed && attach.is_none() {
        return Err(MetricsError::Inconsistent("mission completed without an ObjectAttached event"));
    }
    if completed && release.is_none() {
        return Err(MetricsError::Inconsistent("mission completed without an ObjectReleased event"));
    }

    let end = log.end_tick.or(log.last_tick()).unwrap_or(start).max(start);
    let mut ticks_per_pattern: BTreeMap<PatternId, u64> = PatternId::ALL.iter().map(|p| (*p, 0)).collect();
    let mut current = PatternId::Silent;
    let mut since = start;
    for e in log.events() {
        if let EventKind::PatternChanged { to, .. } = e.kind {
            let at = e.tick.clamp(start, end);
            *ticks_per_pattern.entry(current).or_default() += at - since;
            current = to;
            since = at;
        }
    }
    *ticks_per_pattern.entry(current).or_default() += end - since;

    let total: u64 = ticks_per_pattern.values().sum();
    let pattern_time_shares = ticks_per_pattern
        .iter()
        .map(|(p, n)| {
            let share = if total == 0 {
                if *p == current { 1.0 } else { 0.0 }
            } else {
                *n as f64 / total as f64
            };
            (*p, share)
        })
        .collect();

    let seconds = |ticks: u64| ticks as f64 / tick_rate;
    Ok(MissionMetrics {
        time_to_pick: attach.map(|a| seconds(a - start.min(a))),
        time_to_deliver: attach.zip(release).map(|(a, r)| seconds(r - a)),
        pattern_time_shares,
        completed,
    })
}

/// Owns the live stage and the event log for one mission.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionTracker {
    pub stage: MissionStage,
    pub log: SessionLog,
}

impl MissionTracker {
    /// Starts a mission at `tick` with the currently playing pattern.
    pub fn start(tick: u64, pattern: PatternId) -> Self {
        let mut log = SessionLog::new();
        let mut push = |kind| log.record_event(MissionEvent::new(tick, kind)).expect("fresh log");
        push(EventKind::StageEntered { stage: MissionStage::Approach });
        if pattern != PatternId::Silent {
            push(EventKind::PatternChanged { from: PatternId::Silent, to: pattern });
        }
        MissionTracker { stage: MissionStage::Approach, log }
    }

    pub fn record(&mut self, tick: u64, kind: EventKind) -> Result<(), LogError> {
        self.log.record_event(MissionEvent::new(tick, kind))
    }

    /// Runs [`advance`] and logs a stage change if one happened.
    pub fn update(
        &mut self,
        world: &WorldState,
        engaged: bool,
        delivery_zone: &DeliveryZone,
        cruise_alt: f64,
    ) -> Result<Option<MissionStage>, LogError> {
        let next = advance(self.stage, world, engaged, delivery_zone, cruise_alt);
        if next == self.stage {
            return Ok(None);
        }
        self.stage = next;
        self.record(world.tick, EventKind::StageEntered { stage: next })?;
        Ok(Some(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::types::{DroneState, TargetObject};

    fn world(position: Vec3, mode: DroneMode, attached: bool) -> WorldState {
        WorldState {
            drone: DroneState { position, velocity: Vec3::ZERO, mode },
            object: TargetObject { position: position - Vec3::new(0.0, 0.0, 0.1), attached },
            tick: 0,
        }
    }

    fn zone() -> DeliveryZone {
        SimConfig::default().delivery_zone
    }

    #[test]
    fn approach_to_pick_on_clasp() {
        let w = world(Vec3::new(1.0, 1.5, 0.15), DroneMode::Picking, false);
        assert_eq!(advance(MissionStage::Approach, &w, true, &zone(), 1.2), MissionStage::Pick);
        assert_eq!(advance(MissionStage::Approach, &w, false, &zone(), 1.2), MissionStage::Approach);
    }

    #[test]
    fn pick_to_deliver_needs_cruise_altitude() {
        let low = world(Vec3::new(1.0, 1.5, 0.8), DroneMode::Returning, true);
        assert_eq!(advance(MissionStage::Pick, &low, false, &zone(), 1.2), MissionStage::Pick);
        let up = world(Vec3::new(1.0, 1.5, 1.195), DroneMode::Cruise, true);
        assert_eq!(advance(MissionStage::Pick, &up, false, &zone(), 1.2), MissionStage::Deliver);
        let empty = world(Vec3::new(1.0, 1.5, 1.2), DroneMode::Cruise, false);
        assert_eq!(advance(MissionStage::Pick, &empty, false, &zone(), 1.2), MissionStage::Pick);
    }

    #[test]
    fn deliver_to_handover_inside_zone() {
        let w = world(Vec3::new(0.1, -0.1, 1.2), DroneMode::Cruise, true);
        assert_eq!(advance(MissionStage::Deliver, &w, false, &zone(), 1.2), MissionStage::Handover);
        let far = world(Vec3::new(1.0, 1.0, 1.2), DroneMode::Cruise, true);
        assert_eq!(advance(MissionStage::Deliver, &far, false, &zone(), 1.2), MissionStage::Deliver);
    }

    #[test]
    fn handover_completes_on_release() {
        let w = world(Vec3::new(0.0, 0.0, 1.2), DroneMode::Cruise, false);
        assert_eq!(advance(MissionStage::Handover, &w, false, &zone(), 1.2), MissionStage::Complete);
    }

    #[test]
    fn landing_aborts_unfinished_missions() {
        let w = world(Vec3::new(1.0, 1.0, 0.5), DroneMode::Landing, false);
        for s in [MissionStage::Approach, MissionStage::Pick, MissionStage::Deliver, MissionStage::Handover] {
            assert_eq!(advance(s, &w, true, &zone(), 1.2), MissionStage::Aborted);
        }
        assert_eq!(advance(MissionStage::Complete, &w, true, &zone(), 1.2), MissionStage::Complete);
    }

    #[test]
    fn landed_drone_at_start_does_not_abort() {
        let w = world(Vec3::ZERO, DroneMode::Landed, false);
        assert_eq!(advance(MissionStage::Approach, &w, false, &zone(), 1.2), MissionStage::Approach);
    }

    #[test]
    fn log_ordering() {
        let mut log = SessionLog::new();
        log.record_event(MissionEvent::new(0, EventKind::StageEntered { stage: MissionStage::Approach }))
            .unwrap();
        assert_eq!(log.len(), 1);
        log.record_event(MissionEvent::new(9, EventKind::ClaspChanged { engaged: true })).unwrap();
        assert_eq!(
            log.record_event(MissionEvent::new(5, EventKind::ClaspChanged { engaged: false })),
            Err(LogError::OutOfOrder { tick: 5, last: 9 })
        );
        log.record_event(MissionEvent::new(
            9,
            EventKind::PatternChanged { from: PatternId::OnObject, to: PatternId::MoveRight },
        ))
        .unwrap();
        assert_eq!(log.len(), 3);
    }

    fn crafted_log() -> SessionLog {
        let mut log = SessionLog::new();
        let events = [
            (0, EventKind::StageEntered { stage: MissionStage::Approach }),
            (0, EventKind::PatternChanged { from: PatternId::Silent, to: PatternId::MoveRight }),
            (200, EventKind::PatternChanged { from: PatternId::MoveRight, to: PatternId::OnObject }),
            (250, EventKind::ObjectAttached { position: Vec3::new(1.0, 1.5, 0.05) }),
            (600, EventKind::ObjectReleased { position: Vec3::new(0.0, 0.0, 1.1) }),
            (600, EventKind::StageEntered { stage: MissionStage::Complete }),
        ];
        for (tick, kind) in events {
            log.record_event(MissionEvent::new(tick, kind)).unwrap();
        }
        log.end_tick = Some(1000);
        log
    }

    #[test]
    fn metrics_from_crafted_log() {
        let m = metrics(&crafted_log(), 50.0).unwrap();
        assert_eq!(m.time_to_pick, Some(5.0));
        // Oracle: (600 - 250) / 50
        assert_eq!(m.time_to_deliver, Some((600.0 - 250.0) / 50.0));
        assert_eq!(m.time_to_deliver, Some(7.0));
        assert!(m.completed);
        assert_eq!(m.pattern_time_shares[&PatternId::MoveRight], 0.2);
        assert_eq!(m.pattern_time_shares[&PatternId::OnObject], 0.8);
        let sum: f64 = m.pattern_time_shares.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn only_on_object_pattern() {
        let mut log = SessionLog::new();
        log.record_event(MissionEvent::new(0, EventKind::StageEntered { stage: MissionStage::Approach })).unwrap();
        log.record_event(MissionEvent::new(
            0,
            EventKind::PatternChanged { from: PatternId::Silent, to: PatternId::OnObject },
        ))
        .unwrap();
        log.end_tick = Some(100);
        let m = metrics(&log, 50.0).unwrap();
        assert_eq!(m.pattern_time_shares[&PatternId::OnObject], 1.0);
        assert_eq!(m.time_to_pick, None);
        assert!(!m.completed);

        // Zero-length session: whole share goes to the active pattern.
        log.end_tick = Some(0);
        let m = metrics(&log, 50.0).unwrap();
        assert_eq!(m.pattern_time_shares[&PatternId::OnObject], 1.0);
    }

    #[test]
    fn completed_without_attach_is_inconsistent() {
        let mut log = SessionLog::new();
        log.record_event(MissionEvent::new(0, EventKind::StageEntered { stage: MissionStage::Approach })).unwrap();
        log.record_event(MissionEvent::new(10, EventKind::StageEntered { stage: MissionStage::Complete })).unwrap();
        assert!(matches!(metrics(&log, 50.0), Err(MetricsError::Inconsistent(_))));
    }

    #[test]
    fn metrics_requires_start() {
        let mut log = SessionLog::new();
        log.record_event(MissionEvent::new(0, EventKind::ClaspChanged { engaged: true })).unwrap();
        assert_eq!(metrics(&log, 50.0), Err(MetricsError::MissingStart));
        assert_eq!(metrics(&SessionLog::new(), 50.0), Err(MetricsError::MissingStart));
    }

    #[test]
    fn event_wire_shape() {
        let e = MissionEvent::new(9, EventKind::PatternChanged { from: PatternId::OnObject, to: PatternId::MoveRight });
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["tick"], 9);
        assert_eq!(json["kind"], "PatternChanged");
        assert_eq!(json["payload"]["from"], "OB");
        assert_eq!(json["payload"]["to"], "MR");
        let back: MissionEvent = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn tracker_logs_stage_changes() {
        let mut t = MissionTracker::start(3, PatternId::MoveForward);
        assert_eq!(t.log.len(), 2);
        let mut w = world(Vec3::new(1.0, 1.5, 0.15), DroneMode::Picking, false);
        w.tick = 40;
        assert_eq!(t.update(&w, true, &zone(), 1.2).unwrap(), Some(MissionStage::Pick));
        assert_eq!(t.update(&w, true, &zone(), 1.2).unwrap(), None);
        assert_eq!(t.log.stages(), vec![MissionStage::Approach, MissionStage::Pick]);
    }
}
