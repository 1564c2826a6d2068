//! The fixed-tick simulation pipeline.
//!
//! Each tick runs, in order: clasp detection, altitude rule, horizontal goal,
//! drone motion, grabber, haptic cue selection and mission update, then emits
//! one [`OutboundMsg`]. Operator input is sample-and-hold: the latest hand
//! sample is reused until a newer one arrives.
//!
//! The simulator never reads a clock. Identical configs fed identical inputs
//! at identical ticks produce identical telemetry, bit for bit.

use std::collections::VecDeque;

use thiserror::Error;

use crate::config::SimConfig;
use crate::drone::{self, apply_command, grabber_update, settle, target_altitude};
use crate::haptics::{select_pattern, PatternId, TactileFrame};
use crate::mission::{EventKind, MissionEvent, MissionStage, MissionTracker};
use crate::protocol::{InboundKind, OutboundMsg, TrialStatus};
use crate::teleop::{altitude_command, detect_clasp, goal_xy, AltitudeCommand, ClaspTracker};
use crate::trial::{make_schedule, TrialError, TrialLogEntry, TrialRunner};
use crate::types::{DroneMode, HandSample, Vec3, WorldState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("hand sample rejected: {0}")]
    Hand(String),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error("no trial is running")]
    NoTrial,
}

/// An input as it was applied: the tick it took effect on and the message.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedInput {
    pub tick: u64,
    pub msg: InboundKind,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    world: WorldState,
    clasp: ClaspTracker,
    latest_hand: Option<HandSample>,
    hand_ref: Option<Vec3>,
    goal_anchor: (f64, f64),
    teleop_goal: (f64, f64),
    goal: Vec3,
    pattern: PatternId,
    object_behind: bool,
    mission: MissionTracker,
    trial: Option<TrialRunner>,
    release_requested: bool,
    pending: VecDeque<(u64, InboundKind)>,
    applied: Vec<AppliedInput>,
    events: Vec<MissionEvent>,
    new_trial_entries: Vec<TrialLogEntry>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let cfg = cfg.validate()?;
        let world = drone::reset(&cfg)?;
        let (pattern, object_behind) = cue_for(&world, cfg.r_on);
        let mission = MissionTracker::start(0, pattern);
        let events = mission.log.events().to_vec();
        let start_xy = (world.drone.position.x, world.drone.position.y);
        Ok(Simulator {
            goal: world.drone.position,
            world,
            clasp: ClaspTracker::default(),
            latest_hand: None,
            hand_ref: None,
            goal_anchor: start_xy,
            teleop_goal: start_xy,
            pattern,
            object_behind,
            mission,
            trial: None,
            release_requested: false,
            pending: VecDeque::new(),
            applied: Vec::new(),
            events,
            new_trial_entries: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn stage(&self) -> MissionStage {
        self.mission.stage
    }

    pub fn mission(&self) -> &MissionTracker {
        &self.mission
    }

    pub fn clasp_engaged(&self) -> bool {
        self.clasp.engaged
    }

    /// Every mission event since construction, across mission restarts.
    pub fn events(&self) -> &[MissionEvent] {
        &self.events
    }

    /// Every input in the order and at the tick it was applied.
    pub fn applied_inputs(&self) -> &[AppliedInput] {
        &self.applied
    }

    pub fn trial(&self) -> Option<&TrialRunner> {
        self.trial.as_ref()
    }

    /// Trial answers recorded since the last call.
    pub fn take_trial_entries(&mut self) -> Vec<TrialLogEntry> {
        std::mem::take(&mut self.new_trial_entries)
    }

    fn now(&self) -> f64 {
        self.world.tick as f64 / self.cfg.tick_rate
    }

    /// Queues an input. It takes effect at the start of the next tick, or
    /// `inbound_delay_ticks` later when a delay is configured.
    pub fn submit(&mut self, msg: InboundKind) {
        let due = self.world.tick + self.cfg.inbound_delay_ticks;
        self.pending.push_back((due, msg));
    }

    /// Applies an input immediately, before the next tick.
    pub fn apply_input(&mut self, msg: InboundKind) -> Result<(), SimError> {
        match &msg {
            InboundKind::Hand(hand) => {
                if !hand.position.is_finite() || !hand.timestamp.is_finite() {
                    return Err(SimError::Hand("non-finite field".into()));
                }
                if !(0.0..=1.0).contains(&hand.flex_raw) {
                    return Err(SimError::Hand(format!("flex_raw {} outside [0, 1]", hand.flex_raw)));
                }
                if let Some(prev) = self.latest_hand {
                    if hand.timestamp <= prev.timestamp {
                        return Err(SimError::Hand(format!(
                            "timestamp {} not after {}",
                            hand.timestamp, prev.timestamp
                        )));
                    }
                }
                if self.hand_ref.is_none() {
                    self.hand_ref = Some(hand.position);
                    self.goal_anchor = self.teleop_goal;
                }
                self.latest_hand = Some(*hand);
            }
            InboundKind::Recalibrate => {
                self.hand_ref = self.latest_hand.map(|h| h.position);
                self.goal_anchor = self.teleop_goal;
            }
            InboundKind::Release => self.release_requested = true,
            InboundKind::StartMission => {
                if !self.world.object.attached {
                    self.world.object.position = self.cfg.object_start;
                }
                let (pattern, behind) = cue_for(&self.world, self.cfg.r_on);
                self.pattern = pattern;
                self.object_behind = behind;
                self.mission = MissionTracker::start(self.world.tick, pattern);
                self.events.extend_from_slice(self.mission.log.events());
            }
            InboundKind::StartTrial { seed, reps } => {
                let schedule = make_schedule(*seed, *reps)?;
                self.trial = Some(TrialRunner::new(schedule, self.cfg.stimulus_duration, self.now()));
            }
            InboundKind::TrialAnswer { pattern } => {
                let now = self.now();
                let runner = self.trial.as_mut().ok_or(SimError::NoTrial)?;
                if let Some(entry) = runner.answer(*pattern, now)? {
                    self.new_trial_entries.push(entry);
                }
            }
            // Role arbitration belongs to the transport.
            InboundKind::ClaimOperator => return Ok(()),
        }
        self.applied.push(AppliedInput { tick: self.world.tick, msg });
        Ok(())
    }

    fn apply_due_inputs(&mut self) -> Vec<SimError> {
        let mut errors = Vec::new();
        while let Some((due, _)) = self.pending.front() {
            if *due > self.world.tick {
                break;
            }
            let (_, msg) = self.pending.pop_front().expect("front exists");
            if let Err(e) = self.apply_input(msg) {
                errors.push(e);
            }
        }
        errors
    }

    fn log(&mut self, tick: u64, kind: EventKind) {
        let event = MissionEvent::new(tick, kind);
        self.mission.log.record_event(event.clone()).expect("ticks never go backwards");
        self.events.push(event);
    }

    /// Telemetry for the current state without advancing time.
    pub fn snapshot(&self) -> OutboundMsg {
        OutboundMsg {
            tick: self.world.tick,
            drone: self.world.drone,
            object: self.world.object,
            pattern: self.current_frame(),
            stage: self.mission.stage,
            goal: self.goal,
            object_behind: self.object_behind,
            trial: self.trial_status(),
        }
    }

    fn current_frame(&self) -> TactileFrame {
        match &self.trial {
            Some(t) if !t.is_done() => t.frame(),
            _ => TactileFrame::from_pattern(self.pattern),
        }
    }

    fn trial_status(&self) -> Option<TrialStatus> {
        self.trial.as_ref().map(|t| {
            let index = match t.phase() {
                crate::trial::TrialPhase::Stimulus { index, .. }
                | crate::trial::TrialPhase::AwaitingAnswer { index, .. } => index,
                crate::trial::TrialPhase::Done => t.schedule().sequence.len(),
            };
            TrialStatus { index, total: t.schedule().sequence.len(), state: t.phase() }
        })
    }

    /// Runs one tick. Inputs that failed validation are returned alongside
    /// the telemetry; they never stop the loop.
    pub fn tick(&mut self) -> (OutboundMsg, Vec<SimError>) {
        let errors = self.apply_due_inputs();
        let cfg = self.cfg.clone();
        let next_tick = self.world.tick + 1;
        let hand = self.latest_hand;

        // Clasp.
        let was_engaged = self.clasp.engaged;
        if let Some(h) = hand {
            let (tracker, _) = detect_clasp(self.clasp, h.flex_raw, cfg.clasp_on, cfg.clasp_off)
                .expect("hand samples are validated on input");
            self.clasp = tracker;
        }
        let engaged = self.clasp.engaged;
        if engaged != was_engaged {
            self.log(next_tick, EventKind::ClaspChanged { engaged });
            if engaged && self.mission.stage == MissionStage::Handover {
                self.release_requested = true;
            }
        }

        // Altitude rule; without any operator input the drone stays down.
        let prev_mode = self.world.drone.mode;
        let cmd = match hand {
            Some(h) => altitude_command(h.position.z, engaged, prev_mode, cfg.land_hand_height),
            None => AltitudeCommand::Land,
        };
        let mode = apply_command(prev_mode, cmd);
        if mode == DroneMode::Landing && !matches!(prev_mode, DroneMode::Landing | DroneMode::Landed) {
            let hand_height = hand.map(|h| h.position.z).unwrap_or(0.0);
            self.log(next_tick, EventKind::LandTriggered { hand_height });
        }

        // Horizontal goal relative to the calibrated hand reference.
        if let (Some(h), Some(reference)) = (hand, self.hand_ref) {
            let delta = (h.position.x - reference.x, h.position.y - reference.y);
            self.teleop_goal = goal_xy(delta, self.goal_anchor, cfg.k, &cfg.arena)
                .expect("inputs are finite");
        }
        let drone_pos = self.world.drone.position;
        let z = target_altitude(mode, &cfg);
        self.goal = match mode {
            DroneMode::Landing | DroneMode::Landed => Vec3::new(drone_pos.x, drone_pos.y, z),
            _ => Vec3::new(self.teleop_goal.0, self.teleop_goal.1, z),
        };

        // Motion.
        let mut state = self.world.drone;
        state.mode = mode;
        state = if mode == DroneMode::Landed {
            state.velocity = Vec3::ZERO;
            state
        } else {
            settle(drone::step(state, self.goal, cfg.dt(), &cfg), &cfg)
        };
        self.world.drone = state;

        // Grabber.
        let mut object = self.world.object;
        if std::mem::take(&mut self.release_requested)
            && object.attached
            && self.mission.stage == MissionStage::Handover
        {
            object = drone::release(object);
            self.log(next_tick, EventKind::ObjectReleased { position: object.position });
        }
        if self.mission.stage != MissionStage::Complete {
            let was_attached = object.attached;
            object = grabber_update(&state, object, &cfg.grabber, cfg.pick_alt);
            if object.attached && !was_attached {
                self.log(next_tick, EventKind::ObjectAttached { position: object.position });
            }
        }
        self.world.object = object;
        self.world.tick = next_tick;

        // Haptic cue; a running trial takes over the glove.
        let now = self.now();
        if let Some(t) = self.trial.as_mut() {
            t.poll(now);
        }
        let (cue, behind) = cue_for(&self.world, cfg.r_on);
        self.object_behind = behind;
        let played = match &self.trial {
            Some(t) if !t.is_done() => t.frame().pattern,
            _ => cue,
        };
        if played != self.pattern {
            self.log(next_tick, EventKind::PatternChanged { from: self.pattern, to: played });
            self.pattern = played;
        }

        // Mission.
        let world = self.world;
        if let Some(stage) = self
            .mission
            .update(&world, engaged, &cfg.delivery_zone, cfg.cruise_alt)
            .expect("ticks never go backwards")
        {
            self.events.push(MissionEvent::new(next_tick, EventKind::StageEntered { stage }));
        }

        (self.snapshot(), errors)
    }
}

fn cue_for(world: &WorldState, r_on: f64) -> (PatternId, bool) {
    let o = world.object.position;
    let d = world.drone.position;
    let pattern = select_pattern((o.x, o.y), (d.x, d.y), r_on);
    (pattern, pattern == PatternId::Silent)
}

/// Feeds `inputs` (tick, message) through a fresh simulator up to `end_tick`
/// and returns every telemetry message, tick 1 onwards.
pub fn run_inputs(
    cfg: &SimConfig,
    inputs: &[AppliedInput],
    end_tick: u64,
) -> Result<(Simulator, Vec<OutboundMsg>), SimError> {
    let mut sim = Simulator::new(cfg.clone())?;
    let mut out = Vec::with_capacity(end_tick as usize);
    let mut next = 0;
    while sim.world().tick < end_tick {
        while next < inputs.len() && inputs[next].tick <= sim.world().tick {
            sim.apply_input(inputs[next].msg.clone())?;
            next += 1;
        }
        let (msg, _) = sim.tick();
        out.push(msg);
    }
    Ok((sim, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand(x: f64, y: f64, z: f64, flex: f64, t: f64) -> InboundKind {
        InboundKind::Hand(HandSample::new(Vec3::new(x, y, z), flex, t))
    }

    fn run_ticks(sim: &mut Simulator, n: usize) -> OutboundMsg {
        let mut last = sim.snapshot();
        for _ in 0..n {
            last = sim.tick().0;
        }
        last
    }

    fn airborne() -> Simulator {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        sim.apply_input(hand(0.0, 0.0, 1.3, 0.0, 0.0)).unwrap();
        run_ticks(&mut sim, 1500);
        assert_eq!(sim.world().drone.mode, DroneMode::Cruise);
        sim
    }

    #[test]
    fn reset_snapshot() {
        let sim = Simulator::new(SimConfig::default()).unwrap();
        let m = sim.snapshot();
        assert_eq!(m.tick, 0);
        assert_eq!(m.drone.mode, DroneMode::Landed);
        assert_eq!(m.stage, MissionStage::Approach);
        assert_eq!(m.goal, Vec3::ZERO);
    }

    #[test]
    fn no_input_stays_landed() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let m = run_ticks(&mut sim, 50);
        assert_eq!(m.tick, 50);
        assert_eq!(m.drone.position, Vec3::ZERO);
        assert_eq!(m.drone.mode, DroneMode::Landed);
        assert_eq!(m.stage, MissionStage::Approach);
    }

    #[test]
    fn stationary_hand_at_goal_is_fixed_point() {
        let mut sim = airborne();
        let before = sim.world().drone.position;
        let m = sim.tick().0;
        assert!((m.drone.position - before).norm() < 1e-9);
    }

    #[test]
    fn hand_motion_moves_goal_by_k_times_delta() {
        let mut sim = airborne();
        for i in 1..=25 {
            let x = 0.5 * i as f64 / 25.0;
            sim.submit(hand(x, 0.0, 1.3, 0.0, 10.0 + i as f64 * 0.02));
            sim.tick();
        }
        let m = run_ticks(&mut sim, 300);
        assert!((m.goal.x - 0.5).abs() < 1e-12);
        assert!((m.drone.position.x - 0.5).abs() < 1e-3);
    }

    #[test]
    fn low_hand_lands_within_one_tick() {
        let mut sim = airborne();
        sim.submit(hand(0.0, 0.0, 0.9, 0.0, 20.0));
        let m = sim.tick().0;
        assert_eq!(m.drone.mode, DroneMode::Landing);
        assert_eq!(m.stage, MissionStage::Aborted);
        assert!(sim.events().iter().any(|e| matches!(e.kind, EventKind::LandTriggered { .. })));
    }

    #[test]
    fn stale_hand_sample_rejected_and_loop_continues() {
        let mut sim = airborne();
        sim.submit(hand(0.3, 0.0, 1.3, 0.0, -1.0));
        let (m, errors) = sim.tick();
        assert_eq!(errors.len(), 1);
        assert_eq!(m.goal.x, 0.0);
    }

    #[test]
    fn recalibrate_rezeroes_hand() {
        let mut sim = airborne();
        sim.submit(hand(1.0, 0.0, 1.3, 0.0, 10.0));
        run_ticks(&mut sim, 1);
        sim.submit(InboundKind::Recalibrate);
        sim.submit(hand(2.0, 0.0, 1.3, 0.0, 10.1));
        let m = run_ticks(&mut sim, 1);
        // After recalibrating at hand x = 1, moving to 2 adds one more meter.
        assert!((m.goal.x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inbound_delay_postpones_inputs() {
        let mut cfg = SimConfig::default();
        cfg.inbound_delay_ticks = 3;
        let mut sim = Simulator::new(cfg).unwrap();
        sim.submit(hand(0.0, 0.0, 1.3, 0.0, 0.0));
        for _ in 0..3 {
            sim.tick();
            assert!(sim.applied_inputs().is_empty());
        }
        sim.tick();
        assert_eq!(sim.applied_inputs().len(), 1);
        assert_eq!(sim.applied_inputs()[0].tick, 3);
    }

    #[test]
    fn trial_over_tick_loop() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        sim.apply_input(InboundKind::StartTrial { seed: 9, reps: 1 }).unwrap();
        let first = sim.trial().unwrap().schedule().sequence[0];
        let m = sim.tick().0;
        assert_eq!(m.pattern.pattern, first);
        run_ticks(&mut sim, 150);
        assert_eq!(sim.snapshot().pattern.pattern, PatternId::Silent);
        sim.submit(InboundKind::TrialAnswer { pattern: first });
        sim.tick();
        let entries = sim.take_trial_entries();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].record.shown, first);
        // Stimulus ended at t = 3.0 s (tick 150), answer applied at tick 151.
        assert!((entries[0].record.latency - 1.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn answer_without_trial_is_error() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        assert!(matches!(
            sim.apply_input(InboundKind::TrialAnswer { pattern: PatternId::OnObject }),
            Err(SimError::NoTrial)
        ));
    }
}
