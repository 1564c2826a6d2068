use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use dronepick_core::haptics::PatternId;
use dronepick_core::mission::{metrics, EventKind, MissionStage};
use dronepick_core::protocol::{InboundKind, OutboundMsg};
use dronepick_core::session::{mission_log, replay, SessionFile};
use dronepick_core::sim::{run_inputs, Simulator};
use dronepick_core::{DroneMode, HandSample, SimConfig, Vec3};

const END_TICK: u64 = 1500;

fn trace() -> SessionFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mission_trace.jsonl");
    SessionFile::read(BufReader::new(File::open(path).unwrap())).unwrap()
}

fn run() -> (Simulator, Vec<OutboundMsg>) {
    let t = trace();
    run_inputs(&t.config, &t.inputs, END_TICK).unwrap()
}

#[test]
fn trace_header_is_default_config() {
    assert_eq!(trace().config, SimConfig::default());
}

#[test]
fn scripted_mission_completes_in_order() {
    let (sim, telemetry) = run();
    assert_eq!(telemetry.len() as u64, END_TICK);
    let stages = sim.mission().log.stages();
    assert_eq!(
        stages,
        vec![
            MissionStage::Approach,
            MissionStage::Pick,
            MissionStage::Deliver,
            MissionStage::Handover,
            MissionStage::Complete
        ]
    );

    let mut seen = vec![telemetry[0].stage];
    for m in &telemetry {
        if *seen.last().unwrap() != m.stage {
            seen.push(m.stage);
        }
    }
    assert_eq!(seen.first(), Some(&MissionStage::Approach));
    assert_eq!(seen.last(), Some(&MissionStage::Complete));
}

#[test]
fn grabber_attaches_over_object_at_pick_altitude() {
    let (sim, telemetry) = run();
    let cfg = sim.config().clone();
    let attach_tick = sim
        .events()
        .iter()
        .find(|e| matches!(e.kind, EventKind::ObjectAttached { .. }))
        .map(|e| e.tick)
        .expect("object attached");
    let at = &telemetry[(attach_tick - 1) as usize];
    assert_eq!(at.tick, attach_tick);
    assert!(at.object.attached);
    assert_eq!(at.drone.mode, DroneMode::Picking);
    assert!((at.drone.position.z - cfg.pick_alt).abs() <= 0.01);
    let horizontal = at.drone.position.horizontal_distance(&cfg.object_start);
    assert!(horizontal <= cfg.r_capture(), "horizontal offset {horizontal}");
    let before = &telemetry[(attach_tick - 2) as usize];
    assert!(!before.object.attached);
}

#[test]
fn attached_object_hangs_rigidly() {
    let (sim, telemetry) = run();
    let offset = Vec3::new(0.0, 0.0, sim.config().grabber.offset_z);
    let attached: Vec<_> = telemetry.iter().filter(|m| m.object.attached).collect();
    assert!(attached.len() > 100);
    for m in attached {
        assert_eq!(m.object.position, m.drone.position - offset, "tick {}", m.tick);
    }
}

#[test]
fn cue_sequence_guides_to_object() {
    let (sim, _) = run();
    let changes: Vec<PatternId> = sim
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::PatternChanged { to, .. } => Some(to),
            _ => None,
        })
        .collect();
    // Object ahead-right with forward dominant, then on top of it.
    assert_eq!(&changes[..2], &[PatternId::MoveForward, PatternId::OnObject]);
}

#[test]
fn replays_are_bit_identical() {
    let (_, a) = run();
    let (_, b) = run();
    assert_eq!(a, b);
    let json_a: Vec<String> = a.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
    let json_b: Vec<String> = b.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
    assert_eq!(json_a, json_b);
}

#[test]
fn recorded_session_replays_to_same_state_and_metrics() {
    let (sim, _) = run();
    let recorded = SessionFile::from_simulator(&sim);
    let mut buf = Vec::new();
    recorded.write(&mut buf).unwrap();
    let reread = SessionFile::read(&buf[..]).unwrap();

    let replayed = replay(&reread).unwrap();
    assert_eq!(replayed.final_state(), reread.end.as_ref().unwrap().1);

    let from_log = metrics(&reread.mission_log(), 50.0).unwrap();
    let from_replay = metrics(
        &mission_log(replayed.simulator.events(), Some(replayed.simulator.world().tick)),
        50.0,
    )
    .unwrap();
    assert_eq!(from_log, from_replay);
    assert!(from_log.completed);
    assert!(from_log.time_to_pick.unwrap() > 0.0);
    assert!(from_log.time_to_deliver.unwrap() > 0.0);
    let sum: f64 = from_log.pattern_time_shares.values().sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn explicit_release_message_completes_handover() {
    let t = trace();
    // Drop the second clasp gesture and send a Release instead.
    let mut inputs: Vec<_> = t.inputs.iter().filter(|i| i.tick < 1300).cloned().collect();
    inputs.push(dronepick_core::sim::AppliedInput { tick: 1300, msg: InboundKind::Release });
    let (sim, _) = run_inputs(&t.config, &inputs, END_TICK).unwrap();
    assert_eq!(sim.stage(), MissionStage::Complete);
    assert!(!sim.world().object.attached);
}

#[test]
fn release_outside_handover_is_ignored() {
    let t = trace();
    let mut inputs: Vec<_> = t.inputs.iter().filter(|i| i.tick <= 800).cloned().collect();
    inputs.push(dronepick_core::sim::AppliedInput { tick: 900, msg: InboundKind::Release });
    let (sim, _) = run_inputs(&t.config, &inputs, 950).unwrap();
    assert_eq!(sim.stage(), MissionStage::Deliver);
    assert!(sim.world().object.attached);
}

#[test]
fn lowering_hand_mid_flight_aborts() {
    let t = trace();
    let mut inputs: Vec<_> = t.inputs.iter().filter(|i| i.tick <= 800).cloned().collect();
    inputs.push(dronepick_core::sim::AppliedInput {
        tick: 900,
        msg: InboundKind::Hand(HandSample::new(Vec3::new(1.0, 1.5, 0.9), 0.0, 18.0)),
    });
    let (sim, telemetry) = run_inputs(&t.config, &inputs, 1200).unwrap();
    assert_eq!(telemetry[900].drone.mode, DroneMode::Landing);
    assert_eq!(sim.stage(), MissionStage::Aborted);
    assert_eq!(sim.world().drone.mode, DroneMode::Landed);
}
