//! Session recording and replay.
//!
//! A session file is line-delimited JSON. The first line is the header with
//! the full config; after it come the applied inputs and mission events in
//! tick order, and a final `end` line with the last telemetry snapshot:
//!
//! ```text
//! {"type":"header","config":{"K":1.0,"tick_rate":50.0,...}}
//! {"type":"input","tick":0,"msg":{"type":"hand","position":{...},"flex_raw":0.0,"timestamp":0.0}}
//! {"type":"event","tick":0,"kind":"StageEntered","payload":{"stage":"Approach"}}
//! {"type":"end","tick":1500,"final":{...}}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::mission::{EventKind, MissionEvent, MissionStage, SessionLog};
use crate::protocol::{InboundKind, OutboundMsg};
use crate::sim::{run_inputs, AppliedInput, SimError, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionLine {
    Header { config: SimConfig },
    Input { tick: u64, msg: InboundKind },
    Event(MissionEvent),
    End {
        tick: u64,
        #[serde(rename = "final")]
        final_state: OutboundMsg,
    },
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("session line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("session file must start with a header line")]
    MissingHeader,
    #[error("session line {line}: tick {tick} precedes tick {previous}")]
    OutOfOrder { line: usize, tick: u64, previous: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Parsed session: config, input trace, recorded events, optional end state.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFile {
    pub config: SimConfig,
    pub inputs: Vec<AppliedInput>,
    pub events: Vec<MissionEvent>,
    pub end: Option<(u64, OutboundMsg)>,
}

impl SessionFile {
    /// Captures everything a simulator has done so far.
    pub fn from_simulator(sim: &Simulator) -> Self {
        SessionFile {
            config: sim.config().clone(),
            inputs: sim.applied_inputs().to_vec(),
            events: sim.events().to_vec(),
            end: Some((sim.world().tick, sim.snapshot())),
        }
    }

    /// Tick to replay up to: the recorded end, else the last input or event.
    pub fn end_tick(&self) -> u64 {
        self.end.as_ref().map(|(t, _)| *t).unwrap_or_else(|| {
            let last_input = self.inputs.last().map(|i| i.tick + 1).unwrap_or(0);
            let last_event = self.events.last().map(|e| e.tick).unwrap_or(0);
            last_input.max(last_event)
        })
    }

    /// Lines in file order: header, then inputs and events merged by tick
    /// (inputs at tick `t` apply before the tick that logs events at `t + 1`).
    pub fn lines(&self) -> Vec<SessionLine> {
        let mut lines = vec![SessionLine::Header { config: self.config.clone() }];
        let mut inputs = self.inputs.iter().peekable();
        let mut events = self.events.iter().peekable();
        loop {
            let take_input = match (inputs.peek(), events.peek()) {
                (Some(i), Some(e)) => i.tick < e.tick,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_input {
                let i = inputs.next().expect("peeked");
                lines.push(SessionLine::Input { tick: i.tick, msg: i.msg.clone() });
            } else {
                lines.push(SessionLine::Event(events.next().expect("peeked").clone()));
            }
        }
        if let Some((tick, final_state)) = &self.end {
            lines.push(SessionLine::End { tick: *tick, final_state: final_state.clone() });
        }
        lines
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), SessionError> {
        for line in self.lines() {
            write_line(&mut out, &line)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, SessionError> {
        let mut config = None;
        let mut inputs: Vec<AppliedInput> = Vec::new();
        let mut events: Vec<MissionEvent> = Vec::new();
        let mut end = None;
        for (i, text) in input.lines().enumerate() {
            let text = text?;
            let line_no = i + 1;
            if text.trim().is_empty() {
                continue;
            }
            let line: SessionLine = serde_json::from_str(&text)
                .map_err(|e| SessionError::Parse { line: line_no, message: e.to_string() })?;
            if config.is_none() && !matches!(line, SessionLine::Header { .. }) {
                return Err(SessionError::MissingHeader);
            }
            match line {
                SessionLine::Header { config: c } => {
                    if config.is_some() {
                        return Err(SessionError::Parse { line: line_no, message: "duplicate header".into() });
                    }
                    config = Some(c);
                }
                SessionLine::Input { tick, msg } => {
                    if let Some(prev) = inputs.last() {
                        if tick < prev.tick {
                            return Err(SessionError::OutOfOrder { line: line_no, tick, previous: prev.tick });
                        }
                    }
                    inputs.push(AppliedInput { tick, msg });
                }
                SessionLine::Event(e) => {
                    if let Some(prev) = events.last() {
                        if e.tick < prev.tick {
                            return Err(SessionError::OutOfOrder { line: line_no, tick: e.tick, previous: prev.tick });
                        }
                    }
                    events.push(e);
                }
                SessionLine::End { tick, final_state } => end = Some((tick, final_state)),
            }
        }
        Ok(SessionFile { config: config.ok_or(SessionError::MissingHeader)?, inputs, events, end })
    }

    /// Event log of the most recent mission, bounded by the session end.
    pub fn mission_log(&self) -> SessionLog {
        mission_log(&self.events, Some(self.end_tick()))
    }
}

pub fn write_line<W: Write>(mut out: W, line: &SessionLine) -> Result<(), SessionError> {
    serde_json::to_writer(&mut out, line).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Slices out the last mission (from its final `StageEntered(Approach)`).
pub fn mission_log(events: &[MissionEvent], end_tick: Option<u64>) -> SessionLog {
    let start = events
        .iter()
        .rposition(|e| matches!(e.kind, EventKind::StageEntered { stage: MissionStage::Approach }))
        .unwrap_or(0);
    let mut log = SessionLog::new();
    for e in &events[start..] {
        log.record_event(e.clone()).expect("recorded events are tick ordered");
    }
    log.end_tick = end_tick;
    log
}

/// Outcome of re-running a session's input trace.
#[derive(Debug, Clone)]
pub struct Replay {
    pub telemetry: Vec<OutboundMsg>,
    pub simulator: Simulator,
}

impl Replay {
    pub fn final_state(&self) -> OutboundMsg {
        self.simulator.snapshot()
    }
}

pub fn replay(session: &SessionFile) -> Result<Replay, SessionError> {
    let (simulator, telemetry) = run_inputs(&session.config, &session.inputs, session.end_tick())?;
    Ok(Replay { telemetry, simulator })
}
