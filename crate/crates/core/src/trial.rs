//! Pattern-recognition trials and their analysis.
//!
//! A schedule presents every cue `reps` times in seeded random order. After
//! each stimulus the participant names the pattern; latency runs from the end
//! of the stimulus to the answer. Analysis produces the shown-vs-answered
//! confusion matrix (percent per row) and mean recognition times.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::haptics::{PatternId, TactileFrame};

pub const DEFAULT_REPS: usize = 10;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("reps must be >= 1, got {0}")]
    Reps(usize),
    #[error("pattern {0} was never shown")]
    UndefinedRow(PatternId),
    #[error("`{field}` must be one of OB, MR, MF, ML, got None")]
    NotACue { field: &'static str },
    #[error("latency must be finite and >= 0, got {0}")]
    Latency(f64),
    #[error("trial log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSchedule {
    pub seed: u64,
    pub sequence: Vec<PatternId>,
}

/// Seeded schedule: each cue `reps` times, shuffled with ChaCha8
/// (`seed_from_u64`) driving a Fisher-Yates shuffle.
pub fn make_schedule(seed: u64, reps: usize) -> Result<TrialSchedule, TrialError> {
    if reps < 1 {
        return Err(TrialError::Reps(reps));
    }
    let mut sequence: Vec<PatternId> =
        (0..reps).flat_map(|_| PatternId::CUES).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sequence.shuffle(&mut rng);
    Ok(TrialSchedule { seed, sequence })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct TrialRecord {
    pub shown: PatternId,
    pub answered: PatternId,
    /// Seconds from stimulus end to answer.
    pub latency: f64,
}

#[derive(Deserialize)]
struct RawRecord {
    shown: PatternId,
    answered: PatternId,
    latency: f64,
}

impl TryFrom<RawRecord> for TrialRecord {
    type Error = TrialError;

    fn try_from(r: RawRecord) -> Result<Self, Self::Error> {
        TrialRecord::new(r.shown, r.answered, r.latency)
    }
}

impl TrialRecord {
    pub fn new(shown: PatternId, answered: PatternId, latency: f64) -> Result<Self, TrialError> {
        if shown == PatternId::Silent {
            return Err(TrialError::NotACue { field: "shown" });
        }
        if answered == PatternId::Silent {
            return Err(TrialError::NotACue { field: "answered" });
        }
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(TrialError::Latency(latency));
        }
        Ok(TrialRecord { shown, answered, latency })
    }
}

/// One trial-log line: the record plus session-relative timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialLogEntry {
    #[serde(flatten)]
    pub record: TrialRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answered_at: Option<f64>,
}

impl From<TrialRecord> for TrialLogEntry {
    fn from(record: TrialRecord) -> Self {
        TrialLogEntry { record, stimulus_end: None, answered_at: None }
    }
}

pub fn write_trial_log<W: Write>(mut out: W, entries: &[TrialLogEntry]) -> Result<(), TrialError> {
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a line-delimited trial log. Blank lines are skipped.
pub fn read_trial_log<R: BufRead>(input: R) -> Result<Vec<TrialLogEntry>, TrialError> {
    let mut entries = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| TrialError::Parse { line: i + 1, message: e.to_string() })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Raw shown/answered counts, rows and columns in `PatternId::CUES` order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionCounts {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut counts = [[0u64; 4]; 4];
        for r in records {
            if let (Some(row), Some(col)) = (r.shown.cue_index(), r.answered.cue_index()) {
                counts[row][col] += 1;
            }
        }
        ConfusionCounts { counts }
    }

    /// Row in percent, or `None` if the pattern was never shown.
    pub fn row_percentages(&self, shown: PatternId) -> Option<[f64; 4]> {
        let row = &self.counts[shown.cue_index()?];
        let total: u64 = row.iter().sum();
        if total == 0 {
            return None;
        }
        Some(row.map(|n| 100.0 * n as f64 / total as f64))
    }
}

/// Recognition percentages, rows = shown, columns = answered, order OB, MR, MF, ML.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub percent: [[f64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn diagonal(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.percent[i][i])
    }

    /// Mean of the per-pattern recognition rates.
    pub fn accuracy(&self) -> f64 {
        self.diagonal().iter().sum::<f64>() / 4.0
    }
}

pub fn confusion_matrix(records: &[TrialRecord]) -> Result<ConfusionMatrix, TrialError> {
    let counts = ConfusionCounts::from_records(records);
    let mut percent = [[0.0; 4]; 4];
    for (i, p) in PatternId::CUES.into_iter().enumerate() {
        percent[i] = counts.row_percentages(p).ok_or(TrialError::UndefinedRow(p))?;
    }
    Ok(ConfusionMatrix { percent })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionTimes {
    /// Mean latency per shown pattern, order OB, MR, MF, ML.
    pub per_pattern: [f64; 4],
    /// Unweighted mean of the four per-pattern means.
    pub overall: f64,
}

pub fn mean_recognition_times(records: &[TrialRecord]) -> Result<RecognitionTimes, TrialError> {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for r in records {
        if let Some(i) = r.shown.cue_index() {
            sums[i] += r.latency;
            counts[i] += 1;
        }
    }
    let mut per_pattern = [0.0; 4];
    for (i, p) in PatternId::CUES.into_iter().enumerate() {
        if counts[i] == 0 {
            return Err(TrialError::UndefinedRow(p));
        }
        per_pattern[i] = sums[i] / counts[i] as f64;
    }
    let overall = per_pattern.iter().sum::<f64>() / 4.0;
    Ok(RecognitionTimes { per_pattern, overall })
}

/// Text report: confusion matrix in percent with
/// one decimal, times in seconds with two.
pub fn format_report(matrix: &ConfusionMatrix, times: &RecognitionTimes) -> String {
    let mut s = String::new();
    let header: String = PatternId::CUES.iter().map(|p| format!("{:>8}", format!("{p}, %"))).collect();
    let _ = writeln!(s, "Confusion matrix (rows = shown, columns = answered)");
    let _ = writeln!(s, "{:<6}{header}", "");
    for (i, p) in PatternId::CUES.iter().enumerate() {
        let cells: String = matrix.percent[i].iter().map(|v| format!("{v:>8.1}")).collect();
        let _ = writeln!(s, "{:<6}{cells}", p.short_name());
    }
    let _ = writeln!(s, "Recognition rate: {:.1} %", matrix.accuracy());
    let _ = writeln!(s);
    let _ = writeln!(s, "Average recognition time");
    let header: String = PatternId::CUES.iter().map(|p| format!("{:>8}", p.short_name())).collect();
    let _ = writeln!(s, "{:<8}{header}{:>9}", "", "Overall");
    let cells: String = times.per_pattern.iter().map(|v| format!("{v:>8.2}")).collect();
    let _ = writeln!(s, "{:<8}{cells}{:>9.2}", "Time, s", times.overall);
    s
}

/// Where a live trial session currently is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum TrialPhase {
    Stimulus { index: usize, ends_at: f64 },
    AwaitingAnswer { index: usize, since: f64 },
    Done,
}

/// Clock-driven trial state machine. Time is supplied by the caller, so the
/// same runner serves the tick loop and the interactive terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRunner {
    schedule: TrialSchedule,
    stimulus_duration: f64,
    phase: TrialPhase,
    entries: Vec<TrialLogEntry>,
}

impl TrialRunner {
    pub fn new(schedule: TrialSchedule, stimulus_duration: f64, now: f64) -> Self {
        let phase = if schedule.sequence.is_empty() {
            TrialPhase::Done
        } else {
            TrialPhase::Stimulus { index: 0, ends_at: now + stimulus_duration }
        };
        TrialRunner { schedule, stimulus_duration, phase, entries: Vec::new() }
    }

    pub fn schedule(&self) -> &TrialSchedule {
        &self.schedule
    }

    pub fn entries(&self) -> &[TrialLogEntry] {
        &self.entries
    }

    pub fn records(&self) -> Vec<TrialRecord> {
        self.entries.iter().map(|e| e.record).collect()
    }

    /// Advances time; ends the stimulus once its duration has elapsed.
    pub fn poll(&mut self, now: f64) -> TrialPhase {
        if let TrialPhase::Stimulus { index, ends_at } = self.phase {
            if now >= ends_at {
                self.phase = TrialPhase::AwaitingAnswer { index, since: ends_at };
            }
        }
        self.phase
    }

    pub fn phase(&self) -> TrialPhase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == TrialPhase::Done
    }

    /// Frame to play right now: the scheduled cue during a stimulus, silence otherwise.
    pub fn frame(&self) -> TactileFrame {
        match self.phase {
            TrialPhase::Stimulus { index, .. } => TactileFrame::from_pattern(self.schedule.sequence[index]),
            _ => TactileFrame::silent(),
        }
    }

    /// Records an answer. Answers while the stimulus is still playing, or
    /// after the schedule is exhausted, are ignored and return `Ok(None)`.
    pub fn answer(&mut self, answered: PatternId, now: f64) -> Result<Option<TrialLogEntry>, TrialError> {
        let TrialPhase::AwaitingAnswer { index, since } = self.poll(now) else {
            return Ok(None);
        };
        let shown = self.schedule.sequence[index];
        let record = TrialRecord::new(shown, answered, (now - since).max(0.0))?;
        let entry = TrialLogEntry { record, stimulus_end: Some(since), answered_at: Some(now) };
        self.entries.push(entry);
        let next = index + 1;
        self.phase = if next < self.schedule.sequence.len() {
            TrialPhase::Stimulus { index: next, ends_at: now + self.stimulus_duration }
        } else {
            TrialPhase::Done
        };
        Ok(Some(entry))
    }
}
