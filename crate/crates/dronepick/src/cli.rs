//! Command-line interface.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dronepick_core::haptics::{encode_glove_frame, pattern_intensities, PatternId, TactileFrame};
use dronepick_core::mission::metrics;
use dronepick_core::protocol::{encode_server, ServerMsg};
use dronepick_core::session::{replay, SessionFile};
use dronepick_core::trial::{
    confusion_matrix, format_report, make_schedule, mean_recognition_times, read_trial_log, write_trial_log,
    TrialPhase, TrialRunner, DEFAULT_REPS,
};
use dronepick_core::{load_config, SimConfig};

use crate::server::{serve, ServeOptions};

#[derive(Debug, Parser)]
#[command(name = "dronepick", version, about = "Drone picking teleoperation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator behind a websocket server.
    Serve(ServeArgs),
    /// Re-run a recorded session and check its final state.
    Replay(ReplayArgs),
    /// Run a pattern-recognition trial in the terminal.
    Trial(TrialArgs),
    /// Print the confusion matrix and recognition times of a trial log.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Config file; missing keys take their defaults.
    #[arg(long, env = "DRONEPICK_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    /// Write the session (inputs and events) here on shutdown.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Append trial answers here.
    #[arg(long)]
    pub trial_log: Option<PathBuf>,
    /// Stream 8-byte glove frames to this device or file.
    #[arg(long)]
    pub glove: Option<PathBuf>,
    /// Stop after this many ticks.
    #[arg(long)]
    pub ticks: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub session: PathBuf,
    /// Playback speed relative to real time; 0 runs as fast as possible.
    #[arg(long, default_value_t = 0.0)]
    pub speed: f64,
    /// Print every telemetry line to stdout.
    #[arg(long)]
    pub telemetry: bool,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    /// Config file supplying the stimulus duration.
    #[arg(long, env = "DRONEPICK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the configured stimulus duration, seconds.
    #[arg(long)]
    pub stimulus: Option<f64>,
    /// Trial log output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stream 8-byte glove frames to this device or file.
    #[arg(long)]
    pub glove: Option<PathBuf>,
    /// Draw the finger intensities while a cue plays.
    #[arg(long)]
    pub show: bool,
    /// Print the schedule and exit.
    #[arg(long)]
    pub print_schedule: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub trial_log: PathBuf,
}

pub fn config_or_default(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("config {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => run_serve(a),
        Command::Replay(a) => run_replay(&a, &mut std::io::stdout().lock()),
        Command::Trial(a) => run_trial(&a, &mut std::io::stdin().lock(), &mut std::io::stdout().lock()),
        Command::Analyze(a) => run_analyze(&a, &mut std::io::stdout().lock()),
    }
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let cfg = config_or_default(args.config.as_deref())?;
    let opts = ServeOptions { record: args.record, trial_log: args.trial_log, glove: args.glove, max_ticks: args.ticks };
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        log::info!("listening on ws://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        let sim = serve(listener, cfg, opts, shutdown).await?;
        log::info!("stopped at tick {}", sim.world().tick);
        Ok(())
    })
}

pub fn run_replay(args: &ReplayArgs, out: &mut impl Write) -> Result<()> {
    if !(args.speed.is_finite() && args.speed >= 0.0) {
        bail!("--speed must be a finite number >= 0, got {}", args.speed);
    }
    let file = File::open(&args.session).with_context(|| format!("opening {}", args.session.display()))?;
    let session = SessionFile::read(BufReader::new(file))?;
    let result = replay(&session)?;

    let pace = (args.speed > 0.0).then(|| Duration::from_secs_f64(session.config.dt() / args.speed));
    let start = Instant::now();
    for (i, m) in result.telemetry.iter().enumerate() {
        if let Some(step) = pace {
            let due = step * (i as u32 + 1);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if args.telemetry {
            writeln!(out, "{}", encode_server(&ServerMsg::Telemetry(m.clone())))?;
        }
    }

    let final_state = result.final_state();
    writeln!(out, "replayed {} ticks, stage {:?}", final_state.tick, final_state.stage)?;
    let log = dronepick_core::session::mission_log(result.simulator.events(), Some(final_state.tick));
    if let Ok(m) = metrics(&log, session.config.tick_rate) {
        let fmt = |t: Option<f64>| t.map_or_else(|| "-".to_string(), |v| format!("{v:.2} s"));
        writeln!(out, "time to pick: {}", fmt(m.time_to_pick))?;
        writeln!(out, "time to deliver: {}", fmt(m.time_to_deliver))?;
        writeln!(out, "completed: {}", m.completed)?;
    }

    match &session.end {
        Some((tick, recorded)) if *recorded != final_state => {
            bail!("final state at tick {} differs from recording at tick {tick}", final_state.tick)
        }
        Some(_) => writeln!(out, "final state matches recording")?,
        None => writeln!(out, "no recorded final state to compare")?,
    }
    Ok(())
}

pub fn run_analyze(args: &AnalyzeArgs, out: &mut impl Write) -> Result<()> {
    let file = File::open(&args.trial_log).with_context(|| format!("opening {}", args.trial_log.display()))?;
    let entries = read_trial_log(BufReader::new(file))?;
    let records: Vec<_> = entries.iter().map(|e| e.record).collect();
    let matrix = confusion_matrix(&records)?;
    let times = mean_recognition_times(&records)?;
    write!(out, "{}", format_report(&matrix, &times))?;
    Ok(())
}

/// Interactive trial. Each cue plays for the stimulus duration, then one
/// answer (OB, MR, MF or ML) is read per line. Latency runs from the end of
/// the stimulus to the answer.
pub fn run_trial(args: &TrialArgs, input: &mut impl BufRead, out: &mut impl Write) -> Result<()> {
    let schedule = make_schedule(args.seed, args.reps)?;
    if args.print_schedule {
        let names: Vec<_> = schedule.sequence.iter().map(|p| p.short_name()).collect();
        writeln!(out, "{}", names.join(" "))?;
        return Ok(());
    }
    let stimulus = match args.stimulus {
        Some(s) if s.is_finite() && s >= 0.0 => s,
        Some(s) => bail!("--stimulus must be a finite number >= 0, got {s}"),
        None => config_or_default(args.config.as_deref())?.stimulus_duration,
    };
    let mut glove = match &args.glove {
        Some(p) => Some(File::create(p).with_context(|| format!("opening glove {}", p.display()))?),
        None => None,
    };
    let mut log_out = match &args.out {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };

    let total = schedule.sequence.len();
    let clock = Instant::now();
    let now = || clock.elapsed().as_secs_f64();
    let mut runner = TrialRunner::new(schedule, stimulus, now());
    let mut line = String::new();

    while let TrialPhase::Stimulus { index, ends_at } = runner.phase() {
        let cue = runner.schedule().sequence[index];
        writeln!(out, "trial {}/{total}: playing", index + 1)?;
        if args.show {
            writeln!(out, "  {}", finger_bars(cue))?;
        }
        out.flush()?;
        if let Some(g) = glove.as_mut() {
            g.write_all(&encode_glove_frame(&TactileFrame::from_pattern(cue)))?;
        }
        let remaining = ends_at - now();
        if remaining > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(remaining));
        }
        while !matches!(runner.poll(now()), TrialPhase::AwaitingAnswer { .. }) {
            std::thread::yield_now();
        }
        if let Some(g) = glove.as_mut() {
            g.write_all(&encode_glove_frame(&TactileFrame::silent()))?;
        }

        let entry = loop {
            write!(out, "answer [OB/MR/MF/ML]: ")?;
            out.flush()?;
            line.clear();
            if input.read_line(&mut line)? == 0 {
                bail!("input ended after {index} of {total} trials");
            }
            match line.trim().parse::<PatternId>() {
                Ok(p) if p.cue_index().is_some() => {
                    if let Some(e) = runner.answer(p, now())? {
                        break e;
                    }
                }
                _ => writeln!(out, "unrecognised answer {:?}", line.trim())?,
            }
        };
        writeln!(out, "  {:.2} s", entry.record.latency)?;
        if let Some(w) = log_out.as_mut() {
            write_trial_log(&mut *w, &[entry])?;
            w.flush()?;
        }
    }

    let records = runner.records();
    let correct = records.iter().filter(|r| r.shown == r.answered).count();
    writeln!(out, "done: {correct}/{total} correct")?;
    if let (Ok(matrix), Ok(times)) = (confusion_matrix(&records), mean_recognition_times(&records)) {
        write!(out, "{}", format_report(&matrix, &times))?;
    }
    Ok(())
}

/// Thumb to little finger, one bar per finger.
fn finger_bars(p: PatternId) -> String {
    pattern_intensities(p)
        .iter()
        .map(|level| match level.value() {
            0 => "    ",
            100 => "▂   ",
            150 => "▅   ",
            _ => "█   ",
        })
        .collect::<String>()
        .trim_end()
        .to_string()
}
