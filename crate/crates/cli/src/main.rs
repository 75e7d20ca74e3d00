use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use shuttletrack::bench::bench_pipeline;
use shuttletrack::comparison::{compare_strategies, image_plane_csv, ComparisonTable};
use shuttletrack::config::RunConfig;
use shuttletrack::detection_io::{read_detections, read_trajectory, write_detections, write_trajectory, DetectionStream};
use shuttletrack::flight_sim::{generate_rallies, random_rally, RallyScript, SimError};
use shuttletrack::geometry::RigConfig;
use shuttletrack::metrics::{report, MetricsReport};
use shuttletrack::tracker::{check_aligned, run_strategy, TrackError};
use shuttletrack::{compensate, render_detections, simulate_flight, Mask, StereoRig, Strategy};

#[derive(Parser)]
#[command(name = "shuttletrack", version, about = "Stereo shuttlecock tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Stereo rig JSON; the default rig when omitted.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Run configuration JSON (tracker, compensation, flight, noise).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Streams {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a rally and render noisy detections for both cameras.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Rally script JSON; a random serve and return when omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Seeds the noise model and the random script.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a stereo detection pair with one strategy.
    Track {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        streams: Streams,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill gaps in a tracked trajectory.
    Compensate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        streams: Streams,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smoothness and completeness of a trajectory.
    Metrics {
        #[arg(long)]
        trajectory: PathBuf,
        /// Frame count to measure completeness against; the trajectory length by default.
        #[arg(long)]
        total_frames: Option<usize>,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Appends one CSV row (header written on first use).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run all four strategies and tabulate the metrics.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "right")]
        left: Option<PathBuf>,
        #[arg(long, requires = "left")]
        right: Option<PathBuf>,
        /// Without --left/--right, simulate this many rallies and average.
        #[arg(long, default_value_t = 12)]
        rallies: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the tracking loop over pre-computed detections.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        streams: Streams,
        #[arg(long, value_parser = parse_strategy, default_value = "C")]
        strategy: Strategy,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| format!("unknown strategy '{s}', expected A, B, C or D"))
}

enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let cfg = RunConfig::from_json(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.tracker.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.compensation.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn load_rig(path: Option<&Path>) -> CliResult<StereoRig> {
    let Some(path) = path else { return Ok(StereoRig::default()) };
    let cfg = RigConfig::from_json(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.build().map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_stream(path: &Path) -> CliResult<DetectionStream> {
    if !path.exists() {
        return Err(usage(format!("{}: no such file", path.display())));
    }
    read_detections(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_streams(s: &Streams) -> CliResult<(DetectionStream, DetectionStream)> {
    let left = load_stream(&s.left)?;
    let right = load_stream(&s.right)?;
    check_aligned(&left, &right).map_err(data)?;
    Ok((left, right))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn track_error(e: TrackError) -> Failure {
    match e {
        TrackError::InvalidConfig(_) => usage(e),
        _ => data(e),
    }
}

fn sim_error(e: SimError) -> Failure {
    match e {
        SimError::InvalidScript(_) | SimError::InvalidParams(_) | SimError::InvalidNoise(_) => usage(e),
        _ => data(e),
    }
}

fn simulate(common: &Common, script: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let rig = load_rig(common.rig.as_deref())?;
    let seed = seed.unwrap_or(cfg.noise.rng_seed);
    let script = match script {
        Some(p) => serde_json::from_str::<RallyScript>(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => random_rally(seed, &cfg.flight).map_err(sim_error)?,
    };
    let truth = simulate_flight(&script, &cfg.flight).map_err(sim_error)?;
    let noise = shuttletrack::NoiseModel { rng_seed: seed, ..cfg.noise };
    let (left, right) = render_detections(&truth, &rig, &noise).map_err(sim_error)?;
    ensure_dir(out)?;
    write_trajectory(&truth, None, &out.join("ground_truth.csv")).map_err(usage)?;
    write_detections(&left, &out.join("left.csv")).map_err(usage)?;
    write_detections(&right, &out.join("right.csv")).map_err(usage)?;
    info!("{} frames, {} left and {} right detections", truth.len(), left.found_count(), right.found_count());
    Ok(())
}

fn track(common: &Common, streams: &Streams, strategy: Strategy, out: &Path) -> CliResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let rig = load_rig(common.rig.as_deref())?;
    let (left, right) = load_streams(streams)?;
    let run = run_strategy(&left, &right, strategy, &rig, &cfg.tracker, &cfg.compensation).map_err(track_error)?;
    ensure_dir(out)?;
    write_trajectory(&run.trajectory, run.provenance.as_deref(), &out.join("trajectory.csv")).map_err(usage)?;
    write_file(&out.join("stats.json"), &to_json(&run.stats))?;
    info!("strategy {}: {} of {} frames accepted", strategy.name(), run.stats.accepted, run.stats.frames);
    Ok(())
}

fn compensate_cmd(common: &Common, trajectory: &Path, streams: &Streams, out: &Path) -> CliResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let rig = load_rig(common.rig.as_deref())?;
    if !trajectory.exists() {
        return Err(usage(format!("{}: no such file", trajectory.display())));
    }
    let (traj, _) = read_trajectory(trajectory).map_err(|e| data(format!("{}: {e}", trajectory.display())))?;
    let (left, right) = load_streams(streams)?;
    if left.len() != traj.len() {
        return Err(data(format!("trajectory has {} frames, detections have {}", traj.len(), left.len())));
    }
    let pick = |s: &DetectionStream| -> Vec<_> {
        traj.frames()
            .iter()
            .zip(s.detections())
            .map(|(f, d)| if f.mask == Mask::Detected { d.pixel() } else { None })
            .collect()
    };
    let result = compensate(&traj, &pick(&left), &pick(&right), &rig, &cfg.compensation).map_err(data)?;
    ensure_dir(out)?;
    write_trajectory(&result.trajectory, Some(&result.provenance), &out.join("trajectory.csv")).map_err(usage)?;
    Ok(())
}

fn metrics(trajectory: &Path, total: Option<usize>, out: Option<&Path>, csv: Option<&Path>) -> CliResult<()> {
    if !trajectory.exists() {
        return Err(usage(format!("{}: no such file", trajectory.display())));
    }
    let (traj, _) = read_trajectory(trajectory).map_err(|e| data(format!("{}: {e}", trajectory.display())))?;
    let r: MetricsReport = report(&traj, total.unwrap_or(traj.len()));
    match out {
        Some(p) => write_file(p, &to_json(&r))?,
        None => print!("{}", to_json(&r)),
    }
    if let Some(p) = csv {
        let mut text = if p.exists() { read_text(p)? } else { format!("{}\n", MetricsReport::CSV_HEADER) };
        text.push_str(&r.csv_row());
        text.push('\n');
        write_file(p, &text)?;
    }
    Ok(())
}

fn compare(common: &Common, pair: Option<Streams>, rallies: usize, seed: u64, out: &Path) -> CliResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let rig = load_rig(common.rig.as_deref())?;
    ensure_dir(out)?;
    let table = match pair {
        Some(streams) => {
            let (left, right) = load_streams(&streams)?;
            let cmp = compare_strategies(&left, &right, &rig, &cfg.tracker, &cfg.compensation, &Strategy::ALL);
            for (s, run) in &cmp.runs {
                match run {
                    Ok(run) => {
                        let name = s.name();
                        write_file(&out.join(format!("plot_left_{name}.csv")), &image_plane_csv(&run.trajectory, &rig.left))?;
                        write_file(&out.join(format!("plot_right_{name}.csv")), &image_plane_csv(&run.trajectory, &rig.right))?;
                        write_trajectory(&run.trajectory, run.provenance.as_deref(), &out.join(format!("plot_3d_{name}.csv")))
                            .map_err(usage)?;
                    }
                    Err(e) => log::warn!("strategy {} failed: {e}", s.name()),
                }
            }
            cmp.table
        }
        None => {
            if rallies == 0 {
                return Err(usage("--rallies must be at least 1"));
            }
            let noise = shuttletrack::NoiseModel { rng_seed: seed, ..cfg.noise };
            let fixtures = generate_rallies(rallies, seed, &rig, &cfg.flight, &noise).map_err(sim_error)?;
            let tables: Vec<ComparisonTable> = fixtures
                .iter()
                .map(|f| compare_strategies(&f.left, &f.right, &rig, &cfg.tracker, &cfg.compensation, &Strategy::ALL).table)
                .collect();
            ComparisonTable::average(&tables)
        }
    };
    print!("{}", table.render());
    write_file(&out.join("comparison.csv"), &table.to_csv())?;
    Ok(())
}

fn bench(common: &Common, streams: &Streams, strategy: Strategy, reps: usize, out: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let rig = load_rig(common.rig.as_deref())?;
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let (left, right) = load_streams(streams)?;
    let r = bench_pipeline(&left, &right, &rig, &cfg.tracker, &cfg.compensation, strategy, reps).map_err(track_error)?;
    let text = to_json(&r);
    print!("{text}");
    if let Some(p) = out {
        write_file(p, &text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common, script, seed, out } => simulate(&common, script.as_deref(), seed, &out),
        Command::Track { common, streams, strategy, out } => track(&common, &streams, strategy, &out),
        Command::Compensate { common, trajectory, streams, out } => compensate_cmd(&common, &trajectory, &streams, &out),
        Command::Metrics { trajectory, total_frames, out, csv } => metrics(&trajectory, total_frames, out.as_deref(), csv.as_deref()),
        Command::Compare { common, left, right, rallies, seed, out } => {
            let pair = left.zip(right).map(|(left, right)| Streams { left, right });
            compare(&common, pair, rallies, seed, &out)
        }
        Command::Bench { common, streams, strategy, reps, out } => bench(&common, &streams, strategy, reps, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Usage(m) => ("usage", m),
                Failure::Data(m) => ("data", m),
            };
            eprintln!("{}", serde_json::json!({ "error": kind, "message": msg }));
            ExitCode::from(f.code())
        }
    }
}
