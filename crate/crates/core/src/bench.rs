//! Pipeline-only latency measurement over pre-computed detections.

use serde::{Deserialize, Serialize};

use crate::compensation::CompensationConfig;
use crate::detection_io::DetectionStream;
use crate::geometry::StereoRig;
use crate::tracker::{run_strategy, Strategy, TrackError, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub strategy: Strategy,
    pub frames: usize,
    pub repetitions: usize,
    pub mean_step_ns: f64,
    pub median_step_ns: f64,
    pub p99_step_ns: f64,
    /// `1e9 / mean_step_ns`.
    pub fps_equivalent: f64,
    /// `1e9 / median_step_ns`.
    pub median_fps_equivalent: f64,
    pub rep_median_step_ns: Vec<f64>,
    /// Coefficient of variation of the per-repetition medians.
    pub rep_median_cov: f64,
    /// Whether every repetition produced the same trajectory and outcomes.
    pub deterministic: bool,
}

fn percentile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx] as f64
}

fn median(values: &mut [u64]) -> f64 {
    values.sort_unstable();
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// One untimed warm-up pass followed by `repetitions` timed passes.
pub fn bench_pipeline(
    left: &DetectionStream,
    right: &DetectionStream,
    rig: &StereoRig,
    tracker: &TrackerConfig,
    compensation: &CompensationConfig,
    strategy: Strategy,
    repetitions: usize,
) -> Result<BenchReport, TrackError> {
    let reps = repetitions.max(1);
    let reference = run_strategy(left, right, strategy, rig, tracker, compensation)?;
    let mut all = Vec::with_capacity(left.len() * reps);
    let mut rep_medians = Vec::with_capacity(reps);
    let mut deterministic = true;
    for _ in 0..reps {
        let run = run_strategy(left, right, strategy, rig, tracker, compensation)?;
        deterministic &= run.trajectory == reference.trajectory && run.outcomes == reference.outcomes;
        let mut steps = run.stats.step_ns.clone();
        rep_medians.push(median(&mut steps));
        all.extend(run.stats.step_ns);
    }
    all.sort_unstable();
    let mean = if all.is_empty() { 0.0 } else { all.iter().sum::<u64>() as f64 / all.len() as f64 };
    let med = median(&mut all.clone());
    let rep_mean = rep_medians.iter().sum::<f64>() / rep_medians.len() as f64;
    let rep_var = rep_medians.iter().map(|m| (m - rep_mean).powi(2)).sum::<f64>() / rep_medians.len() as f64;
    let inv = |ns: f64| if ns > 0.0 { 1e9 / ns } else { 0.0 };
    Ok(BenchReport {
        strategy,
        frames: left.len(),
        repetitions: reps,
        mean_step_ns: mean,
        median_step_ns: med,
        p99_step_ns: percentile(&all, 0.99),
        fps_equivalent: inv(mean),
        median_fps_equivalent: inv(med),
        rep_median_step_ns: rep_medians,
        rep_median_cov: if rep_mean > 0.0 { rep_var.sqrt() / rep_mean } else { 0.0 },
        deterministic,
    })
}
