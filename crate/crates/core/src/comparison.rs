//! Side-by-side evaluation of the four tracking strategies.

use serde::{Deserialize, Serialize};

use crate::compensation::CompensationConfig;
use crate::detection_io::DetectionStream;
use crate::geometry::StereoRig;
use crate::metrics::{report, MetricsReport};
use crate::tracker::{run_strategy, Strategy, StrategyRun, TrackError, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub completeness: Option<f64>,
    pub s_v: Option<f64>,
    pub s_a: Option<f64>,
    pub c_avg_cm: Option<f64>,
    /// Strategy D reports no rate: compensation is a post-pass.
    pub fps_equivalent: Option<f64>,
}

impl ComparisonRow {
    fn failed(strategy: Strategy) -> Self {
        Self { strategy, completeness: None, s_v: None, s_a: None, c_avg_cm: None, fps_equivalent: None }
    }

    fn from_run(run: &StrategyRun, total_frames: usize) -> Self {
        let m: MetricsReport = report(&run.trajectory, total_frames);
        Self {
            strategy: run.strategy,
            completeness: Some(m.completeness),
            s_v: m.s_v,
            s_a: m.s_a,
            c_avg_cm: m.c_avg_cm,
            fps_equivalent: (run.strategy != Strategy::D).then_some(run.stats.fps_equivalent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug)]
pub struct Comparison {
    pub table: ComparisonTable,
    /// Per-strategy runs, `Err` where the strategy failed.
    pub runs: Vec<(Strategy, Result<StrategyRun, TrackError>)>,
}

/// Runs each strategy on the same streams. A failing strategy yields an
/// all-empty row instead of aborting the comparison.
pub fn compare_strategies(
    left: &DetectionStream,
    right: &DetectionStream,
    rig: &StereoRig,
    tracker: &TrackerConfig,
    compensation: &CompensationConfig,
    strategies: &[Strategy],
) -> Comparison {
    let total = left.len();
    let runs: Vec<_> = strategies
        .iter()
        .map(|&s| (s, run_strategy(left, right, s, rig, tracker, compensation)))
        .collect();
    let rows = runs
        .iter()
        .map(|(s, r)| match r {
            Ok(run) => ComparisonRow::from_run(run, total),
            Err(_) => ComparisonRow::failed(*s),
        })
        .collect();
    Comparison { table: ComparisonTable { rows }, runs }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl ComparisonTable {
    pub fn row(&self, s: Strategy) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.strategy == s)
    }

    /// Column-wise mean over several clips. A metric missing in any clip is
    /// missing in the aggregate.
    pub fn average(tables: &[ComparisonTable]) -> ComparisonTable {
        let Some(first) = tables.first() else {
            return ComparisonTable { rows: Vec::new() };
        };
        let rows = first
            .rows
            .iter()
            .map(|r| {
                let of = |f: fn(&ComparisonRow) -> Option<f64>| mean(tables.iter().map(|t| t.row(r.strategy).and_then(f)));
                ComparisonRow {
                    strategy: r.strategy,
                    completeness: of(|x| x.completeness),
                    s_v: of(|x| x.s_v),
                    s_a: of(|x| x.s_a),
                    c_avg_cm: of(|x| x.c_avg_cm),
                    fps_equivalent: of(|x| x.fps_equivalent),
                }
            })
            .collect();
        ComparisonTable { rows }
    }

    pub const CSV_HEADER: &'static str = "strategy,completeness_pct,s_v,s_a,c_avg_cm,fps_equivalent";

    pub fn to_csv(&self) -> String {
        let o = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.strategy.name(),
                o(r.completeness),
                o(r.s_v),
                o(r.s_a),
                o(r.c_avg_cm),
                o(r.fps_equivalent)
            ));
        }
        s
    }

    /// Fixed-width table for terminals.
    pub fn render(&self) -> String {
        let f = |x: Option<f64>, prec: usize| x.map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into());
        let e = |x: Option<f64>| x.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        let mut s = format!(
            "{:<10} {:>14} {:>12} {:>12} {:>12} {:>12}\n",
            "strategy", "completeness%", "S_v", "S_a", "C_avg(cm)", "fps"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:>14} {:>12} {:>12} {:>12} {:>12}\n",
                format!("Strategy {}", r.strategy.name()),
                f(r.completeness, 2),
                e(r.s_v),
                e(r.s_a),
                f(r.c_avg_cm, 2),
                f(r.fps_equivalent, 1)
            ));
        }
        s
    }
}

/// Per-frame image-plane view of a trajectory for plotting: each 3D point
/// projected into `cam`. Columns: `frame,timestamp_ns,u,v,mask`.
pub fn image_plane_csv(traj: &crate::trajectory::Trajectory3D, cam: &crate::geometry::CameraModel) -> String {
    let mut s = String::from("frame,timestamp_ns,u,v,mask\n");
    for f in traj.frames() {
        let px = f.point.and_then(|p| crate::geometry::project(&p, cam).ok());
        let (u, v) = px.map(|p| (p.u.to_string(), p.v.to_string())).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{}\n", f.frame_index, f.timestamp_ns, u, v, f.mask.as_u8()));
    }
    s
}
