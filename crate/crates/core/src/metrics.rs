//! Trajectory smoothness and coverage measures.
//!
//! All kinematic metrics run over the frames that carry a position (mask 1 or
//! 2), using their true timestamps, so gaps simply widen the time step.
//!
//! * velocity `v_i = (p_{i+1} - p_i) / (t_{i+1} - t_i)`
//! * `s_v = 1/(n-2) * sum_{i=2}^{n-1} |v_i - v_{i-1}|^2`
//! * `s_a = 1/(n-2) * sum_{i=2}^{n-1} |(v_i - v_{i-1}) / ((t_{i+1} - t_{i-1}) / 2)|^2`
//! * `c_avg = 1/(n-1) * sum |p_{i+1} - p_i|`
//!
//! `s_a` is a mean squared central acceleration, not a jitter of the
//! accelerations; `s_a_alt` reports the latter for comparison.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WorldPoint;
use crate::trajectory::{Mask, Trajectory3D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("zero time step between samples {0} and {1}")]
    ZeroDt(usize, usize),
}

/// Valid points with integer-nanosecond timestamps. Time steps are taken as
/// integer differences so equal frame spacings give bit-equal steps.
fn samples(traj: &Trajectory3D, needed: usize) -> Result<Vec<(i64, Vector3<f64>)>, MetricsError> {
    let pts: Vec<(i64, Vector3<f64>)> = traj.valid_points().map(|(t, p): (i64, WorldPoint)| (t, p.to_vector())).collect();
    if pts.len() < needed {
        return Err(MetricsError::TooFewPoints { needed, got: pts.len() });
    }
    Ok(pts)
}

fn seconds(from_ns: i64, to_ns: i64) -> f64 {
    (to_ns - from_ns) as f64 * 1e-9
}

fn velocities_of(pts: &[(i64, Vector3<f64>)]) -> Result<Vec<Vector3<f64>>, MetricsError> {
    pts.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let dt = seconds(w[0].0, w[1].0);
            if dt == 0.0 {
                Err(MetricsError::ZeroDt(i, i + 1))
            } else {
                Ok((w[1].1 - w[0].1) / dt)
            }
        })
        .collect()
}

/// Forward finite-difference velocities, one fewer than the valid points.
pub fn velocities(traj: &Trajectory3D) -> Result<Vec<Vector3<f64>>, MetricsError> {
    velocities_of(&samples(traj, 2)?)
}

pub fn velocity_smoothness(traj: &Trajectory3D) -> Result<f64, MetricsError> {
    let pts = samples(traj, 3)?;
    let v = velocities_of(&pts)?;
    let sum: f64 = v.windows(2).map(|w| (w[1] - w[0]).norm_squared()).sum();
    Ok(sum / (pts.len() - 2) as f64)
}

pub fn acceleration_smoothness(traj: &Trajectory3D) -> Result<f64, MetricsError> {
    let pts = samples(traj, 3)?;
    let v = velocities_of(&pts)?;
    let sum: f64 = (1..v.len())
        .map(|k| {
            let half_span = seconds(pts[k - 1].0, pts[k + 1].0) / 2.0;
            ((v[k] - v[k - 1]) / half_span).norm_squared()
        })
        .sum();
    Ok(sum / (pts.len() - 2) as f64)
}

/// Mean squared change between consecutive finite-difference accelerations.
pub fn acceleration_jitter(traj: &Trajectory3D) -> Result<f64, MetricsError> {
    let pts = samples(traj, 4)?;
    let v = velocities_of(&pts)?;
    let a: Vec<Vector3<f64>> = (0..v.len() - 1).map(|k| (v[k + 1] - v[k]) / seconds(pts[k].0, pts[k + 1].0)).collect();
    let sum: f64 = a.windows(2).map(|w| (w[1] - w[0]).norm_squared()).sum();
    Ok(sum / (a.len() - 1) as f64)
}

/// Mean distance between consecutive valid points, metres.
pub fn avg_centroid_shift(traj: &Trajectory3D) -> Result<f64, MetricsError> {
    let pts = samples(traj, 2)?;
    let sum: f64 = pts.windows(2).map(|w| (w[1].1 - w[0].1).norm()).sum();
    Ok(sum / (pts.len() - 1) as f64)
}

/// Percentage of `total_frames` that carry a position.
pub fn completeness(traj: &Trajectory3D, total_frames: usize) -> f64 {
    if total_frames == 0 {
        return 0.0;
    }
    let with_point = traj.frames().iter().filter(|f| f.mask.has_point()).count();
    100.0 * with_point as f64 / total_frames as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub s_v: Option<f64>,
    pub s_a: Option<f64>,
    pub s_a_alt: Option<f64>,
    pub c_avg_m: Option<f64>,
    pub c_avg_cm: Option<f64>,
    pub completeness: f64,
    pub n_frames: usize,
    pub n_detected: usize,
    pub n_compensated: usize,
}

pub fn report(traj: &Trajectory3D, total_frames: usize) -> MetricsReport {
    let c_avg = avg_centroid_shift(traj).ok();
    MetricsReport {
        s_v: velocity_smoothness(traj).ok(),
        s_a: acceleration_smoothness(traj).ok(),
        s_a_alt: acceleration_jitter(traj).ok(),
        c_avg_m: c_avg,
        c_avg_cm: c_avg.map(|c| c * 100.0),
        completeness: completeness(traj, total_frames),
        n_frames: total_frames,
        n_detected: traj.count(Mask::Detected),
        n_compensated: traj.count(Mask::Compensated),
    }
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "s_v,s_a,s_a_alt,c_avg_cm,completeness,n_frames,n_detected,n_compensated";

    pub fn csv_row(&self) -> String {
        let o = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            o(self.s_v),
            o(self.s_a),
            o(self.s_a_alt),
            o(self.c_avg_cm),
            self.completeness,
            self.n_frames,
            self.n_detected,
            self.n_compensated
        )
    }
}
