//! Missing-frame compensation.
//!
//! Frames without an accepted 3D point are filled from two independent
//! reconstructions: the per-view 2D tracks interpolated with natural cubic
//! splines and re-triangulated (`stereo`), and a natural cubic spline through
//! the accepted 3D points (`spatial`). A filled frame takes
//! `alpha * stereo + (1 - alpha) * spatial`, and only when the stereo estimate
//! lies within `epsilon3` of the temporally nearest accepted point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{triangulate, PixelPoint, StereoRig, WorldPoint};
use crate::spline::NaturalCubicSpline;
use crate::trajectory::{Mask, Trajectory3D, TrajectoryError, TrajectoryFrame};

/// Minimum number of known samples before a spline is fitted.
pub const MIN_KNOTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompensationError {
    #[error("need at least {MIN_KNOTS} known samples, got {found}")]
    TooSparse { found: usize },
    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),
    #[error("invalid compensation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Detected,
    Compensated,
    Unfilled,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Detected => "detected",
            Provenance::Compensated => "compensated",
            Provenance::Unfilled => "unfilled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "detected" => Some(Provenance::Detected),
            "compensated" => Some(Provenance::Compensated),
            "unfilled" => Some(Provenance::Unfilled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplineKind {
    #[default]
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompensationConfig {
    pub alpha: f64,
    /// Metres.
    pub epsilon3: f64,
    pub spline_kind: SplineKind,
    /// Longest run of missing frames that will be filled.
    pub max_gap: usize,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self { alpha: 0.5, epsilon3: 1.0, spline_kind: SplineKind::Cubic, max_gap: 20 }
    }
}

impl CompensationConfig {
    pub fn validate(&self) -> Result<(), CompensationError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CompensationError::InvalidConfig(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        if !(self.epsilon3 > 0.0) {
            return Err(CompensationError::InvalidConfig(format!("epsilon3 must be positive, got {}", self.epsilon3)));
        }
        if self.max_gap < 1 {
            return Err(CompensationError::InvalidConfig("max_gap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run of missing samples between two known ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub start: usize,
    pub len: usize,
}

/// Interior gaps of a presence pattern. Leading and trailing runs are not gaps.
pub fn interior_gaps(present: &[bool]) -> Vec<Gap> {
    let mut gaps = Vec::new();
    let Some(first) = present.iter().position(|p| *p) else {
        return gaps;
    };
    let last = present.iter().rposition(|p| *p).unwrap();
    let mut i = first;
    while i < last {
        if !present[i] {
            let start = i;
            while !present[i] {
                i += 1;
            }
            gaps.push(Gap { start, len: i - start });
        } else {
            i += 1;
        }
    }
    gaps
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated2D {
    pub points: Vec<Option<PixelPoint>>,
    /// Gaps left unfilled because they exceed `max_gap`.
    pub long_gaps: Vec<Gap>,
}

fn seconds(timestamps: &[i64]) -> Vec<f64> {
    let t0 = timestamps.first().copied().unwrap_or(0);
    timestamps.iter().map(|t| (t - t0) as f64 * 1e-9).collect()
}

/// Fills interior gaps of one image track with per-axis natural cubic splines.
pub fn interpolate_2d(
    seq: &[Option<PixelPoint>],
    timestamps: &[i64],
    max_gap: usize,
) -> Result<Interpolated2D, CompensationError> {
    if seq.len() != timestamps.len() {
        return Err(CompensationError::LengthMismatch(format!("{} points, {} timestamps", seq.len(), timestamps.len())));
    }
    let ts = seconds(timestamps);
    let known: Vec<(f64, PixelPoint)> = seq.iter().zip(&ts).filter_map(|(p, t)| p.map(|p| (*t, p))).collect();
    if known.len() < MIN_KNOTS {
        return Err(CompensationError::TooSparse { found: known.len() });
    }
    let xs: Vec<f64> = known.iter().map(|k| k.0).collect();
    let fit = |f: fn(&PixelPoint) -> f64| {
        let ys: Vec<f64> = known.iter().map(|k| f(&k.1)).collect();
        NaturalCubicSpline::fit(&xs, &ys).map_err(|_| CompensationError::TooSparse { found: known.len() })
    };
    let su = fit(|p| p.u)?;
    let sv = fit(|p| p.v)?;
    let present: Vec<bool> = seq.iter().map(Option::is_some).collect();
    let mut points = seq.to_vec();
    let mut long_gaps = Vec::new();
    for gap in interior_gaps(&present) {
        if gap.len > max_gap {
            long_gaps.push(gap);
            continue;
        }
        for i in gap.start..gap.start + gap.len {
            if let (Some(u), Some(v)) = (su.eval(ts[i]), sv.eval(ts[i])) {
                points[i] = Some(PixelPoint::new(u, v));
            }
        }
    }
    Ok(Interpolated2D { points, long_gaps })
}

/// Re-triangulates both interpolated image tracks. Only frames with mask
/// `Detected` count as known in either view.
pub fn compensate_stereo(
    left: &[Option<PixelPoint>],
    right: &[Option<PixelPoint>],
    timestamps: &[i64],
    mask: &[Mask],
    rig: &StereoRig,
    max_gap: usize,
) -> Result<Vec<Option<WorldPoint>>, CompensationError> {
    let n = mask.len();
    if left.len() != n || right.len() != n || timestamps.len() != n {
        return Err(CompensationError::LengthMismatch(format!(
            "left {}, right {}, timestamps {}, mask {}",
            left.len(),
            right.len(),
            timestamps.len(),
            n
        )));
    }
    let keep = |seq: &[Option<PixelPoint>]| -> Vec<Option<PixelPoint>> {
        seq.iter().zip(mask).map(|(p, m)| if *m == Mask::Detected { *p } else { None }).collect()
    };
    let l = interpolate_2d(&keep(left), timestamps, max_gap)?;
    let r = interpolate_2d(&keep(right), timestamps, max_gap)?;
    Ok(l.points
        .iter()
        .zip(&r.points)
        .map(|(pl, pr)| match (pl, pr) {
            (Some(pl), Some(pr)) => triangulate(pl, pr, rig).ok().filter(WorldPoint::is_finite),
            _ => None,
        })
        .collect())
}

/// Natural cubic spline per world axis through the `Detected` frames,
/// evaluated at every frame inside their time range.
pub fn spline_3d(traj: &Trajectory3D) -> Result<Vec<Option<WorldPoint>>, CompensationError> {
    let ts = seconds(&traj.timestamps());
    let known: Vec<(f64, WorldPoint)> = traj
        .frames()
        .iter()
        .zip(&ts)
        .filter(|(f, _)| f.mask == Mask::Detected)
        .filter_map(|(f, t)| f.point.map(|p| (*t, p)))
        .collect();
    if known.len() < MIN_KNOTS {
        return Err(CompensationError::TooSparse { found: known.len() });
    }
    let xs: Vec<f64> = known.iter().map(|k| k.0).collect();
    let fit = |f: fn(&WorldPoint) -> f64| {
        let ys: Vec<f64> = known.iter().map(|k| f(&k.1)).collect();
        NaturalCubicSpline::fit(&xs, &ys).map_err(|_| CompensationError::TooSparse { found: known.len() })
    };
    let (sx, sy, sz) = (fit(|p| p.x)?, fit(|p| p.y)?, fit(|p| p.z)?);
    Ok(ts
        .iter()
        .map(|t| match (sx.eval(*t), sy.eval(*t), sz.eval(*t)) {
            (Some(x), Some(y), Some(z)) => Some(WorldPoint::new(x, y, z)),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedTrajectory {
    pub trajectory: Trajectory3D,
    pub provenance: Vec<Provenance>,
}

impl CompensatedTrajectory {
    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|x| **x == p).count()
    }
}

/// Index of the temporally nearest `Detected` frame; ties go to the earlier one.
fn nearest_detected(frames: &[TrajectoryFrame]) -> Vec<Option<usize>> {
    let n = frames.len();
    let mut prev = vec![None; n];
    let mut last = None;
    for (i, f) in frames.iter().enumerate() {
        if f.mask == Mask::Detected {
            last = Some(i);
        }
        prev[i] = last;
    }
    let mut out = vec![None; n];
    let mut next = None;
    for i in (0..n).rev() {
        if frames[i].mask == Mask::Detected {
            next = Some(i);
        }
        let t = frames[i].timestamp_ns;
        out[i] = match (prev[i], next) {
            (Some(a), Some(b)) => {
                if t - frames[a].timestamp_ns <= frames[b].timestamp_ns - t {
                    Some(a)
                } else {
                    Some(b)
                }
            }
            (a, b) => a.or(b),
        };
    }
    out
}

fn blend(alpha: f64, a: f64, b: f64) -> f64 {
    (alpha * a + (1.0 - alpha) * b).clamp(a.min(b), a.max(b))
}

/// Combines the observed trajectory with the two reconstructions.
pub fn merge(
    observed: &Trajectory3D,
    stereo: &[Option<WorldPoint>],
    spatial: &[Option<WorldPoint>],
    config: &CompensationConfig,
) -> Result<CompensatedTrajectory, CompensationError> {
    config.validate()?;
    let n = observed.len();
    if stereo.len() != n || spatial.len() != n {
        return Err(CompensationError::LengthMismatch(format!(
            "trajectory {n}, stereo {}, spatial {}",
            stereo.len(),
            spatial.len()
        )));
    }
    let frames = observed.frames();
    let nearest = nearest_detected(frames);
    let mut out = Trajectory3D::new();
    let mut provenance = Vec::with_capacity(n);
    for (i, f) in frames.iter().enumerate() {
        let (frame, prov) = match f.mask {
            Mask::Detected => (*f, Provenance::Detected),
            Mask::Compensated => (*f, Provenance::Compensated),
            Mask::Missing => {
                let filled = match (stereo[i], spatial[i], nearest[i]) {
                    (Some(s), Some(p), Some(j)) => {
                        let anchor = frames[j].point.expect("detected frames carry a point");
                        (s.distance(&anchor) <= config.epsilon3).then(|| {
                            WorldPoint::new(
                                blend(config.alpha, s.x, p.x),
                                blend(config.alpha, s.y, p.y),
                                blend(config.alpha, s.z, p.z),
                            )
                        })
                    }
                    _ => None,
                };
                match filled {
                    Some(p) => (TrajectoryFrame { point: Some(p), mask: Mask::Compensated, ..*f }, Provenance::Compensated),
                    None => (*f, Provenance::Unfilled),
                }
            }
        };
        out.push(frame)?;
        provenance.push(prov);
    }
    Ok(CompensatedTrajectory { trajectory: out, provenance })
}

fn passthrough(traj: &Trajectory3D) -> CompensatedTrajectory {
    let provenance = traj
        .frames()
        .iter()
        .map(|f| match f.mask {
            Mask::Detected => Provenance::Detected,
            Mask::Compensated => Provenance::Compensated,
            Mask::Missing => Provenance::Unfilled,
        })
        .collect();
    CompensatedTrajectory { trajectory: traj.clone(), provenance }
}

/// Full compensation pass. `left`/`right` hold the accepted pixel positions
/// per frame. Trajectories too sparse to fit a spline come back unchanged.
pub fn compensate(
    traj: &Trajectory3D,
    left: &[Option<PixelPoint>],
    right: &[Option<PixelPoint>],
    rig: &StereoRig,
    config: &CompensationConfig,
) -> Result<CompensatedTrajectory, CompensationError> {
    config.validate()?;
    if left.len() != traj.len() || right.len() != traj.len() {
        return Err(CompensationError::LengthMismatch(format!(
            "trajectory {}, left {}, right {}",
            traj.len(),
            left.len(),
            right.len()
        )));
    }
    if traj.count(Mask::Missing) == 0 {
        return Ok(passthrough(traj));
    }
    let timestamps = traj.timestamps();
    let stereo = match compensate_stereo(left, right, &timestamps, &traj.masks(), rig, config.max_gap) {
        Ok(s) => s,
        Err(CompensationError::TooSparse { .. }) => return Ok(passthrough(traj)),
        Err(e) => return Err(e),
    };
    let spatial = match spline_3d(traj) {
        Ok(s) => s,
        Err(CompensationError::TooSparse { .. }) => return Ok(passthrough(traj)),
        Err(e) => return Err(e),
    };
    merge(traj, &stereo, &spatial, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(n: usize) -> Vec<i64> {
        (0..n as i64).map(|i| i * 6_250_000).collect()
    }

    #[test]
    fn gaps_exclude_edges() {
        let p = [false, true, false, false, true, true, false, true, false];
        assert_eq!(interior_gaps(&p), vec![Gap { start: 2, len: 2 }, Gap { start: 6, len: 1 }]);
        assert!(interior_gaps(&[false, false]).is_empty());
    }

    #[test]
    fn linear_pixels_fill_collinear() {
        let t = ts(8);
        let mut seq: Vec<_> = (0..8).map(|i| Some(PixelPoint::new(100.0 + 7.0 * i as f64, 50.0 - 3.0 * i as f64))).collect();
        seq[4] = None;
        let out = interpolate_2d(&seq, &t, 20).unwrap();
        let p = out.points[4].unwrap();
        assert!((p.u - 128.0).abs() < 1e-9 && (p.v - 38.0).abs() < 1e-9);
    }

    #[test]
    fn leading_miss_stays_unfilled() {
        let t = ts(6);
        let mut seq: Vec<_> = (0..6).map(|i| Some(PixelPoint::new(i as f64, i as f64))).collect();
        seq[0] = None;
        let out = interpolate_2d(&seq, &t, 20).unwrap();
        assert!(out.points[0].is_none());
        assert!(out.points[1..].iter().all(Option::is_some));
    }

    #[test]
    fn sparse_and_long_gaps() {
        let t = ts(6);
        let seq = vec![Some(PixelPoint::new(0.0, 0.0)), None, None, Some(PixelPoint::new(1.0, 1.0)), None, Some(PixelPoint::new(2.0, 2.0))];
        assert!(matches!(interpolate_2d(&seq, &t, 20), Err(CompensationError::TooSparse { found: 3 })));

        let t = ts(30);
        let seq: Vec<_> = (0..30).map(|i| if (3..27).contains(&i) { None } else { Some(PixelPoint::new(i as f64, 0.0)) }).collect();
        let out = interpolate_2d(&seq, &t, 20).unwrap();
        assert_eq!(out.long_gaps, vec![Gap { start: 3, len: 24 }]);
        assert!(out.points[3..27].iter().all(Option::is_none));
    }

    fn line_traj(n: usize, missing: &[usize]) -> Trajectory3D {
        let mut t = Trajectory3D::new();
        for (i, time) in ts(n).into_iter().enumerate() {
            if missing.contains(&i) {
                t.push_missing(i as u64, time).unwrap();
            } else {
                let s = i as f64;
                t.push_detected(i as u64, time, WorldPoint::new(0.1 * s, 5.0 - 0.2 * s, 1.0 + 0.05 * s)).unwrap();
            }
        }
        t
    }

    #[test]
    fn spatial_spline_on_line() {
        let t = line_traj(10, &[5]);
        let s = spline_3d(&t).unwrap();
        let p = s[5].unwrap();
        assert!(p.distance(&WorldPoint::new(0.5, 4.0, 1.25)) < 1e-9);

        let full = line_traj(10, &[]);
        let s = spline_3d(&full).unwrap();
        for (a, f) in s.iter().zip(full.frames()) {
            assert!(a.unwrap().distance(&f.point.unwrap()) < 1e-12);
        }
    }

    #[test]
    fn merge_identities() {
        let cfg = CompensationConfig::default();
        let full = line_traj(6, &[]);
        let none = vec![None; 6];
        let out = merge(&full, &none, &none, &cfg).unwrap();
        assert_eq!(out.trajectory, full);
        assert!(out.provenance.iter().all(|p| *p == Provenance::Detected));

        let gappy = line_traj(6, &[2]);
        let stereo: Vec<_> = (0..6).map(|i| Some(WorldPoint::new(0.2 + 0.01 * i as f64, 4.6, 1.1))).collect();
        let spatial: Vec<_> = (0..6).map(|_| Some(WorldPoint::new(0.0, 0.0, 0.0))).collect();
        let one = CompensationConfig { alpha: 1.0, ..cfg };
        let out = merge(&gappy, &stereo, &spatial, &one).unwrap();
        assert_eq!(out.trajectory.frames()[2].point, stereo[2]);
        assert_eq!(out.provenance[2], Provenance::Compensated);
        assert_eq!(out.trajectory.frames()[2].mask, Mask::Compensated);

        // stereo estimate two epsilons away from the nearest detection
        let anchor = gappy.frames()[1].point.unwrap();
        let far = WorldPoint::new(anchor.x + 2.0 * cfg.epsilon3, anchor.y, anchor.z);
        let stereo: Vec<_> = (0..6).map(|_| Some(far)).collect();
        let out = merge(&gappy, &stereo, &spatial, &cfg).unwrap();
        assert_eq!(out.provenance[2], Provenance::Unfilled);
        assert!(out.trajectory.frames()[2].point.is_none());
    }

    #[test]
    fn nearest_prefers_earlier_on_tie() {
        let t = line_traj(5, &[2]);
        let n = nearest_detected(t.frames());
        assert_eq!(n[2], Some(1));
        let t = line_traj(5, &[0, 1]);
        assert_eq!(nearest_detected(t.frames())[0], Some(2));
    }

    #[test]
    fn config_validation() {
        assert!(CompensationConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(CompensationConfig { epsilon3: 0.0, ..Default::default() }.validate().is_err());
        assert!(CompensationConfig { max_gap: 0, ..Default::default() }.validate().is_err());
        let c: CompensationConfig = serde_json::from_str(r#"{"alpha":0.3,"epsilon3":0.5,"max_gap":10}"#).unwrap();
        assert_eq!(c.alpha, 0.3);
        assert!(serde_json::from_str::<CompensationConfig>(r#"{"beta":1}"#).is_err());
    }
}
