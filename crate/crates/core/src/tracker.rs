//! Frame-by-frame stereo tracking with predictive ROI steering and
//! plausibility gating, plus the four comparison strategies.
//!
//! Per frame: the crops are applied to each camera's report, a pair is kept
//! only if both cameras see the shuttlecock on (nearly) the same scanline, the
//! pair is triangulated, and the 3D point must lie within `epsilon2` of the
//! position predicted from a per-axis polynomial fit over recent accepted
//! points. Every `roi_refresh_interval` frames the prediction is projected into
//! both images to recentre the crops.

use std::collections::VecDeque;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compensation::{compensate, CompensationConfig, CompensationError, Provenance};
use crate::detection_io::{detect, Detection2D, DetectionIoError, DetectionStream, RoI};
use crate::geometry::{project, triangulate, CameraModel, PixelPoint, StereoRig, WorldPoint};
use crate::polyfit::{polyfit, polyval};
use crate::timing::Stopwatch;
use crate::trajectory::{Trajectory3D, TrajectoryError};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("need at least {needed} points to fit, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("polynomial fit is singular")]
    SingularFit,
    #[error("prediction at {dt:.4} s from the window exceeds the {limit:.4} s extrapolation limit")]
    ExtrapolationTooFar { dt: f64, limit: f64 },
    #[error("left/right detections misaligned: {0}")]
    AlignmentError(String),
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Detection(#[from] DetectionIoError),
    #[error(transparent)]
    Compensation(#[from] CompensationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Maximum vertical pixel offset between left and right detections.
    pub epsilon1: f64,
    /// Maximum distance in metres between triangulated and predicted points.
    pub epsilon2: f64,
    pub roi_size: f64,
    pub roi_refresh_interval: u32,
    pub fit_window: usize,
    pub fit_min_points: usize,
    pub fit_degree: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            epsilon1: 10.0,
            epsilon2: 0.5,
            roi_size: 640.0,
            roi_refresh_interval: 10,
            fit_window: 15,
            fit_min_points: 5,
            fit_degree: 2,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        let bad = |m: String| Err(TrackError::InvalidConfig(m));
        if !(self.epsilon1 > 0.0 && self.epsilon2 > 0.0 && self.roi_size > 0.0) {
            return bad("epsilon1, epsilon2 and roi_size must be positive".into());
        }
        if self.roi_refresh_interval < 1 {
            return bad("roi_refresh_interval must be at least 1".into());
        }
        if self.fit_min_points < self.fit_degree + 1 {
            return bad(format!(
                "fit_min_points ({}) must be at least fit_degree + 1 ({})",
                self.fit_min_points,
                self.fit_degree + 1
            ));
        }
        if self.fit_window < self.fit_min_points {
            return bad("fit_window must be at least fit_min_points".into());
        }
        Ok(())
    }
}

/// Independent per-axis polynomials in `t - t0` (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisFit {
    pub coeffs: [Vec<f64>; 3],
    pub t0_ns: i64,
    pub window_span: f64,
    pub residual_rms: f64,
}

fn seconds_between(from_ns: i64, to_ns: i64) -> f64 {
    (to_ns - from_ns) as f64 * 1e-9
}

pub fn fit_axes(window: &[(WorldPoint, i64)], degree: usize, min_points: usize) -> Result<AxisFit, TrackError> {
    let needed = min_points.max(degree + 1);
    if window.len() < needed {
        return Err(TrackError::InsufficientPoints { needed, got: window.len() });
    }
    let t0 = window[0].1;
    let ts: Vec<f64> = window.iter().map(|(_, t)| seconds_between(t0, *t)).collect();
    let axis = |f: fn(&WorldPoint) -> f64| -> Result<Vec<f64>, TrackError> {
        let ys: Vec<f64> = window.iter().map(|(p, _)| f(p)).collect();
        polyfit(&ts, &ys, degree).ok_or(TrackError::SingularFit)
    };
    let coeffs = [axis(|p| p.x)?, axis(|p| p.y)?, axis(|p| p.z)?];
    let mut sq = 0.0;
    for ((p, _), t) in window.iter().zip(&ts) {
        let q = WorldPoint::new(polyval(&coeffs[0], *t), polyval(&coeffs[1], *t), polyval(&coeffs[2], *t));
        sq += p.distance(&q).powi(2);
    }
    let window_span = ts.last().copied().unwrap_or(0.0);
    Ok(AxisFit { coeffs, t0_ns: t0, window_span, residual_rms: (sq / window.len() as f64).sqrt() })
}

/// Evaluates the fit at `t_ns`. Extrapolation is allowed up to twice the
/// window span on either side of the window.
pub fn predict_position(fit: &AxisFit, t_ns: i64) -> Result<WorldPoint, TrackError> {
    let t = seconds_between(fit.t0_ns, t_ns);
    let limit = 2.0 * fit.window_span;
    let beyond = if t > fit.window_span { t - fit.window_span } else if t < 0.0 { -t } else { 0.0 };
    if beyond > limit {
        return Err(TrackError::ExtrapolationTooFar { dt: beyond, limit });
    }
    Ok(WorldPoint::new(polyval(&fit.coeffs[0], t), polyval(&fit.coeffs[1], t), polyval(&fit.coeffs[2], t)))
}

/// Crop centred on the image, clamped to its bounds.
pub fn initial_roi(cam: &CameraModel, size: f64) -> RoI {
    RoI::new(PixelPoint::new(cam.width() as f64 / 2.0, cam.height() as f64 / 2.0), size, size)
        .clamped(cam.width(), cam.height())
}

/// Scanline consistency of a rectified pair. Misses are never valid.
pub fn validate_pair(dl: &Detection2D, dr: &Detection2D, epsilon1: f64) -> bool {
    dl.found && dr.found && (dl.point.v - dr.point.v).abs() <= epsilon1
}

/// Passes unconditionally when there is no prediction yet.
pub fn plausibility_gate(detected: &WorldPoint, predicted: Option<&WorldPoint>, epsilon2: f64) -> bool {
    predicted.is_none_or(|p| detected.distance(p) <= epsilon2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepOutcome {
    Accepted,
    RejectedPair,
    RejectedGate,
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Full-frame detection, every found pair triangulated.
    A,
    /// Fixed central ROI, no gates.
    B,
    /// Predictive ROI plus pair and plausibility gates.
    C,
    /// C followed by trajectory compensation.
    D,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::A, Strategy::B, Strategy::C, Strategy::D];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Strategy::A),
            "B" => Some(Strategy::B),
            "C" => Some(Strategy::C),
            "D" => Some(Strategy::D),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::A => "A",
            Strategy::B => "B",
            Strategy::C => "C",
            Strategy::D => "D",
        }
    }

    pub fn mode(self) -> TrackingMode {
        match self {
            Strategy::A => TrackingMode { roi: RoiPolicy::FullFrame, gates: false },
            Strategy::B => TrackingMode { roi: RoiPolicy::FixedCenter, gates: false },
            Strategy::C | Strategy::D => TrackingMode { roi: RoiPolicy::Predictive, gates: true },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiPolicy {
    FullFrame,
    FixedCenter,
    Predictive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackingMode {
    pub roi: RoiPolicy,
    pub gates: bool,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub window: VecDeque<(WorldPoint, i64)>,
    pub roi_left: RoI,
    pub roi_right: RoI,
    pub frames_since_roi_update: u32,
    pub current_fit: Option<AxisFit>,
    pub trajectory: Trajectory3D,
    /// Pixel pair behind every accepted frame, `None` elsewhere.
    pub accepted_pixels: Vec<Option<(PixelPoint, PixelPoint)>>,
    pub outcomes: Vec<StepOutcome>,
    consecutive_rejects: usize,
}

impl TrackerState {
    pub fn new(rig: &StereoRig, config: &TrackerConfig) -> Self {
        Self {
            window: VecDeque::with_capacity(config.fit_window + 1),
            roi_left: initial_roi(&rig.left, config.roi_size),
            roi_right: initial_roi(&rig.right, config.roi_size),
            frames_since_roi_update: 0,
            current_fit: None,
            trajectory: Trajectory3D::new(),
            accepted_pixels: Vec::new(),
            outcomes: Vec::new(),
            consecutive_rejects: 0,
        }
    }

    /// Recentres both crops on the projected prediction once the refresh
    /// interval has elapsed. Returns whether a refresh happened. A camera
    /// whose projection fails keeps its previous crop.
    pub fn refresh_rois(&mut self, rig: &StereoRig, config: &TrackerConfig, t_next_ns: i64) -> bool {
        if self.frames_since_roi_update < config.roi_refresh_interval {
            return false;
        }
        let Some(fit) = &self.current_fit else {
            return false;
        };
        let predicted = match predict_position(fit, t_next_ns) {
            Ok(p) => p,
            Err(e) => {
                debug!("roi refresh skipped: {e}");
                return false;
            }
        };
        for (cam, roi) in [(&rig.left, &mut self.roi_left), (&rig.right, &mut self.roi_right)] {
            match project(&predicted, cam) {
                Ok(px) if px.is_finite() => {
                    *roi = RoI::new(px, config.roi_size, config.roi_size).clamped(cam.width(), cam.height());
                }
                Ok(_) => debug!("roi refresh: non-finite projection"),
                Err(e) => debug!("roi refresh: {e}"),
            }
        }
        self.frames_since_roi_update = 0;
        true
    }

    fn reset_track(&mut self, rig: &StereoRig, config: &TrackerConfig) {
        self.window.clear();
        self.current_fit = None;
        self.roi_left = initial_roi(&rig.left, config.roi_size);
        self.roi_right = initial_roi(&rig.right, config.roi_size);
        self.frames_since_roi_update = 0;
    }
}

/// One tracker per rally; a sequential state machine.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    pub state: TrackerState,
    rig: &'a StereoRig,
    config: TrackerConfig,
    mode: TrackingMode,
}

impl<'a> Tracker<'a> {
    pub fn new(rig: &'a StereoRig, config: TrackerConfig, mode: TrackingMode) -> Result<Self, TrackError> {
        config.validate()?;
        Ok(Self { state: TrackerState::new(rig, &config), rig, config, mode })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Crops currently applied to the left and right detections.
    pub fn rois(&self) -> (RoI, RoI) {
        match self.mode.roi {
            RoiPolicy::FullFrame => (RoI::full_frame(&self.rig.left), RoI::full_frame(&self.rig.right)),
            RoiPolicy::FixedCenter | RoiPolicy::Predictive => (self.state.roi_left, self.state.roi_right),
        }
    }

    /// Called before the frame at `t_next_ns` is detected.
    pub fn prepare(&mut self, t_next_ns: i64) -> bool {
        self.mode.roi == RoiPolicy::Predictive && self.state.refresh_rois(self.rig, &self.config, t_next_ns)
    }

    /// Prediction for a timestamp, if a usable fit exists.
    pub fn prediction(&self, t_ns: i64) -> Option<WorldPoint> {
        self.state.current_fit.as_ref().and_then(|f| predict_position(f, t_ns).ok())
    }

    /// Processes one aligned pair of (already cropped) detections.
    pub fn step(&mut self, dl: &Detection2D, dr: &Detection2D) -> Result<StepOutcome, TrackError> {
        if dl.timestamp_ns != dr.timestamp_ns || dl.frame_index != dr.frame_index {
            return Err(TrackError::AlignmentError(format!(
                "left frame {} @ {} ns vs right frame {} @ {} ns",
                dl.frame_index, dl.timestamp_ns, dr.frame_index, dr.timestamp_ns
            )));
        }
        let ts = dl.timestamp_ns;
        let mut accepted = None;
        let outcome = if !(dl.found && dr.found) {
            StepOutcome::Missed
        } else if self.mode.gates && !validate_pair(dl, dr, self.config.epsilon1) {
            StepOutcome::RejectedPair
        } else {
            match triangulate(&dl.point, &dr.point, self.rig) {
                Err(_) => StepOutcome::RejectedPair,
                Ok(p) if !p.is_finite() => StepOutcome::RejectedPair,
                Ok(p) => {
                    let predicted = if self.mode.gates { self.prediction(ts) } else { None };
                    if plausibility_gate(&p, predicted.as_ref(), self.config.epsilon2) {
                        accepted = Some(p);
                        StepOutcome::Accepted
                    } else {
                        StepOutcome::RejectedGate
                    }
                }
            }
        };

        let st = &mut self.state;
        match accepted {
            Some(p) => {
                st.trajectory.push_detected(dl.frame_index, ts, p)?;
                st.accepted_pixels.push(Some((dl.point, dr.point)));
                st.consecutive_rejects = 0;
                if self.mode.gates {
                    st.window.push_back((p, ts));
                    while st.window.len() > self.config.fit_window {
                        st.window.pop_front();
                    }
                    if st.window.len() >= self.config.fit_min_points {
                        let pts: Vec<_> = st.window.iter().copied().collect();
                        st.current_fit = fit_axes(&pts, self.config.fit_degree, self.config.fit_min_points).ok();
                    }
                }
            }
            None => {
                st.trajectory.push_missing(dl.frame_index, ts)?;
                st.accepted_pixels.push(None);
                st.consecutive_rejects += 1;
                if self.mode.gates && st.consecutive_rejects >= self.config.fit_window {
                    // lost the shuttlecock: start over from the central crop
                    st.consecutive_rejects = 0;
                    st.reset_track(self.rig, &self.config);
                }
            }
        }
        st.frames_since_roi_update = st.frames_since_roi_update.saturating_add(1);
        st.outcomes.push(outcome);
        Ok(outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub frames: usize,
    pub accepted: usize,
    pub rejected_pair: usize,
    pub rejected_gate: usize,
    pub missed: usize,
    pub mean_step_us: f64,
    pub fps_equivalent: f64,
    #[serde(skip)]
    pub step_ns: Vec<u64>,
}

impl RunStats {
    fn from_outcomes(outcomes: &[StepOutcome], step_ns: Vec<u64>) -> Self {
        let count = |o: StepOutcome| outcomes.iter().filter(|x| **x == o).count();
        let mean_ns = if step_ns.is_empty() { 0.0 } else { step_ns.iter().sum::<u64>() as f64 / step_ns.len() as f64 };
        Self {
            frames: outcomes.len(),
            accepted: count(StepOutcome::Accepted),
            rejected_pair: count(StepOutcome::RejectedPair),
            rejected_gate: count(StepOutcome::RejectedGate),
            missed: count(StepOutcome::Missed),
            mean_step_us: mean_ns / 1e3,
            fps_equivalent: if mean_ns > 0.0 { 1e9 / mean_ns } else { 0.0 },
            step_ns,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub trajectory: Trajectory3D,
    /// Present for strategy D only.
    pub provenance: Option<Vec<Provenance>>,
    pub outcomes: Vec<StepOutcome>,
    /// Accepted pixel pairs per frame, as fed to compensation.
    pub accepted_pixels: Vec<Option<(PixelPoint, PixelPoint)>>,
    pub stats: RunStats,
}

pub fn check_aligned(left: &DetectionStream, right: &DetectionStream) -> Result<(), TrackError> {
    if left.len() != right.len() {
        return Err(TrackError::AlignmentError(format!(
            "left stream has {} frames, right has {}",
            left.len(),
            right.len()
        )));
    }
    if let Some((a, b)) = left
        .detections()
        .iter()
        .zip(right.detections())
        .find(|(a, b)| a.timestamp_ns != b.timestamp_ns)
    {
        return Err(TrackError::AlignmentError(format!(
            "frame {}: left {} ns vs right {} ns",
            a.frame_index, a.timestamp_ns, b.timestamp_ns
        )));
    }
    Ok(())
}

/// Runs one strategy over a pair of pre-computed detection streams.
pub fn run_strategy(
    left: &DetectionStream,
    right: &DetectionStream,
    strategy: Strategy,
    rig: &StereoRig,
    config: &TrackerConfig,
    compensation: &CompensationConfig,
) -> Result<StrategyRun, TrackError> {
    check_aligned(left, right)?;
    let mut tracker = Tracker::new(rig, *config, strategy.mode())?;
    let mut step_ns = Vec::with_capacity(left.len());
    for i in 0..left.len() {
        let watch = Stopwatch::start();
        tracker.prepare(left.detections()[i].timestamp_ns);
        let (roi_l, roi_r) = tracker.rois();
        let dl = detect(left, i, &roi_l)?;
        let dr = detect(right, i, &roi_r)?;
        tracker.step(&dl, &dr)?;
        step_ns.push(watch.elapsed_ns());
    }
    let state = tracker.state;
    let stats = RunStats::from_outcomes(&state.outcomes, step_ns);
    let (trajectory, provenance) = if strategy == Strategy::D {
        let lseq: Vec<_> = state.accepted_pixels.iter().map(|p| p.map(|(l, _)| l)).collect();
        let rseq: Vec<_> = state.accepted_pixels.iter().map(|p| p.map(|(_, r)| r)).collect();
        let out = compensate(&state.trajectory, &lseq, &rseq, rig, compensation)?;
        (out.trajectory, Some(out.provenance))
    } else {
        (state.trajectory, None)
    };
    Ok(StrategyRun {
        strategy,
        trajectory,
        provenance,
        outcomes: state.outcomes,
        accepted_pixels: state.accepted_pixels,
        stats,
    })
}
