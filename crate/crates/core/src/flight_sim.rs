//! Synthetic shuttlecock flights and faulty-detector rendering.
//!
//! Flight dynamics: `a = g_vec - (g / v_t^2) |v| v`, integrated with fixed-step
//! RK4. The drag term is normalised so that free-fall speed saturates at the
//! terminal velocity `v_t`.

use log::warn;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection_io::{CameraId, Detection2D, DetectionIoError, DetectionStream};
use crate::geometry::{project, CameraModel, PixelPoint, StereoRig, WorldPoint};
use crate::trajectory::Trajectory3D;

/// Camera frame rate used for all fixtures.
pub const FRAME_RATE_HZ: f64 = 160.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid rally script: {0}")]
    InvalidScript(String),
    #[error("invalid flight parameters: {0}")]
    InvalidParams(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Stream(#[from] DetectionIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightParams {
    pub gravity: f64,
    pub terminal_velocity: f64,
    pub timestep: f64,
    /// Longest flight time simulated per segment, seconds.
    pub duration: f64,
}

impl Default for FlightParams {
    fn default() -> Self {
        Self { gravity: 9.81, terminal_velocity: 6.8, timestep: 1.0 / FRAME_RATE_HZ, duration: 4.0 }
    }
}

impl FlightParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.gravity > 0.0) {
            return Err(SimError::InvalidParams(format!("gravity must be positive, got {}", self.gravity)));
        }
        if !(self.terminal_velocity > 0.0) {
            return Err(SimError::InvalidParams(format!(
                "terminal_velocity must be positive, got {}",
                self.terminal_velocity
            )));
        }
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(SimError::InvalidParams(format!("timestep must be positive, got {}", self.timestep)));
        }
        if !(self.duration >= 0.0) {
            return Err(SimError::InvalidParams(format!("duration must be non-negative, got {}", self.duration)));
        }
        Ok(())
    }

    pub fn timestep_ns(&self) -> i64 {
        (self.timestep * 1e9).round() as i64
    }

    fn drag_coefficient(&self) -> f64 {
        self.gravity / (self.terminal_velocity * self.terminal_velocity)
    }

    /// Acceleration for a given velocity.
    pub fn acceleration(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity) - self.drag_coefficient() * v.norm() * v
    }

    /// One RK4 step of the position/velocity state.
    pub fn rk4_step(&self, p: &Vector3<f64>, v: &Vector3<f64>, dt: f64) -> (Vector3<f64>, Vector3<f64>) {
        let k1v = self.acceleration(v);
        let k1p = *v;
        let v2 = v + 0.5 * dt * k1v;
        let k2v = self.acceleration(&v2);
        let k2p = v2;
        let v3 = v + 0.5 * dt * k2v;
        let k3v = self.acceleration(&v3);
        let k3p = v3;
        let v4 = v + dt * k3v;
        let k4v = self.acceleration(&v4);
        let k4p = v4;
        (
            p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
            v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub launch_time: f64,
    pub launch_position: WorldPoint,
    pub launch_velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RallyScript {
    pub segments: Vec<Segment>,
}

impl RallyScript {
    pub fn single(launch_position: WorldPoint, launch_velocity: [f64; 3]) -> Self {
        Self { segments: vec![Segment { launch_time: 0.0, launch_position, launch_velocity }] }
    }

    fn validate(&self, params: &FlightParams) -> Result<Vec<i64>, SimError> {
        if self.segments.is_empty() {
            return Err(SimError::InvalidScript("script has no segments".into()));
        }
        let mut frames = Vec::with_capacity(self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            if !s.launch_time.is_finite() || !s.launch_position.is_finite() || !s.launch_velocity.iter().all(|v| v.is_finite()) {
                return Err(SimError::InvalidScript(format!("segment {i} has non-finite values")));
            }
            if s.launch_position.z <= 0.0 {
                return Err(SimError::InvalidScript(format!("segment {i} launches at or below the ground")));
            }
            let frame = (s.launch_time / params.timestep).round() as i64;
            if let Some(&prev) = frames.last() {
                if frame <= prev {
                    return Err(SimError::InvalidScript(format!(
                        "segment {i} launch time {} is not after the previous segment",
                        s.launch_time
                    )));
                }
            }
            frames.push(frame);
        }
        Ok(frames)
    }
}

/// Integrates every segment of a rally on the frame grid.
///
/// Samples sit at `k * timestep` (as integer nanoseconds). A segment ends at
/// ground contact (the sample with `z <= 0` is dropped), when the next
/// segment launches, or after `params.duration` seconds.
pub fn simulate_flight(script: &RallyScript, params: &FlightParams) -> Result<Trajectory3D, SimError> {
    params.validate()?;
    let launch_frames = script.validate(params)?;
    let dt = params.timestep;
    let dt_ns = params.timestep_ns();
    let max_steps = (params.duration / dt + 1e-9).floor() as i64;
    let mut samples: Vec<(i64, WorldPoint)> = Vec::new();

    for (i, seg) in script.segments.iter().enumerate() {
        let start = launch_frames[i];
        let next = launch_frames.get(i + 1).copied().unwrap_or(i64::MAX);
        let mut p = seg.launch_position.to_vector();
        let mut v = Vector3::from(seg.launch_velocity);
        // Later segments must not overlap samples already emitted.
        if samples.last().is_some_and(|&(t, _)| t >= start * dt_ns) {
            samples.retain(|&(t, _)| t < start * dt_ns);
        }
        samples.push((start * dt_ns, WorldPoint::from_vector(&p)));
        let mut step = 0;
        while step < max_steps {
            let frame = start + step + 1;
            if frame >= next {
                break;
            }
            let (np, nv) = params.rk4_step(&p, &v, dt);
            if np.z <= 0.0 {
                break;
            }
            p = np;
            v = nv;
            step += 1;
            samples.push((frame * dt_ns, WorldPoint::from_vector(&p)));
        }
    }
    Trajectory3D::from_points(samples).map_err(|e| SimError::InvalidScript(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub pixel_sigma: f64,
    pub miss_rate: f64,
    pub false_positive_rate: f64,
    pub false_positive_radius: f64,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { pixel_sigma: 0.0, miss_rate: 0.0, false_positive_rate: 0.0, false_positive_radius: 0.0, rng_seed: 0 }
    }

    /// 1 px sigma, 10% misses, 5% false positives.
    pub fn reference(seed: u64) -> Self {
        Self {
            pixel_sigma: 1.0,
            miss_rate: 0.1,
            false_positive_rate: 0.05,
            false_positive_radius: 50.0,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SimError::InvalidNoise(format!("{name} must lie in [0,1], got {p}")))
            }
        };
        prob("miss_rate", self.miss_rate)?;
        prob("false_positive_rate", self.false_positive_rate)?;
        if !(self.pixel_sigma >= 0.0 && self.pixel_sigma.is_finite()) {
            return Err(SimError::InvalidNoise(format!("pixel_sigma must be >= 0, got {}", self.pixel_sigma)));
        }
        if !(self.false_positive_radius >= 0.0 && self.false_positive_radius.is_finite()) {
            return Err(SimError::InvalidNoise("false_positive_radius must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draws one camera's report for one frame. Every call consumes the same
/// number of random values so streams stay aligned across parameter changes.
fn render_one(
    truth: Option<PixelPoint>,
    cam: &CameraModel,
    noise: &NoiseModel,
    normal: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Option<(PixelPoint, f64)> {
    let nu = normal.sample(rng);
    let nv = normal.sample(rng);
    let miss_draw: f64 = rng.random();
    let fp_draw: f64 = rng.random();
    let fp_u: f64 = rng.random::<f64>() * cam.width() as f64;
    let fp_v: f64 = rng.random::<f64>() * cam.height() as f64;
    let fp_r: f64 = noise.false_positive_radius * rng.random::<f64>().sqrt();
    let fp_theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let true_conf: f64 = 0.8 + 0.2 * rng.random::<f64>();
    let fp_conf: f64 = 0.3 + 0.6 * rng.random::<f64>();

    let truth = truth?;
    if miss_draw < noise.miss_rate {
        return None;
    }
    if fp_draw < noise.false_positive_rate {
        let u = (fp_u + fp_r * fp_theta.cos()).clamp(0.0, cam.width() as f64 - 1e-6);
        let v = (fp_v + fp_r * fp_theta.sin()).clamp(0.0, cam.height() as f64 - 1e-6);
        return Some((PixelPoint::new(u, v), fp_conf));
    }
    Some((PixelPoint::new(truth.u + nu, truth.v + nv), true_conf))
}

/// Renders what a fallible detector would report for each camera.
pub fn render_detections(
    traj: &Trajectory3D,
    rig: &StereoRig,
    noise: &NoiseModel,
) -> Result<(DetectionStream, DetectionStream), SimError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    let normal = Normal::new(0.0, noise.pixel_sigma).map_err(|e| SimError::InvalidNoise(e.to_string()))?;
    let mut left = Vec::with_capacity(traj.len());
    let mut right = Vec::with_capacity(traj.len());
    let mut visible = 0usize;

    for (i, f) in traj.frames().iter().enumerate() {
        let visible_in = |cam: &CameraModel| {
            f.point
                .and_then(|p| project(&p, cam).ok())
                .filter(|px| cam.contains(px))
        };
        let tl = visible_in(&rig.left);
        let tr = visible_in(&rig.right);
        if tl.is_some() || tr.is_some() {
            visible += 1;
        }
        let idx = i as u64;
        for (truth, cam, out) in [(tl, &rig.left, &mut left), (tr, &rig.right, &mut right)] {
            let det = match render_one(truth, cam, noise, &normal, &mut rng) {
                Some((px, conf)) => Detection2D::found(idx, f.timestamp_ns, px, conf),
                None => Detection2D::missed(idx, f.timestamp_ns),
            };
            out.push(det);
        }
    }
    if !traj.is_empty() && visible * 2 < traj.len() {
        warn!("only {visible} of {} frames project into either camera", traj.len());
    }
    Ok((DetectionStream::new(CameraId::Left, left)?, DetectionStream::new(CameraId::Right, right)?))
}

/// A serve from the far court toward the rig, returned once it drops to
/// `return_height`. Launch parameters are jittered by `rng`.
pub fn serve_and_return<R: Rng>(rng: &mut R, params: &FlightParams) -> Result<RallyScript, SimError> {
    let jitter = |rng: &mut R, half: f64| (rng.random::<f64>() * 2.0 - 1.0) * half;
    let serve = Segment {
        launch_time: 0.0,
        launch_position: WorldPoint::new(0.4 + jitter(rng, 0.3), 11.5 + jitter(rng, 0.5), 1.1 + jitter(rng, 0.1)),
        launch_velocity: [jitter(rng, 1.0), -16.0 + jitter(rng, 2.0), 13.0 + jitter(rng, 2.0)],
    };
    let first = simulate_flight(&RallyScript { segments: vec![serve] }, params)?;
    let return_height = 1.3 + jitter(rng, 0.2);
    let frames = first.frames();
    let mut descended = false;
    let mut hit = None;
    for w in frames.windows(2) {
        let (a, b) = (w[0].point.unwrap(), w[1].point.unwrap());
        if b.z < a.z {
            descended = true;
        }
        if descended && b.z <= return_height {
            hit = Some(w[1]);
            break;
        }
    }
    let hit = hit.ok_or_else(|| SimError::InvalidScript("serve never descends to the return height".into()))?;
    let hp = hit.point.unwrap();
    let ret = Segment {
        launch_time: hit.timestamp_ns as f64 * 1e-9,
        launch_position: hp,
        launch_velocity: [jitter(rng, 1.5), 14.0 + jitter(rng, 2.0), 9.0 + jitter(rng, 2.0)],
    };
    Ok(RallyScript { segments: vec![serve, ret] })
}

/// [`serve_and_return`] drawn from a generator seeded with `seed`.
pub fn random_rally(seed: u64, params: &FlightParams) -> Result<RallyScript, SimError> {
    serve_and_return(&mut ChaCha8Rng::seed_from_u64(seed), params)
}

/// Ground truth and noisy detections for a set of reproducible rallies.
#[derive(Debug, Clone)]
pub struct RallyFixture {
    pub script: RallyScript,
    pub truth: Trajectory3D,
    pub left: DetectionStream,
    pub right: DetectionStream,
}

pub fn generate_rallies(
    count: usize,
    seed: u64,
    rig: &StereoRig,
    params: &FlightParams,
    noise: &NoiseModel,
) -> Result<Vec<RallyFixture>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let script = serve_and_return(&mut rng, params)?;
            let truth = simulate_flight(&script, params)?;
            let n = NoiseModel { rng_seed: noise.rng_seed.wrapping_add(i as u64), ..*noise };
            let (left, right) = render_detections(&truth, rig, &n)?;
            Ok(RallyFixture { script, truth, left, right })
        })
        .collect()
}
