//! Browser bindings for the demo page in `www/`. Every export takes plain
//! numbers and returns a JSON string the page draws from.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use shuttletrack::comparison::{compare_strategies, ComparisonTable};
use shuttletrack::flight_sim::{generate_rallies, random_rally};
use shuttletrack::metrics::{report, MetricsReport};
use shuttletrack::{
    project, render_detections, reprojection_error, run_strategy, simulate_flight, triangulate, CompensationConfig,
    FlightParams, NoiseModel, PixelPoint, StereoRig, Strategy, TrackerConfig, WorldPoint,
};

#[derive(Serialize)]
struct Frame {
    t: f64,
    truth: Option<[f64; 3]>,
    left: Option<[f64; 2]>,
    right: Option<[f64; 2]>,
    tracked: Option<[f64; 3]>,
    mask: u8,
}

#[derive(Serialize)]
struct TrackView {
    strategy: Strategy,
    image: [u32; 2],
    frames: Vec<Frame>,
    metrics: MetricsReport,
}

fn noise(seed: u64, pixel_sigma: f64, miss_rate: f64) -> NoiseModel {
    NoiseModel { pixel_sigma, miss_rate, ..NoiseModel::reference(seed) }
}

fn xyz(p: WorldPoint) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Simulates one rally, tracks it with `strategy` and returns per-frame truth,
/// detections and the tracked trajectory.
pub fn track_json(seed: u64, strategy: &str, pixel_sigma: f64, miss_rate: f64) -> Result<String, String> {
    let strategy = Strategy::parse(strategy).ok_or_else(|| format!("unknown strategy '{strategy}'"))?;
    let rig = StereoRig::default();
    let params = FlightParams::default();
    let script = random_rally(seed, &params).map_err(|e| e.to_string())?;
    let truth = simulate_flight(&script, &params).map_err(|e| e.to_string())?;
    let (left, right) = render_detections(&truth, &rig, &noise(seed, pixel_sigma, miss_rate)).map_err(|e| e.to_string())?;
    let run = run_strategy(&left, &right, strategy, &rig, &TrackerConfig::default(), &CompensationConfig::default())
        .map_err(|e| e.to_string())?;
    let px = |p: Option<PixelPoint>| p.map(|p| [p.u, p.v]);
    let frames = truth
        .frames()
        .iter()
        .zip(run.trajectory.frames())
        .enumerate()
        .map(|(i, (gt, tr))| Frame {
            t: gt.timestamp_ns as f64 * 1e-9,
            truth: gt.point.map(xyz),
            left: px(left.detections()[i].pixel()),
            right: px(right.detections()[i].pixel()),
            tracked: tr.point.map(xyz),
            mask: tr.mask.as_u8(),
        })
        .collect();
    let view = TrackView {
        strategy,
        image: [rig.left.width(), rig.left.height()],
        frames,
        metrics: report(&run.trajectory, truth.len()),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Probe {
    left: Option<[f64; 2]>,
    right: Option<[f64; 2]>,
    recovered: Option<[f64; 3]>,
    error_m: Option<f64>,
    reprojection_px: Option<f64>,
    error: Option<String>,
}

/// Projects a world point into both cameras of the default rig, perturbs the
/// right pixel by `(du, dv)` and triangulates back.
pub fn probe_json(x: f64, y: f64, z: f64, du: f64, dv: f64) -> String {
    let rig = StereoRig::default();
    let p = WorldPoint::new(x, y, z);
    let probe = match (project(&p, &rig.left), project(&p, &rig.right)) {
        (Ok(l), Ok(r)) => {
            let r = PixelPoint::new(r.u + du, r.v + dv);
            match triangulate(&l, &r, &rig) {
                Ok(q) => Probe {
                    left: Some([l.u, l.v]),
                    right: Some([r.u, r.v]),
                    recovered: Some(xyz(q)),
                    error_m: Some(q.distance(&p)),
                    reprojection_px: reprojection_error(&q, &l, &r, &rig).ok(),
                    error: None,
                },
                Err(e) => Probe {
                    left: Some([l.u, l.v]),
                    right: Some([r.u, r.v]),
                    recovered: None,
                    error_m: None,
                    reprojection_px: None,
                    error: Some(e.to_string()),
                },
            }
        }
        (Err(e), _) | (_, Err(e)) => Probe {
            left: None,
            right: None,
            recovered: None,
            error_m: None,
            reprojection_px: None,
            error: Some(e.to_string()),
        },
    };
    serde_json::to_string(&probe).expect("serializable")
}

/// Averaged four-strategy table over `rallies` simulated rallies.
pub fn compare_json(seed: u64, rallies: usize) -> Result<String, String> {
    let rig = StereoRig::default();
    let fixtures = generate_rallies(rallies.max(1), seed, &rig, &FlightParams::default(), &NoiseModel::reference(seed))
        .map_err(|e| e.to_string())?;
    let tables: Vec<ComparisonTable> = fixtures
        .iter()
        .map(|f| {
            compare_strategies(&f.left, &f.right, &rig, &TrackerConfig::default(), &CompensationConfig::default(), &Strategy::ALL)
                .table
        })
        .collect();
    serde_json::to_string(&ComparisonTable::average(&tables)).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn track(seed: u32, strategy: &str, pixel_sigma: f64, miss_rate: f64) -> Result<String, JsError> {
    track_json(seed as u64, strategy, pixel_sigma, miss_rate).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn probe(x: f64, y: f64, z: f64, du: f64, dv: f64) -> String {
    probe_json(x, y, z, du, dv)
}

#[wasm_bindgen]
pub fn compare(seed: u32, rallies: u32) -> Result<String, JsError> {
    compare_json(seed as u64, rallies as usize).map_err(|e| JsError::new(&e))
}
