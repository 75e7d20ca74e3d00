//! Real-time stereo trajectory tracking for badminton shuttlecocks.
//!
//! The pipeline takes per-camera 2D detections (from a detector or from the
//! built-in flight simulator), triangulates consistent pairs, steers the
//! detector's crops with a short-horizon polynomial prediction, fills missed
//! frames after the fact, and scores the result with smoothness metrics.

pub mod bench;
pub mod comparison;
pub mod compensation;
pub mod config;
pub mod detection_io;
pub mod flight_sim;
pub mod geometry;
pub mod metrics;
pub mod polyfit;
pub mod spline;
mod timing;
pub mod tracker;
pub mod trajectory;

pub use compensation::{compensate, CompensatedTrajectory, CompensationConfig, Provenance};
pub use detection_io::{detect, CameraId, Detection2D, DetectionStream, RoI};
pub use flight_sim::{render_detections, simulate_flight, FlightParams, NoiseModel, RallyScript};
pub use geometry::{project, reprojection_error, triangulate, CameraModel, PixelPoint, StereoRig, WorldPoint};
pub use metrics::MetricsReport;
pub use tracker::{run_strategy, Strategy, StrategyRun, TrackerConfig};
pub use trajectory::{Mask, Trajectory3D};
