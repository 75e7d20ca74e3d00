use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WorldPoint;

/// Per-frame validity marker. `Missing` frames carry no position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mask {
    Missing = 0,
    Detected = 1,
    Compensated = 2,
}

impl Mask {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Mask::Missing),
            1 => Some(Mask::Detected),
            2 => Some(Mask::Compensated),
            _ => None,
        }
    }

    pub fn has_point(self) -> bool {
        self != Mask::Missing
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFrame {
    pub frame_index: u64,
    pub timestamp_ns: i64,
    pub point: Option<WorldPoint>,
    pub mask: Mask,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("timestamp {current} at frame {frame} does not follow {previous}")]
    NonMonotoneTimestamp { frame: u64, previous: i64, current: i64 },
    #[error("frame {frame}: mask {mask:?} inconsistent with position presence")]
    MaskMismatch { frame: u64, mask: Mask },
    #[error("frame {frame}: non-finite position")]
    NonFinite { frame: u64 },
}

/// Timestamped 3D samples with one entry per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory3D {
    frames: Vec<TrajectoryFrame>,
}

impl Trajectory3D {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_frames(frames: Vec<TrajectoryFrame>) -> Result<Self, TrajectoryError> {
        let mut traj = Self::new();
        for f in frames {
            traj.push(f)?;
        }
        Ok(traj)
    }

    /// Fully observed trajectory with consecutive frame indices.
    pub fn from_points(samples: impl IntoIterator<Item = (i64, WorldPoint)>) -> Result<Self, TrajectoryError> {
        let mut traj = Self::new();
        for (i, (t, p)) in samples.into_iter().enumerate() {
            traj.push(TrajectoryFrame { frame_index: i as u64, timestamp_ns: t, point: Some(p), mask: Mask::Detected })?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, frame: TrajectoryFrame) -> Result<(), TrajectoryError> {
        if let Some(last) = self.frames.last() {
            if frame.timestamp_ns <= last.timestamp_ns {
                return Err(TrajectoryError::NonMonotoneTimestamp {
                    frame: frame.frame_index,
                    previous: last.timestamp_ns,
                    current: frame.timestamp_ns,
                });
            }
        }
        if frame.mask.has_point() != frame.point.is_some() {
            return Err(TrajectoryError::MaskMismatch { frame: frame.frame_index, mask: frame.mask });
        }
        if frame.point.is_some_and(|p| !p.is_finite()) {
            return Err(TrajectoryError::NonFinite { frame: frame.frame_index });
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn push_missing(&mut self, frame_index: u64, timestamp_ns: i64) -> Result<(), TrajectoryError> {
        self.push(TrajectoryFrame { frame_index, timestamp_ns, point: None, mask: Mask::Missing })
    }

    pub fn push_detected(&mut self, frame_index: u64, timestamp_ns: i64, p: WorldPoint) -> Result<(), TrajectoryError> {
        self.push(TrajectoryFrame { frame_index, timestamp_ns, point: Some(p), mask: Mask::Detected })
    }

    pub fn frames(&self) -> &[TrajectoryFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.frames.iter().map(|f| f.mask).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.frames.iter().map(|f| f.timestamp_ns).collect()
    }

    /// Frames carrying a position (mask ≥ 1), in order.
    pub fn valid_points(&self) -> impl Iterator<Item = (i64, WorldPoint)> + '_ {
        self.frames.iter().filter_map(|f| f.point.map(|p| (f.timestamp_ns, p)))
    }

    pub fn count(&self, mask: Mask) -> usize {
        self.frames.iter().filter(|f| f.mask == mask).count()
    }

    /// Applies `f` to every position, keeping masks and timestamps.
    pub fn map_points(&self, mut f: impl FnMut(WorldPoint) -> WorldPoint) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|fr| TrajectoryFrame { point: fr.point.map(&mut f), ..*fr })
                .collect(),
        }
    }
}

pub fn ns_to_seconds(ns: i64) -> f64 {
    ns as f64 * 1e-9
}
