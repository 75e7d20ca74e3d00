//! Per-camera detection streams, the region-of-interest crop model, and the
//! CSV formats for detections and trajectories.
//!
//! Detection file, one row per frame (misses are explicit rows):
//!
//! ```text
//! frame,timestamp_ns,camera,u,v,confidence,found
//! 0,0,L,640.5,511.25,0.93,1
//! 1,6250000,L,,,,0
//! ```
//!
//! Trajectory file, `mask` in {0,1,2}, optional trailing `provenance`:
//!
//! ```text
//! frame,timestamp_ns,x_m,y_m,z_m,mask
//! ```

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compensation::Provenance;
use crate::geometry::{CameraModel, PixelPoint, WorldPoint};
use crate::trajectory::{Mask, Trajectory3D, TrajectoryError, TrajectoryFrame};

pub const DETECTION_HEADER: [&str; 7] = ["frame", "timestamp_ns", "camera", "u", "v", "confidence", "found"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["frame", "timestamp_ns", "x_m", "y_m", "z_m", "mask"];

#[derive(Debug, Error)]
pub enum DetectionIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: timestamp {current} does not follow {previous}")]
    NonMonotoneTimestamp { line: u64, previous: i64, current: i64 },
    #[error("frame {frame_index} out of range (stream has {len} frames)")]
    FrameOutOfRange { frame_index: usize, len: usize },
    #[error("line {line}: invalid trajectory row: {source}")]
    Trajectory {
        line: u64,
        #[source]
        source: TrajectoryError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CameraId {
    Left,
    Right,
}

impl CameraId {
    pub fn code(self) -> &'static str {
        match self {
            CameraId::Left => "L",
            CameraId::Right => "R",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "L" => Some(CameraId::Left),
            "R" => Some(CameraId::Right),
            _ => None,
        }
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection2D {
    pub frame_index: u64,
    pub timestamp_ns: i64,
    pub point: PixelPoint,
    pub confidence: f64,
    pub found: bool,
}

impl Detection2D {
    pub fn found(frame_index: u64, timestamp_ns: i64, point: PixelPoint, confidence: f64) -> Self {
        Self { frame_index, timestamp_ns, point, confidence, found: true }
    }

    /// A miss row. Point and confidence are placeholders that consumers ignore.
    pub fn missed(frame_index: u64, timestamp_ns: i64) -> Self {
        Self { frame_index, timestamp_ns, point: PixelPoint::new(f64::NAN, f64::NAN), confidence: 0.0, found: false }
    }

    /// The pixel position, only when the detector reported one.
    pub fn pixel(&self) -> Option<PixelPoint> {
        self.found.then_some(self.point)
    }
}

/// Equality ignores point and confidence on miss rows.
fn same_detection(a: &Detection2D, b: &Detection2D) -> bool {
    a.frame_index == b.frame_index
        && a.timestamp_ns == b.timestamp_ns
        && a.found == b.found
        && (!a.found || (a.point == b.point && a.confidence == b.confidence))
}

#[derive(Debug, Clone)]
pub struct DetectionStream {
    pub camera: CameraId,
    detections: Vec<Detection2D>,
}

impl PartialEq for DetectionStream {
    fn eq(&self, other: &Self) -> bool {
        self.camera == other.camera
            && self.detections.len() == other.detections.len()
            && self.detections.iter().zip(&other.detections).all(|(a, b)| same_detection(a, b))
    }
}

impl DetectionStream {
    /// Validates contiguous frame indices from zero and strictly increasing timestamps.
    pub fn new(camera: CameraId, detections: Vec<Detection2D>) -> Result<Self, DetectionIoError> {
        for (i, d) in detections.iter().enumerate() {
            if d.frame_index != i as u64 {
                return Err(DetectionIoError::Schema(format!(
                    "frame indices must be contiguous from 0: row {i} has frame {}",
                    d.frame_index
                )));
            }
            if i > 0 && d.timestamp_ns <= detections[i - 1].timestamp_ns {
                return Err(DetectionIoError::NonMonotoneTimestamp {
                    line: i as u64 + 2,
                    previous: detections[i - 1].timestamp_ns,
                    current: d.timestamp_ns,
                });
            }
            if d.found && !(d.point.is_finite() && (0.0..=1.0).contains(&d.confidence)) {
                return Err(DetectionIoError::Parse {
                    line: i as u64 + 2,
                    message: "found detection needs finite pixel and confidence in [0,1]".into(),
                });
            }
        }
        Ok(Self { camera, detections })
    }

    pub fn detections(&self) -> &[Detection2D] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn get(&self, frame_index: usize) -> Option<&Detection2D> {
        self.detections.get(frame_index)
    }

    pub fn found_count(&self) -> usize {
        self.detections.iter().filter(|d| d.found).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DetectionIoError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DETECTION_HEADER)?;
        for d in &self.detections {
            let (u, v, c) = if d.found {
                (d.point.u.to_string(), d.point.v.to_string(), d.confidence.to_string())
            } else {
                (String::new(), String::new(), String::new())
            };
            w.write_record([
                d.frame_index.to_string(),
                d.timestamp_ns.to_string(),
                self.camera.code().to_string(),
                u,
                v,
                c,
                (d.found as u8).to_string(),
            ])?;
        }
        w.flush().map_err(|e| DetectionIoError::Io { path: PathBuf::from("<writer>"), source: e })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, DetectionIoError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DetectionIoError::Schema(format!("missing column '{name}'")))
        };
        let idx: Vec<usize> = DETECTION_HEADER.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
        let mut camera: Option<CameraId> = None;
        let mut detections = Vec::new();
        let mut prev_ts: Option<i64> = None;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| rec.get(idx[i]).unwrap_or("").trim();
            let perr = |message: String| DetectionIoError::Parse { line, message };

            let frame: u64 = field(0).parse().map_err(|_| perr(format!("bad frame '{}'", field(0))))?;
            let ts: i64 = field(1).parse().map_err(|_| perr(format!("bad timestamp_ns '{}'", field(1))))?;
            let cam = CameraId::from_code(field(2)).ok_or_else(|| perr(format!("bad camera '{}'", field(2))))?;
            match camera {
                None => camera = Some(cam),
                Some(c) if c != cam => return Err(perr(format!("camera {cam} in a stream for camera {c}"))),
                _ => {}
            }
            let found = match field(6) {
                "1" => true,
                "0" => false,
                other => return Err(perr(format!("bad found flag '{other}'"))),
            };
            if let Some(p) = prev_ts {
                if ts <= p {
                    return Err(DetectionIoError::NonMonotoneTimestamp { line, previous: p, current: ts });
                }
            }
            prev_ts = Some(ts);
            if frame != detections.len() as u64 {
                return Err(perr(format!("expected frame {}, found {frame}", detections.len())));
            }
            let det = if found {
                let num = |i: usize, name: &str| -> Result<f64, DetectionIoError> {
                    let s = field(i);
                    if s.is_empty() {
                        return Err(perr(format!("found=1 but {name} is empty")));
                    }
                    s.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| perr(format!("bad {name} '{s}'")))
                };
                let u = num(3, "u")?;
                let v = num(4, "v")?;
                let c = num(5, "confidence")?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(perr(format!("confidence {c} outside [0,1]")));
                }
                Detection2D::found(frame, ts, PixelPoint::new(u, v), c)
            } else {
                Detection2D::missed(frame, ts)
            };
            detections.push(det);
        }
        let camera = camera.ok_or_else(|| DetectionIoError::Schema("detection file has no rows".into()))?;
        Self::new(camera, detections)
    }
}

pub fn read_detections(path: &Path) -> Result<DetectionStream, DetectionIoError> {
    let f = File::open(path).map_err(|e| DetectionIoError::Io { path: path.to_path_buf(), source: e })?;
    DetectionStream::read_csv(f)
}

pub fn write_detections(stream: &DetectionStream, path: &Path) -> Result<(), DetectionIoError> {
    let f = File::create(path).map_err(|e| DetectionIoError::Io { path: path.to_path_buf(), source: e })?;
    stream.write_csv(std::io::BufWriter::new(f))
}

/// Rectangular crop handed to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoI {
    pub center: PixelPoint,
    pub width: f64,
    pub height: f64,
}

impl RoI {
    pub fn new(center: PixelPoint, width: f64, height: f64) -> Self {
        Self { center, width, height }
    }

    pub fn full_frame(cam: &CameraModel) -> Self {
        let (w, h) = (cam.width() as f64, cam.height() as f64);
        Self::new(PixelPoint::new(w / 2.0, h / 2.0), w, h)
    }

    /// Shrinks the crop to the image and slides it so it lies fully inside.
    pub fn clamped(self, image_width: u32, image_height: u32) -> Self {
        let (iw, ih) = (image_width as f64, image_height as f64);
        let w = self.width.min(iw);
        let h = self.height.min(ih);
        let cu = if self.center.u.is_finite() { self.center.u.clamp(w / 2.0, iw - w / 2.0) } else { iw / 2.0 };
        let cv = if self.center.v.is_finite() { self.center.v.clamp(h / 2.0, ih - h / 2.0) } else { ih / 2.0 };
        Self::new(PixelPoint::new(cu, cv), w, h)
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: &PixelPoint) -> bool {
        (p.u - self.center.u).abs() <= self.width / 2.0 && (p.v - self.center.v).abs() <= self.height / 2.0
    }
}

/// Looks up a frame as seen through a crop: detections outside the ROI are
/// reported as misses.
pub fn detect(stream: &DetectionStream, frame_index: usize, roi: &RoI) -> Result<Detection2D, DetectionIoError> {
    let d = stream
        .get(frame_index)
        .ok_or(DetectionIoError::FrameOutOfRange { frame_index, len: stream.len() })?;
    if d.found && roi.contains(&d.point) {
        Ok(*d)
    } else {
        Ok(Detection2D::missed(d.frame_index, d.timestamp_ns))
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory3D,
    provenance: Option<&[Provenance]>,
    out: W,
) -> Result<(), DetectionIoError> {
    if let Some(p) = provenance {
        if p.len() != traj.len() {
            return Err(DetectionIoError::Schema(format!(
                "provenance has {} entries for {} frames",
                p.len(),
                traj.len()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    if provenance.is_some() {
        header.push("provenance");
    }
    w.write_record(&header)?;
    for (i, f) in traj.frames().iter().enumerate() {
        let mut row = vec![
            f.frame_index.to_string(),
            f.timestamp_ns.to_string(),
            fmt_opt(f.point.map(|p| p.x)),
            fmt_opt(f.point.map(|p| p.y)),
            fmt_opt(f.point.map(|p| p.z)),
            f.mask.as_u8().to_string(),
        ];
        if let Some(p) = provenance {
            row.push(p[i].as_str().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DetectionIoError::Io { path: PathBuf::from("<writer>"), source: e })?;
    Ok(())
}

pub fn trajectory_to_csv_string(traj: &Trajectory3D, provenance: Option<&[Provenance]>) -> String {
    let mut buf = Vec::new();
    write_trajectory_csv(traj, provenance, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<(Trajectory3D, Option<Vec<Provenance>>), DetectionIoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let idx: Vec<usize> = TRAJECTORY_HEADER
        .iter()
        .map(|n| col(n).ok_or_else(|| DetectionIoError::Schema(format!("missing column '{n}'"))))
        .collect::<Result<_, _>>()?;
    let prov_idx = col("provenance");
    let mut traj = Trajectory3D::new();
    let mut prov = prov_idx.map(|_| Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let perr = |message: String| DetectionIoError::Parse { line, message };
        let frame: u64 = field(idx[0]).parse().map_err(|_| perr(format!("bad frame '{}'", field(idx[0]))))?;
        let ts: i64 = field(idx[1]).parse().map_err(|_| perr(format!("bad timestamp_ns '{}'", field(idx[1]))))?;
        let mask = field(idx[5])
            .parse::<u8>()
            .ok()
            .and_then(Mask::from_u8)
            .ok_or_else(|| perr(format!("bad mask '{}'", field(idx[5]))))?;
        let point = if mask.has_point() {
            let mut c = [0.0; 3];
            for (k, name) in ["x_m", "y_m", "z_m"].iter().enumerate() {
                let s = field(idx[2 + k]);
                if s.is_empty() {
                    return Err(perr(format!("mask={} but {name} is empty", mask.as_u8())));
                }
                c[k] = s.parse().map_err(|_| perr(format!("bad {name} '{s}'")))?;
            }
            Some(WorldPoint::new(c[0], c[1], c[2]))
        } else {
            None
        };
        if let Some(last) = traj.frames().last() {
            if ts <= last.timestamp_ns {
                return Err(DetectionIoError::NonMonotoneTimestamp { line, previous: last.timestamp_ns, current: ts });
            }
        }
        traj.push(TrajectoryFrame { frame_index: frame, timestamp_ns: ts, point, mask })
            .map_err(|source| DetectionIoError::Trajectory { line, source })?;
        if let (Some(pi), Some(list)) = (prov_idx, prov.as_mut()) {
            let s = field(pi);
            list.push(Provenance::parse(s).ok_or_else(|| perr(format!("bad provenance '{s}'")))?);
        }
    }
    Ok((traj, prov))
}

pub fn read_trajectory(path: &Path) -> Result<(Trajectory3D, Option<Vec<Provenance>>), DetectionIoError> {
    let f = File::open(path).map_err(|e| DetectionIoError::Io { path: path.to_path_buf(), source: e })?;
    read_trajectory_csv(f)
}

pub fn write_trajectory(
    traj: &Trajectory3D,
    provenance: Option<&[Provenance]>,
    path: &Path,
) -> Result<(), DetectionIoError> {
    let f = File::create(path).map_err(|e| DetectionIoError::Io { path: path.to_path_buf(), source: e })?;
    write_trajectory_csv(traj, provenance, std::io::BufWriter::new(f))
}
