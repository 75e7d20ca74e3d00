//! Pinhole cameras, the stereo rig and two-view triangulation.
//!
//! World frame: origin on the floor below the left camera, `z` up, `y`
//! pointing down-court toward the opponent. Camera frame: `x` right, `y`
//! down, `z` along the optical axis.

use nalgebra::{Matrix3, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depths at or below this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;
/// Smallest acceptable ratio of singular values in the triangulation system.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },
    #[error("stereo rays are degenerate (singular value ratio {ratio:.3e})")]
    DegenerateRays { ratio: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid rig: {0}")]
    InvalidRig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Intrinsics plus world-to-camera pose of a distortion-free pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    width: u32,
    height: u32,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        if off > ORTHONORMAL_TOL || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidCamera(
                "rotation is not a proper orthonormal matrix".into(),
            ));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::InvalidCamera("non-finite translation".into()));
        }
        Ok(Self { fx, fy, cx, cy, rotation, translation, width, height })
    }

    /// Camera placed at `center` (world) with the given world-to-camera rotation.
    pub fn from_center(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let translation = -(rotation * center);
        Self::new(fx, fy, cx, cy, rotation, translation, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera_frame(&self, p: &WorldPoint) -> Vector3<f64> {
        self.rotation * p.to_vector() + self.translation
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u >= 0.0 && p.u < self.width as f64 && p.v >= 0.0 && p.v < self.height as f64
    }
}

/// Pinhole projection of a world point.
pub fn project(p: &WorldPoint, cam: &CameraModel) -> Result<PixelPoint, GeometryError> {
    let pc = cam.to_camera_frame(p);
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    Ok(PixelPoint::new(
        cam.fx * pc.x / pc.z + cam.cx,
        cam.fy * pc.y / pc.z + cam.cy,
    ))
}

/// Rotation taking world axes (z up, y forward) to camera axes for a camera
/// looking horizontally down-court.
pub fn court_facing_rotation() -> Matrix3<f64> {
    Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0, //
        0.0, 1.0, 0.0,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub left: CameraModel,
    pub right: CameraModel,
    baseline: f64,
}

impl StereoRig {
    pub fn new(left: CameraModel, right: CameraModel, baseline: f64) -> Result<Self, GeometryError> {
        if !(baseline > 0.0) {
            return Err(GeometryError::InvalidRig(format!("baseline must be positive, got {baseline}")));
        }
        let measured = (left.center() - right.center()).norm();
        if (measured - baseline).abs() > 1e-9 {
            return Err(GeometryError::InvalidRig(format!(
                "camera centers are {measured} m apart but baseline is {baseline} m"
            )));
        }
        Ok(Self { left, right, baseline })
    }

    /// Fronto-parallel pair: identical intrinsics and orientation, the right
    /// camera shifted by `baseline` along world `x`, both at `height` metres.
    pub fn rectified(
        baseline: f64,
        height: f64,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let r = court_facing_rotation();
        let left = CameraModel::from_center(fx, fy, cx, cy, r, Vector3::new(0.0, 0.0, height), width, image_height)?;
        let right =
            CameraModel::from_center(fx, fy, cx, cy, r, Vector3::new(baseline, 0.0, height), width, image_height)?;
        Self::new(left, right, baseline)
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }
}

impl Default for StereoRig {
    fn default() -> Self {
        RigConfig::default().build().expect("default rig is valid")
    }
}

/// Linear (DLT) triangulation of one correspondence.
///
/// Each view contributes two rows in normalized image coordinates, which keeps
/// the 4x3 system well conditioned; the inhomogeneous least-squares solution is
/// taken by QR, with the SVD used to reject near-degenerate ray pairs.
pub fn triangulate(pl: &PixelPoint, pr: &PixelPoint, rig: &StereoRig) -> Result<WorldPoint, GeometryError> {
    let mut a = Matrix4x3::<f64>::zeros();
    let mut b = Vector4::<f64>::zeros();
    for (k, (p, cam)) in [(pl, &rig.left), (pr, &rig.right)].into_iter().enumerate() {
        let xn = (p.u - cam.cx) / cam.fx;
        let yn = (p.v - cam.cy) / cam.fy;
        let r = &cam.rotation;
        let t = &cam.translation;
        for (row, (coord, axis)) in [(xn, 0usize), (yn, 1usize)].into_iter().enumerate() {
            let i = 2 * k + row;
            for j in 0..3 {
                a[(i, j)] = coord * r[(2, j)] - r[(axis, j)];
            }
            b[i] = t[axis] - coord * t[2];
        }
    }
    let svd = a.svd(false, false);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > DEGENERACY_THRESHOLD) {
        return Err(GeometryError::DegenerateRays { ratio });
    }
    // Householder QR for the solve itself: nalgebra's SVD solve loses up to
    // ~1e-5 relative accuracy when two rows nearly coincide, as they do for
    // distant points on a rectified rig.
    let qr = a.qr();
    let x = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * b))
        .ok_or(GeometryError::DegenerateRays { ratio })?;
    Ok(WorldPoint::from_vector(&x))
}

/// Mean pixel distance between the projections of `p` and the observed pair.
pub fn reprojection_error(
    p: &WorldPoint,
    pl: &PixelPoint,
    pr: &PixelPoint,
    rig: &StereoRig,
) -> Result<f64, GeometryError> {
    let el = project(p, &rig.left)?.distance(pl);
    let er = project(p, &rig.right)?.distance(pr);
    Ok(0.5 * (el + er))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    /// World-to-camera rotation, row major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-camera translation in metres.
    pub translation: [f64; 3],
}

impl PoseConfig {
    fn matrices(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let r = &self.rotation;
        (
            Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]),
            Vector3::new(self.translation[0], self.translation[1], self.translation[2]),
        )
    }
}

/// JSON description of the rig. Missing intrinsics default to a 1280x1024
/// sensor with 1200 px focal length; missing poses give the rectified layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    #[serde(default = "default_baseline")]
    pub baseline_m: f64,
    #[serde(default = "default_height")]
    pub height_m: f64,
    #[serde(default = "default_focal")]
    pub fx: f64,
    #[serde(default = "default_focal")]
    pub fy: f64,
    #[serde(default)]
    pub cx: Option<f64>,
    #[serde(default)]
    pub cy: Option<f64>,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_image_height")]
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_pose: Option<PoseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_pose: Option<PoseConfig>,
}

fn default_baseline() -> f64 {
    0.8
}
fn default_height() -> f64 {
    1.8
}
fn default_focal() -> f64 {
    1200.0
}
fn default_width() -> u32 {
    1280
}
fn default_image_height() -> u32 {
    1024
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            baseline_m: default_baseline(),
            height_m: default_height(),
            fx: default_focal(),
            fy: default_focal(),
            cx: None,
            cy: None,
            width: default_width(),
            height: default_image_height(),
            left_pose: None,
            right_pose: None,
        }
    }
}

impl RigConfig {
    pub fn build(&self) -> Result<StereoRig, GeometryError> {
        let cx = self.cx.unwrap_or(self.width as f64 / 2.0);
        let cy = self.cy.unwrap_or(self.height as f64 / 2.0);
        let rect_rot = court_facing_rotation();
        let make = |pose: &Option<PoseConfig>, center_x: f64| match pose {
            Some(p) => {
                let (r, t) = p.matrices();
                CameraModel::new(self.fx, self.fy, cx, cy, r, t, self.width, self.height)
            }
            None => CameraModel::from_center(
                self.fx,
                self.fy,
                cx,
                cy,
                rect_rot,
                Vector3::new(center_x, 0.0, self.height_m),
                self.width,
                self.height,
            ),
        };
        let left = make(&self.left_pose, 0.0)?;
        let right = make(&self.right_pose, self.baseline_m)?;
        StereoRig::new(left, right, self.baseline_m)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_camera() -> CameraModel {
        CameraModel::new(1000.0, 1000.0, 640.0, 512.0, Matrix3::identity(), Vector3::zeros(), 1280, 1024).unwrap()
    }

    /// Rectified rig in camera axes: left at the origin, right shifted +0.8 in x.
    fn camera_axis_rig() -> StereoRig {
        let left = identity_camera();
        let right = CameraModel::from_center(
            1000.0,
            1000.0,
            640.0,
            512.0,
            Matrix3::identity(),
            Vector3::new(0.8, 0.0, 0.0),
            1280,
            1024,
        )
        .unwrap();
        StereoRig::new(left, right, 0.8).unwrap()
    }

    #[test]
    fn project_on_axis_hits_principal_point() {
        let px = project(&WorldPoint::new(0.0, 0.0, 5.0), &identity_camera()).unwrap();
        assert_eq!(px, PixelPoint::new(640.0, 512.0));
    }

    #[test]
    fn project_lateral_offset() {
        let px = project(&WorldPoint::new(0.5, 0.0, 5.0), &identity_camera()).unwrap();
        assert!((px.u - 740.0).abs() < 1e-12);
        assert!((px.v - 512.0).abs() < 1e-12);
    }

    #[test]
    fn project_behind_camera() {
        let err = project(&WorldPoint::new(0.0, 0.0, -1.0), &identity_camera()).unwrap_err();
        assert!(matches!(err, GeometryError::BehindCamera { .. }));
        assert!(project(&WorldPoint::new(0.0, 0.0, 0.0), &identity_camera()).is_err());
    }

    #[test]
    fn triangulate_matches_rectified_closed_form() {
        let rig = camera_axis_rig();
        let p = triangulate(&PixelPoint::new(740.0, 512.0), &PixelPoint::new(640.0, 512.0), &rig).unwrap();
        // Z = f b / d = 1000 * 0.8 / 100, X = (u - cx) Z / f
        assert!((p.z - 8.0).abs() < 1e-9 * 8.0);
        assert!((p.x - 0.8).abs() < 1e-9);
        assert!(p.y.abs() < 1e-9);
    }

    #[test]
    fn triangulate_coincident_rays_is_degenerate() {
        let cam = identity_camera();
        // Two cameras at the same place: only possible with a zero baseline,
        // so build the rig field-wise.
        let rig = StereoRig { left: cam.clone(), right: cam, baseline: 0.0 };
        let p = PixelPoint::new(700.0, 500.0);
        assert!(matches!(triangulate(&p, &p, &rig), Err(GeometryError::DegenerateRays { .. })));
    }

    #[test]
    fn reprojection_error_cases() {
        let rig = StereoRig::default();
        let p = WorldPoint::new(0.3, 6.0, 2.2);
        let pl = project(&p, &rig.left).unwrap();
        let pr = project(&p, &rig.right).unwrap();
        assert!(reprojection_error(&p, &pl, &pr, &rig).unwrap() < 1e-9);

        let shifted = PixelPoint::new(pl.u + 2.0, pl.v);
        assert!((reprojection_error(&p, &shifted, &pr, &rig).unwrap() - 1.0).abs() < 1e-9);

        let noisy = PixelPoint::new(pl.u + 3.0, pl.v + 4.0);
        let q = triangulate(&noisy, &pr, &rig).unwrap();
        assert!(reprojection_error(&q, &noisy, &pr, &rig).unwrap() > 0.0);
    }

    #[test]
    fn default_rig_geometry() {
        let rig = StereoRig::default();
        assert_eq!(rig.baseline(), 0.8);
        let cl = rig.left.center();
        let cr = rig.right.center();
        assert!((cl.z - 1.8).abs() < 1e-12 && (cr.z - 1.8).abs() < 1e-12);
        assert!(((cl - cr).norm() - 0.8).abs() < 1e-12);
        assert_eq!(rig.left.cx(), 640.0);
        assert_eq!(rig.left.cy(), 512.0);
        // point straight ahead of the left camera at its height lands on the principal point
        let px = project(&WorldPoint::new(0.0, 7.0, 1.8), &rig.left).unwrap();
        assert!((px.u - 640.0).abs() < 1e-12 && (px.v - 512.0).abs() < 1e-12);
        // higher points appear higher in the image (smaller v)
        let up = project(&WorldPoint::new(0.0, 7.0, 3.0), &rig.left).unwrap();
        assert!(up.v < 512.0);
    }

    #[test]
    fn camera_rejects_bad_parameters() {
        let r = Matrix3::identity();
        let t = Vector3::zeros();
        assert!(CameraModel::new(0.0, 1.0, 10.0, 10.0, r, t, 20, 20).is_err());
        assert!(CameraModel::new(1.0, 1.0, 30.0, 10.0, r, t, 20, 20).is_err());
        assert!(CameraModel::new(1.0, 1.0, 10.0, 10.0, r * 2.0, t, 20, 20).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraModel::new(1.0, 1.0, 10.0, 10.0, reflect, t, 20, 20).is_err());
    }

    #[test]
    fn rig_config_json() {
        let cfg = RigConfig::from_json(r#"{"baseline_m":0.8,"height_m":1.8}"#).unwrap();
        assert_eq!(cfg.build().unwrap(), StereoRig::default());
        assert!(RigConfig::from_json(r#"{"baseline":0.8}"#).is_err());

        let posed = r#"{"baseline_m":0.8,"left_pose":{"rotation":[[1,0,0],[0,0,-1],[0,1,0]],"translation":[0,1.8,0]},
            "right_pose":{"rotation":[[1,0,0],[0,0,-1],[0,1,0]],"translation":[-0.8,1.8,0]}}"#;
        let rig = RigConfig::from_json(posed).unwrap().build().unwrap();
        assert_eq!(rig, StereoRig::default());

        let wrong = r#"{"baseline_m":1.0,"left_pose":{"rotation":[[1,0,0],[0,0,-1],[0,1,0]],"translation":[0,1.8,0]},
            "right_pose":{"rotation":[[1,0,0],[0,0,-1],[0,1,0]],"translation":[-0.8,1.8,0]}}"#;
        assert!(RigConfig::from_json(wrong).unwrap().build().is_err());
    }
}
