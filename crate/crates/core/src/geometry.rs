//! Rigid transforms and the pinhole camera model.
//!
//! Everything downstream agrees on one convention: the camera frame is
//! right-handed with +Z along the optical axis toward the scene, +X right and
//! +Y down in the image. Depth values are distances along the optical axis
//! (camera-frame Z), not Euclidean ray lengths.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for rotation orthonormality and round-trip identities.
pub const POSE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("horizontal fov must lie strictly inside (0, pi), got {0} rad")]
    InvalidFov(f64),
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    InvalidImageSize(u32, u32),
    #[error("intrinsics invalid: {0}")]
    InvalidIntrinsics(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("rotation is not orthonormal with determinant +1 (max residual {0:.3e})")]
    InvalidRotation(f64),
}

/// Rigid transform: `x_to = rotation * x_from + translation`.
///
/// Serialized as a row-major 3x3 rotation plus a translation in meters;
/// deserialization re-checks orthonormality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let r = p.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(repr: PoseRepr) -> Result<Self, Self::Error> {
        let r = Matrix3::from_fn(|i, j| repr.rotation[i][j]);
        Pose::new(r, Vector3::from_column_slice(&repr.translation))
    }
}

impl Pose {
    /// Builds a pose, rejecting rotations that are not orthonormal with
    /// determinant +1 within [`POSE_TOL`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let residual_orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let residual_det = (rotation.determinant() - 1.0).abs();
        let residual = residual_orth.max(residual_det);
        if !residual.is_finite() || residual > POSE_TOL {
            return Err(GeometryError::InvalidRotation(residual));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose { rotation: Matrix3::identity(), translation }
    }

    /// Rotation about +Z by `angle` radians, no translation.
    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Pose { rotation, translation: Vector3::zeros() }
    }

    /// Camera at `position` with the optical axis pointing straight down
    /// (-Z of the parent frame), image +X aligned with parent +X.
    pub fn looking_down(position: Vector3<f64>) -> Self {
        // 180 degree rotation about X: cam +Z -> world -Z, cam +Y -> world -Y.
        let rotation = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        Pose { rotation, translation: position }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn transform_direction(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * dir
    }
}

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if width < 1 || height < 1 {
            return Err(GeometryError::InvalidImageSize(width, height));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!("focal lengths must be positive, got fx={fx}, fy={fy}")));
        }
        if !(0.0..(width as f64)).contains(&cx) || !(0.0..(height as f64)).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!("principal point ({cx}, {cy}) outside {width}x{height} image")));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy, width, height })
    }
}

/// A sub-pixel image coordinate paired with depth along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl PixelDepth {
    pub fn new(u: f64, v: f64, d: f64) -> Result<Self, GeometryError> {
        if !(d > 0.0) {
            return Err(GeometryError::NonPositiveDepth(d));
        }
        Ok(PixelDepth { u, v, d })
    }
}

/// Intrinsics from a horizontal field of view, square pixels, principal point
/// at the image center.
pub fn intrinsics_from_fov(hfov: f64, width: u32, height: u32) -> Result<CameraIntrinsics, GeometryError> {
    if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
        return Err(GeometryError::InvalidFov(hfov));
    }
    if width < 1 || height < 1 {
        return Err(GeometryError::InvalidImageSize(width, height));
    }
    let fx = (width as f64 / 2.0) / (hfov / 2.0).tan();
    CameraIntrinsics::new(fx, fx, width as f64 / 2.0, height as f64 / 2.0, width, height)
}

/// Pixel + depth to a camera-frame point.
pub fn back_project(k: &CameraIntrinsics, p: &PixelDepth) -> Result<Vector3<f64>, GeometryError> {
    if !(p.d > 0.0) {
        return Err(GeometryError::NonPositiveDepth(p.d));
    }
    Ok(Vector3::new((p.u - k.cx) * p.d / k.fx, (p.v - k.cy) * p.d / k.fy, p.d))
}

/// Camera-frame point to pixel + depth. Rejects points at or behind the
/// camera plane.
pub fn project(k: &CameraIntrinsics, point: &Vector3<f64>) -> Result<PixelDepth, GeometryError> {
    if !(point.z > 0.0) {
        return Err(GeometryError::BehindCamera(point.z));
    }
    Ok(PixelDepth {
        u: k.fx * point.x / point.z + k.cx,
        v: k.fy * point.y / point.z + k.cy,
        d: point.z,
    })
}

/// Unit ray through pixel (u, v), in the camera frame.
pub fn pixel_ray(k: &CameraIntrinsics, u: f64, v: f64) -> Vector3<f64> {
    Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k512() -> CameraIntrinsics {
        intrinsics_from_fov(std::f64::consts::FRAC_PI_2, 512, 512).unwrap()
    }

    #[test]
    fn fov_90_deg_gives_fx_256() {
        let k = k512();
        assert_abs_diff_eq!(k.fx, 256.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.fy, 256.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.cx, 256.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.cy, 256.0, epsilon = 1e-12);
    }

    #[test]
    fn fov_60_deg_closed_form() {
        let k = intrinsics_from_fov(std::f64::consts::FRAC_PI_3, 512, 512).unwrap();
        assert_abs_diff_eq!(k.fx, 443.4050067376326, epsilon = 1e-9);
    }

    #[test]
    fn fov_boundaries_rejected() {
        assert!(matches!(intrinsics_from_fov(0.0, 512, 512), Err(GeometryError::InvalidFov(_))));
        assert!(matches!(intrinsics_from_fov(std::f64::consts::PI, 512, 512), Err(GeometryError::InvalidFov(_))));
        assert!(matches!(intrinsics_from_fov(-0.5, 512, 512), Err(GeometryError::InvalidFov(_))));
        assert!(matches!(intrinsics_from_fov(1.0, 0, 512), Err(GeometryError::InvalidImageSize(..))));
    }

    #[test]
    fn back_project_principal_ray() {
        let k = k512();
        let p = back_project(&k, &PixelDepth { u: k.cx, v: k.cy, d: 1.5 }).unwrap();
        assert_abs_diff_eq!(p, Vector3::new(0.0, 0.0, 1.5), epsilon = 1e-12);
    }

    #[test]
    fn back_project_one_focal_length_off_axis() {
        let k = k512();
        let p = back_project(&k, &PixelDepth { u: k.cx + k.fx, v: k.cy, d: 2.0 }).unwrap();
        assert_abs_diff_eq!(p, Vector3::new(2.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn back_project_rejects_nonpositive_depth() {
        let k = k512();
        assert!(back_project(&k, &PixelDepth { u: 0.0, v: 0.0, d: 0.0 }).is_err());
        assert!(back_project(&k, &PixelDepth { u: 0.0, v: 0.0, d: -1.0 }).is_err());
    }

    #[test]
    fn project_closed_forms() {
        let k = k512();
        let p = project(&k, &Vector3::new(0.0, 0.0, 3.0)).unwrap();
        assert_abs_diff_eq!(p.u, k.cx, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, k.cy, epsilon = 1e-12);
        assert_abs_diff_eq!(p.d, 3.0, epsilon = 1e-12);

        let p = project(&k, &Vector3::new(1.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.u, 512.0, epsilon = 1e-12);

        assert!(matches!(project(&k, &Vector3::new(0.0, 0.0, -1.0)), Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn compose_with_identity_and_translation() {
        let p = Pose::rot_z(0.7).compose(&Pose::from_translation(Vector3::new(0.1, -0.2, 0.3)));
        let q = Pose::identity().compose(&p);
        assert_abs_diff_eq!(q.rotation(), p.rotation(), epsilon = 1e-15);
        assert_abs_diff_eq!(q.translation(), p.translation(), epsilon = 1e-15);

        let t = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_abs_diff_eq!(t.transform_point(&Vector3::zeros()), Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-15);
    }

    #[test]
    fn two_quarter_turns_flip_x() {
        let quarter = Pose::rot_z(std::f64::consts::FRAC_PI_2);
        let half = quarter.compose(&quarter);
        let p = half.transform_point(&Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p, Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn pose_rejects_sheared_rotation() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(Pose::new(bad, Vector3::zeros()), Err(GeometryError::InvalidRotation(_))));
    }

    #[test]
    fn pose_serde_round_trip() {
        let p = Pose::rot_z(1.1).compose(&Pose::from_translation(Vector3::new(0.4, 0.0, -0.2)));
        let json = serde_json::to_string(&p).unwrap();
        let q: Pose = serde_json::from_str(&json).unwrap();
        assert_abs_diff_eq!(q.rotation(), p.rotation(), epsilon = 1e-12);
        assert_abs_diff_eq!(q.translation(), p.translation(), epsilon = 1e-12);
    }

    prop_compose! {
        fn arb_pose()(yaw in -3.1f64..3.1, pitch in -1.5f64..1.5, roll in -3.1f64..3.1,
                      tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0) -> Pose {
            let rz = Pose::rot_z(yaw);
            let ry = {
                let (s, c) = pitch.sin_cos();
                Pose::new(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c), Vector3::zeros()).unwrap()
            };
            let rx = {
                let (s, c) = roll.sin_cos();
                Pose::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c), Vector3::zeros()).unwrap()
            };
            let mut p = rz.compose(&ry).compose(&rx);
            p = Pose::new(*p.rotation(), Vector3::new(tx, ty, tz)).unwrap();
            p
        }
    }

    proptest! {
        #[test]
        fn project_back_project_round_trip(u in 0.0f64..512.0, v in 0.0f64..512.0, d in 0.01f64..10.0) {
            let k = k512();
            let pd = PixelDepth { u, v, d };
            let rt = project(&k, &back_project(&k, &pd).unwrap()).unwrap();
            prop_assert!((rt.u - u).abs() < 1e-9);
            prop_assert!((rt.v - v).abs() < 1e-9);
            prop_assert!((rt.d - d).abs() < 1e-9);
        }

        #[test]
        fn pose_invert_cancels(p in arb_pose()) {
            let id = p.compose(&p.invert());
            prop_assert!((id.rotation() - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!(id.translation().norm() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!((lhs.rotation() - rhs.rotation()).abs().max() < 1e-9);
            prop_assert!((lhs.translation() - rhs.translation()).norm() < 1e-9);
        }

        #[test]
        fn rigid_transforms_preserve_distances(p in arb_pose(),
                                               x in prop::array::uniform3(-3.0f64..3.0),
                                               y in prop::array::uniform3(-3.0f64..3.0)) {
            let xv = Vector3::from_column_slice(&x);
            let yv = Vector3::from_column_slice(&y);
            let before = (xv - yv).norm();
            let after = (p.transform_point(&xv) - p.transform_point(&yv)).norm();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
