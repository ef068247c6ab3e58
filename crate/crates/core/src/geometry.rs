//! Pinhole stereo rig, scene planes, rigid motions and the homographies they
//! induce between the images of a window.
//!
//! Conventions:
//! - pixels are homogeneous `(x, y, 1)`; `K` maps camera rays to pixels;
//! - a plane `n` is the set `{X : n·X = 1}` in the reference camera frame, so
//!   `n·K⁻¹x̃` is the inverse depth seen through pixel `x`;
//! - a rigid motion `(R, t)` maps a point `X` of frame `m` to `R X - t` in
//!   frame `m+1`, which makes the plane-induced homography exactly
//!   `K (R - t nᵀ) K⁻¹`;
//! - the right camera sits at `+baseline` along X, so a point `X` in the left
//!   camera is `X - (b, 0, 0)` in the right one.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Frame, ImageId, View};

const SINGULAR_DET: f64 = 1e-12;
const INFINITY_W: f64 = 1e-9;

/// Rectified stereo pair intrinsics shared by both cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Stereo baseline in meters, left to right along +X.
    pub baseline: f64,
}

impl CameraRig {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64) -> Result<Self> {
        let rig = Self { fx, fy, cx, cy, baseline };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.baseline].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.baseline <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "need finite parameters with fx, fy, baseline > 0 (got fx={}, fy={}, b={})",
                self.fx, self.fy, self.baseline
            )));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn intrinsics_inv(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// `K⁻¹ (x, y, 1)`, the ray through a pixel at unit depth.
    #[inline]
    pub fn ray(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub fn project(&self, p: &Vector3<f64>) -> Option<[f64; 2]> {
        (p.z > 1e-12).then(|| [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }

    /// Back-projects a pixel with known disparity to a 3D point in the left camera.
    pub fn backproject(&self, x: f64, y: f64, disparity: f64) -> Option<Vector3<f64>> {
        (disparity > 0.0).then(|| self.ray(x, y) * (self.fx * self.baseline / disparity))
    }

    pub fn baseline_vector(&self) -> Vector3<f64> {
        Vector3::new(self.baseline, 0.0, 0.0)
    }
}

/// Scene plane `{X : n·X = 1}` (units of `n`: 1/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub n: Vector3<f64>,
}

impl Plane {
    pub fn new(n: Vector3<f64>) -> Self {
        Self { n }
    }

    /// Plane parallel to the image at depth `z`.
    pub fn fronto_parallel(depth: f64) -> Self {
        Self { n: Vector3::new(0.0, 0.0, 1.0 / depth) }
    }

    /// Fronto-parallel plane producing disparity `d` on `rig`.
    pub fn from_disparity(rig: &CameraRig, d: f64) -> Self {
        Self { n: Vector3::new(0.0, 0.0, d / (rig.fx * rig.baseline)) }
    }

    pub fn is_finite(&self) -> bool {
        self.n.iter().all(|v| v.is_finite())
    }

    /// Inverse depth `n·K⁻¹x̃` of the plane seen through pixel `(x, y)`.
    #[inline]
    pub fn inverse_depth(&self, rig: &CameraRig, x: f64, y: f64) -> f64 {
        self.n.dot(&rig.ray(x, y))
    }

    /// The same plane expressed in the frame reached through `motion`.
    pub fn transformed(&self, motion: &RigidMotion) -> Result<Plane> {
        let rn = motion.rotation * self.n;
        let denom = 1.0 - rn.dot(&motion.translation);
        if denom.abs() < 1e-12 {
            return Err(Error::InvalidPlane("plane passes through the moved camera center".into()));
        }
        Ok(Plane { n: rn / denom })
    }

    pub fn scaled(&self, s: f64) -> Plane {
        Plane { n: self.n * s }
    }
}

/// Rigid motion `X ↦ R X - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let m = Self { rotation, translation };
        m.validate()?;
        Ok(m)
    }

    pub fn translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Rotation by the axis-angle vector `w` (radians) followed by `-t`.
    pub fn from_axis_angle(w: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self { rotation: Rotation3::new(w).into_inner(), translation: t }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !(orth <= 1e-9) || !((det - 1.0).abs() <= 1e-9) || !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidMotion(format!("RᵀR - I max {orth:e}, det(R) = {det}")));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p - self.translation
    }

    /// Inverse motion `(Rᵀ, -Rᵀ t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &RigidMotion) -> Self {
        Self {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Axis-angle vector of the rotation.
    pub fn rotation_vector(&self) -> Vector3<f64> {
        Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    /// The same physical motion seen from the right camera: `(R, t + (I - R) B)`.
    pub fn in_right_camera(&self, baseline: &Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation,
            translation: self.translation + (Matrix3::identity() - self.rotation) * baseline,
        }
    }

    /// Left perturbation `R' = Exp(w) R`, `t' = t + dt` for `delta = (w, dt)`.
    pub fn perturbed(&self, delta: &[f64]) -> Self {
        let w = Vector3::new(delta[0], delta[1], delta[2]);
        let dt = Vector3::new(delta[3], delta[4], delta[5]);
        Self { rotation: Rotation3::new(w).into_inner() * self.rotation, translation: self.translation + dt }
    }

    /// Fractional motion along the constant-velocity screw, `s = 1` gives `self`.
    pub fn interpolate(&self, s: f64) -> Self {
        // Homogeneous form: X' = R X + p with p = -t.
        let w = self.rotation_vector();
        let p = -self.translation;
        let v_inv = left_jacobian_inverse(&w);
        let rho = v_inv * p;
        let ws = w * s;
        let ps = left_jacobian(&ws) * (rho * s);
        Self { rotation: Rotation3::new(ws).into_inner(), translation: -ps }
    }
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let th = w.norm();
    let k = skew(w);
    if th < 1e-8 {
        return Matrix3::identity() + k * 0.5;
    }
    Matrix3::identity() + k * ((1.0 - th.cos()) / (th * th)) + k * k * ((th - th.sin()) / (th * th * th))
}

fn left_jacobian_inverse(w: &Vector3<f64>) -> Matrix3<f64> {
    let th = w.norm();
    let k = skew(w);
    if th < 1e-8 {
        return Matrix3::identity() - k * 0.5;
    }
    let c = (1.0 / (th * th)) * (1.0 - (th * th.sin()) / (2.0 * (1.0 - th.cos())));
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Pixel-homogeneous 3x3 mapping. The displacement `H - I` is kept alongside
/// the matrix so flows are evaluated without the `x + u - x` cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    displacement: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity(), displacement: Matrix3::zeros() }
    }

    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self> {
        check_det(&matrix, "matrix")?;
        Ok(Self { matrix, displacement: matrix - Matrix3::identity() })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// `H - I`.
    pub fn displacement(&self) -> &Matrix3<f64> {
        &self.displacement
    }

    /// Maps a pixel through `H` with perspective division.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let u = self.flow(x, y)?;
        Ok([x + u[0], y + u[1]])
    }

    /// `Hx̃/(Hx̃)₃ - x`.
    #[inline]
    pub fn flow(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let d = &self.displacement;
        let vx = d[(0, 0)] * x + d[(0, 1)] * y + d[(0, 2)];
        let vy = d[(1, 0)] * x + d[(1, 1)] * y + d[(1, 2)];
        let vz = d[(2, 0)] * x + d[(2, 1)] * y + d[(2, 2)];
        let w = 1.0 + vz;
        if !(w.abs() > INFINITY_W) {
            return Err(Error::PointAtInfinity { x, y });
        }
        Ok([(vx - x * vz) / w, (vy - y * vz) / w])
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or_else(|| Error::SingularHomography { context: "inverse".into(), det: 0.0 })?;
        Homography::from_matrix(inv)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Homography) -> Result<Homography> {
        Homography::from_matrix(self.matrix * first.matrix)
    }
}

fn check_det(m: &Matrix3<f64>, context: &str) -> Result<()> {
    let det = m.determinant();
    if !(det.abs() > SINGULAR_DET) {
        return Err(Error::SingularHomography { context: context.to_string(), det });
    }
    Ok(())
}

/// Plane-induced homography `K (R - t nᵀ) K⁻¹` for pixels of the reference
/// camera moved by `motion`.
pub fn homography_from_plane_motion(rig: &CameraRig, motion: &RigidMotion, plane: &Plane) -> Result<Homography> {
    homography_with_context(rig, motion, plane, "plane-motion")
}

pub(crate) fn homography_with_context(
    rig: &CameraRig,
    motion: &RigidMotion,
    plane: &Plane,
    context: &str,
) -> Result<Homography> {
    let k = rig.intrinsics();
    let k_inv = rig.intrinsics_inv();
    let matrix = k * (motion.rotation - motion.translation * plane.n.transpose()) * k_inv;
    check_det(&matrix, context)?;
    let kt = k * motion.translation;
    let nk = plane.n.transpose() * k_inv;
    let displacement = k * (motion.rotation - Matrix3::identity()) * k_inv - kt * nk;
    Ok(Homography { matrix, displacement })
}

/// Euclidean flow of pixel `x` under `H`.
pub fn flow_from_homography(h: &Homography, x: [f64; 2]) -> Result<[f64; 2]> {
    h.flow(x[0], x[1])
}

/// Disparity `fx · b · (n·K⁻¹x̃)` of the plane at pixel `x`.
pub fn disparity_from_plane(rig: &CameraRig, plane: &Plane, x: [f64; 2]) -> Result<f64> {
    let inv_depth = plane.inverse_depth(rig, x[0], x[1]);
    if !(inv_depth > 0.0) {
        return Err(Error::BehindCamera { x: x[0], y: x[1] });
    }
    Ok(rig.fx * rig.baseline * inv_depth)
}

/// Direction of a warp from the reference image to one of the other five.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpDirection {
    Stereo,
    FlowForward,
    FlowBackward,
    CrossForward,
    CrossBackward,
}

impl WarpDirection {
    pub const ALL: [WarpDirection; 5] = [
        WarpDirection::Stereo,
        WarpDirection::FlowForward,
        WarpDirection::FlowBackward,
        WarpDirection::CrossForward,
        WarpDirection::CrossBackward,
    ];

    /// Image this direction warps the reference into.
    pub fn target(self) -> ImageId {
        match self {
            WarpDirection::Stereo => ImageId::new(View::Right, Frame::Cur),
            WarpDirection::FlowForward => ImageId::new(View::Left, Frame::Next),
            WarpDirection::FlowBackward => ImageId::new(View::Left, Frame::Prev),
            WarpDirection::CrossForward => ImageId::new(View::Right, Frame::Next),
            WarpDirection::CrossBackward => ImageId::new(View::Right, Frame::Prev),
        }
    }

    pub fn from_target(id: ImageId) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.target() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            WarpDirection::Stereo => "stereo",
            WarpDirection::FlowForward => "flow_f",
            WarpDirection::FlowBackward => "flow_b",
            WarpDirection::CrossForward => "cross_f",
            WarpDirection::CrossBackward => "cross_b",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Coordinate change from the reference camera (left, frame m) to the camera
/// of image `id`, for scene points that move with `motion`.
pub fn reference_to_image(motion: &RigidMotion, id: ImageId, rig: &CameraRig) -> RigidMotion {
    let temporal = match id.frame {
        Frame::Cur => RigidMotion::identity(),
        Frame::Next => *motion,
        Frame::Prev => motion.inverse(),
    };
    match id.view {
        View::Left => temporal,
        View::Right => temporal.then(&RigidMotion::translation(rig.baseline_vector())),
    }
}

/// Object motion between consecutive frames expressed in the camera of `view`.
pub fn motion_in_view(motion: &RigidMotion, view: View, rig: &CameraRig) -> RigidMotion {
    match view {
        View::Left => *motion,
        View::Right => motion.in_right_camera(&rig.baseline_vector()),
    }
}

/// Homography carrying reference pixels of a superpixel with plane `plane`
/// and motion `motion` into image `id`.
pub fn image_homography(rig: &CameraRig, plane: &Plane, motion: &RigidMotion, id: ImageId) -> Result<Homography> {
    if id == ImageId::REFERENCE {
        return Ok(Homography::identity());
    }
    homography_with_context(rig, &reference_to_image(motion, id, rig), plane, id.name())
}

/// `H*` for one of the five warp directions. Cross warps are the stereo warp
/// applied after the temporal one, evaluated as a single homography.
pub fn warp_homography(rig: &CameraRig, plane: &Plane, motion: &RigidMotion, direction: WarpDirection) -> Result<Homography> {
    image_homography(rig, plane, motion, direction.target())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig100() -> CameraRig {
        CameraRig::new(100.0, 100.0, 0.0, 0.0, 0.5).unwrap()
    }

    #[test]
    fn identity_motion_gives_identity() {
        let rig = CameraRig::new(120.0, 110.0, 30.0, 20.0, 0.3).unwrap();
        let plane = Plane::new(Vector3::new(0.01, -0.02, 0.1));
        let h = homography_from_plane_motion(&rig, &RigidMotion::identity(), &plane).unwrap();
        assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-15);
        assert_eq!(h.flow(37.0, 12.0).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn lateral_translation_shifts_by_one_pixel() {
        let rig = rig100();
        let m = RigidMotion::translation(Vector3::new(0.1, 0.0, 0.0));
        let h = homography_from_plane_motion(&rig, &m, &Plane::fronto_parallel(10.0)).unwrap();
        let u = flow_from_homography(&h, [50.0, 50.0]).unwrap();
        assert!((u[0] + 1.0).abs() < 1e-12 && u[1].abs() < 1e-12);
    }

    #[test]
    fn translation_homography_flow() {
        let mut m = Matrix3::identity();
        m[(0, 2)] = 3.0;
        m[(1, 2)] = -2.0;
        let h = Homography::from_matrix(m).unwrap();
        assert_eq!(h.flow(11.0, -4.0).unwrap(), [3.0, -2.0]);
    }

    #[test]
    fn singular_and_infinite_cases_error() {
        assert!(matches!(Homography::from_matrix(Matrix3::zeros()), Err(Error::SingularHomography { .. })));
        let mut m = Matrix3::identity();
        m[(2, 0)] = -1.0;
        let h = Homography::from_matrix(m).unwrap();
        assert!(matches!(h.flow(1.0, 0.0), Err(Error::PointAtInfinity { .. })));
        let rig = rig100();
        let behind = Plane::new(Vector3::new(0.0, 0.0, -0.1));
        assert!(matches!(disparity_from_plane(&rig, &behind, [0.0, 0.0]), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn disparity_matches_pinhole_stereo() {
        let rig = rig100();
        let d = disparity_from_plane(&rig, &Plane::fronto_parallel(10.0), [13.0, -7.0]).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        let d = disparity_from_plane(&rig, &Plane::fronto_parallel(5.0), [13.0, -7.0]).unwrap();
        assert!((d - 10.0).abs() < 1e-12);
        let slanted = Plane::new(Vector3::new(0.01, 0.0, 0.1));
        let d = disparity_from_plane(&rig, &slanted, [0.0, 42.0]).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn stereo_warp_is_minus_disparity() {
        let rig = rig100();
        let plane = Plane::fronto_parallel(10.0);
        let h = warp_homography(&rig, &plane, &RigidMotion::identity(), WarpDirection::Stereo).unwrap();
        for x in [[0.0, 0.0], [40.0, -3.0], [-17.0, 8.0]] {
            let u = h.flow(x[0], x[1]).unwrap();
            let d = disparity_from_plane(&rig, &plane, x).unwrap();
            assert!((u[0] + d).abs() < 1e-12 && u[1].abs() < 1e-12);
        }
    }

    #[test]
    fn cross_warp_with_identity_motion_is_stereo() {
        let rig = CameraRig::new(150.0, 150.0, 64.0, 32.0, 0.4).unwrap();
        let plane = Plane::new(Vector3::new(0.002, 0.001, 0.08));
        let s = warp_homography(&rig, &plane, &RigidMotion::identity(), WarpDirection::Stereo).unwrap();
        let c = warp_homography(&rig, &plane, &RigidMotion::identity(), WarpDirection::CrossForward).unwrap();
        assert!((s.matrix() - c.matrix()).abs().max() < 1e-12);
        let f = warp_homography(&rig, &plane, &RigidMotion::identity(), WarpDirection::FlowForward).unwrap();
        assert!((f.matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn cross_warp_is_stereo_after_flow() {
        let rig = CameraRig::new(150.0, 150.0, 64.0, 32.0, 0.4).unwrap();
        let plane = Plane::new(Vector3::new(0.002, 0.001, 0.08));
        let m = RigidMotion::from_axis_angle(Vector3::new(0.01, -0.02, 0.005), Vector3::new(0.2, -0.05, 0.3));
        let flow_f = warp_homography(&rig, &plane, &m, WarpDirection::FlowForward).unwrap();
        let moved = plane.transformed(&m).unwrap();
        let stereo_next = homography_from_plane_motion(&rig, &RigidMotion::translation(rig.baseline_vector()), &moved).unwrap();
        let composed = stereo_next.compose(&flow_f).unwrap();
        let cross = warp_homography(&rig, &plane, &m, WarpDirection::CrossForward).unwrap();
        let a = composed.matrix() / composed.matrix()[(2, 2)];
        let b = cross.matrix() / cross.matrix()[(2, 2)];
        assert!((a - b).abs().max() < 1e-10);
    }

    #[test]
    fn small_rotation_about_y_moves_principal_point_left() {
        let rig = rig100();
        let m = RigidMotion::from_axis_angle(Vector3::new(0.0, 0.01, 0.0), Vector3::zeros());
        let h = homography_from_plane_motion(&rig, &m, &Plane::fronto_parallel(10.0)).unwrap();
        let oracle = rig.intrinsics() * m.rotation * rig.intrinsics_inv();
        assert!((h.matrix() - oracle).abs().max() < 1e-14);
        // The point X = (0,0,1) rotates to (sin θ, 0, cos θ); exact pixel is fx·tan θ.
        let u = h.flow(0.0, 0.0).unwrap();
        assert!((u[0].abs() - 100.0 * 0.01f64.tan()).abs() < 1e-9);
        assert!((u[0].abs() - 1.0).abs() < 1e-3 && u[1].abs() < 1e-12);
    }

    #[test]
    fn backward_warp_of_moved_plane_undoes_forward_warp() {
        let rig = CameraRig::new(180.0, 175.0, 60.0, 40.0, 0.5).unwrap();
        let plane = Plane::new(Vector3::new(0.01, -0.004, 0.12));
        let m = RigidMotion::from_axis_angle(Vector3::new(0.03, -0.02, 0.01), Vector3::new(0.4, -0.1, 0.6));
        let f = homography_from_plane_motion(&rig, &m, &plane).unwrap();
        let b = homography_from_plane_motion(&rig, &m.inverse(), &plane.transformed(&m).unwrap()).unwrap();
        let id = b.compose(&f).unwrap();
        let id = id.matrix() / id.matrix()[(2, 2)];
        assert!((id - Matrix3::identity()).abs().max() < 1e-8);
    }

    #[test]
    fn motion_inverse_and_right_camera_conjugation() {
        let m = RigidMotion::from_axis_angle(Vector3::new(0.02, 0.01, -0.03), Vector3::new(0.3, 0.1, -0.2));
        let p = Vector3::new(1.0, -2.0, 7.0);
        assert!((m.inverse().apply(&m.apply(&p)) - p).norm() < 1e-12);
        let b = Vector3::new(0.5, 0.0, 0.0);
        let right = m.in_right_camera(&b);
        // Right-camera point, moved, equals the moved left point shifted by the baseline.
        assert!((right.apply(&(p - b)) - (m.apply(&p) - b)).norm() < 1e-12);
    }

    #[test]
    fn interpolation_composes_to_full_motion() {
        let m = RigidMotion::from_axis_angle(Vector3::new(0.02, 0.05, -0.01), Vector3::new(0.3, 0.1, -0.2));
        let half = m.interpolate(0.5);
        let twice = half.then(&half);
        assert!((twice.rotation - m.rotation).abs().max() < 1e-12);
        assert!((twice.translation - m.translation).norm() < 1e-12);
        let id = m.interpolate(0.0);
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-15);
    }
}
