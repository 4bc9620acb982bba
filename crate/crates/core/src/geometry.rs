//! Motion-field and differential two-view geometry.
//!
//! Everything here works in calibrated camera coordinates: an image point is
//! `x = (X/Z, Y/Z)` and flows are in calibrated units per second. The camera
//! moves with linear velocity `nu` and angular velocity `omega` expressed in its
//! own frame, so a static scene point moves as `dP/dt = -omega x P - nu`.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FlowVector = Vector2<f64>;

/// Default bound on `|x|` and `|y|` for calibrated points (about 71 degrees off axis).
pub const DEFAULT_FOV_LIMIT: f64 = 3.0;

/// Smallest normal-flow magnitude accepted as an observation, calibrated units/s.
pub const MIN_NORMAL_FLOW: f64 = 1e-9;

/// Row-major vectorization of a 3x3 matrix: `h[3 * r + c] = H[(r, c)]`.
pub type HomographyVec = SVector<f64, 9>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPoint {
    pub x: f64,
    pub y: f64,
}

impl CalibratedPoint {
    /// Checked constructor using [`DEFAULT_FOV_LIMIT`].
    pub fn new(x: f64, y: f64) -> Result<Self> {
        Self::with_limit(x, y, DEFAULT_FOV_LIMIT)
    }

    pub fn with_limit(x: f64, y: f64, limit: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() || x.abs() > limit || y.abs() > limit {
            return Err(Error::OutOfBounds { x, y });
        }
        Ok(Self { x, y })
    }

    /// Homogeneous lift `(x, y, 1)`.
    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn contains_pixel(&self, px: Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }

    /// Maps a pixel location and a time-surface gradient (s/px) into calibrated
    /// coordinates. The gradient transforms covariantly: `g_cal = diag(fx, fy) g_px`.
    pub fn pixel_to_calibrated(
        &self,
        px: Vector2<f64>,
        gradient_px: Vector2<f64>,
    ) -> Result<(CalibratedPoint, Vector2<f64>)> {
        if !self.contains_pixel(px) {
            return Err(Error::OutOfBounds { x: px.x, y: px.y });
        }
        let point = CalibratedPoint {
            x: (px.x - self.cx) / self.fx,
            y: (px.y - self.cy) / self.fy,
        };
        let gradient = Vector2::new(self.fx * gradient_px.x, self.fy * gradient_px.y);
        Ok((point, gradient))
    }

    pub fn calibrated_to_pixel(&self, x: &CalibratedPoint) -> Vector2<f64> {
        Vector2::new(self.fx * x.x + self.cx, self.fy * x.y + self.cy)
    }

    /// Converts a pixel-unit isotropic quantity (flow noise, say) to calibrated
    /// units per axis.
    pub fn px_to_calibrated_scale(&self) -> Vector2<f64> {
        Vector2::new(1.0 / self.fx, 1.0 / self.fy)
    }
}

/// A single normal-flow measurement in calibrated coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFlowObs {
    pub x: CalibratedPoint,
    pub n: Vector2<f64>,
    pub t: f64,
    pub mag2: f64,
}

impl NormalFlowObs {
    pub fn new(x: CalibratedPoint, n: Vector2<f64>, t: f64) -> Result<Self> {
        let mag2 = n.dot(&n);
        if !mag2.is_finite() || mag2.sqrt() <= MIN_NORMAL_FLOW || !t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "normal flow ({}, {}) at t={t} is not a usable observation",
                n.x, n.y
            )));
        }
        Ok(Self { x, n, t, mag2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub nu: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl Velocity {
    pub fn new(nu: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self { nu, omega }
    }

    pub fn rotation(omega: Vector3<f64>) -> Self {
        Self {
            nu: Vector3::zeros(),
            omega,
        }
    }

    /// `[nu; omega]` as used by the 6-DoF model.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.nu.x,
            self.nu.y,
            self.nu.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            nu: Vector3::new(v[0], v[1], v[2]),
            omega: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

/// Differential homography `H_d = -([omega]x + nu N^T / d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffHomography(pub Matrix3<f64>);

impl DiffHomography {
    pub fn from_motion(omega: &Vector3<f64>, nu_over_d: &Vector3<f64>, normal: &Vector3<f64>) -> Self {
        Self(-(skew(omega) + nu_over_d * normal.transpose()))
    }

    pub fn to_vec(&self) -> HomographyVec {
        HomographyVec::from_iterator(self.0.transpose().iter().copied())
    }

    pub fn from_vec(h: &[f64]) -> Self {
        Self(Matrix3::from_row_slice(h))
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Flow predicted at `x`: the first two entries of `(I - x e3^T) H x`.
    pub fn flow_at(&self, x: &CalibratedPoint) -> FlowVector {
        let xh = x.homogeneous();
        let hx = self.0 * xh;
        Vector2::new(hx.x - x.x * hx.z, hx.y - x.y * hx.z)
    }
}

/// Translational part of the motion field: `[[-1, 0, x], [0, -1, y]]`.
pub fn matrix_a(x: &CalibratedPoint) -> Matrix2x3<f64> {
    Matrix2x3::new(-1.0, 0.0, x.x, 0.0, -1.0, x.y)
}

/// Rotational part of the motion field.
pub fn matrix_b(x: &CalibratedPoint) -> Matrix2x3<f64> {
    let (px, py) = (x.x, x.y);
    Matrix2x3::new(
        px * py,
        -(1.0 + px * px),
        py,
        1.0 + py * py,
        -px * py,
        -px,
    )
}

/// Planar-flow coefficients: `C(x) vec(H)` equals the flow induced by `H`,
/// with `vec` in row-major order (see [`HomographyVec`]).
pub fn matrix_c(x: &CalibratedPoint) -> SMatrix<f64, 2, 9> {
    let (px, py) = (x.x, x.y);
    SMatrix::<f64, 2, 9>::from_row_slice(&[
        px, py, 1.0, 0.0, 0.0, 0.0, -px * px, -px * py, -px, //
        0.0, 0.0, 0.0, px, py, 1.0, -px * py, -py * py, -py,
    ])
}

/// Feature sensitivity matrix `[A(x)/Z | B(x)]`.
pub fn matrix_d(x: &CalibratedPoint, depth: f64) -> Result<SMatrix<f64, 2, 6>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::DegenerateDepth(depth));
    }
    let a = matrix_a(x) / depth;
    let b = matrix_b(x);
    let mut d = SMatrix::<f64, 2, 6>::zeros();
    d.fixed_view_mut::<2, 3>(0, 0).copy_from(&a);
    d.fixed_view_mut::<2, 3>(0, 3).copy_from(&b);
    Ok(d)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew-symmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Returns `([nu]x, s)` with `s = ([nu]x [omega]x + [omega]x [nu]x) / 2`.
pub fn epipolar_terms(v: &Velocity) -> (Matrix3<f64>, Matrix3<f64>) {
    let nu = skew(&v.nu);
    let om = skew(&v.omega);
    let s = 0.5 * (nu * om + om * nu);
    (nu, s)
}

/// Differential epipolar residual `u^T [nu]x x - x^T s x` for a full flow.
pub fn epipolar_residual(x: &CalibratedPoint, u: &FlowVector, v: &Velocity) -> f64 {
    let (nu, s) = epipolar_terms(v);
    let xh = x.homogeneous();
    let uh = Vector3::new(u.x, u.y, 0.0);
    uh.dot(&(nu * xh)) - xh.dot(&(s * xh))
}

/// Normal-flow residual `n^T u - |n|^2`.
pub fn nf_residual(obs: &NormalFlowObs, u: &FlowVector) -> f64 {
    obs.n.dot(u) - obs.mag2
}

/// Motion field `u = A(x) nu / Z + B(x) omega`.
pub fn motion_field(x: &CalibratedPoint, depth: f64, v: &Velocity) -> Result<FlowVector> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::DegenerateDepth(depth));
    }
    Ok(matrix_a(x) * v.nu / depth + matrix_b(x) * v.omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64) -> CalibratedPoint {
        CalibratedPoint::new(x, y).unwrap()
    }

    #[test]
    fn a_and_b_at_principal_point() {
        assert_eq!(
            matrix_a(&pt(0.0, 0.0)),
            Matrix2x3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
        );
        assert_eq!(
            matrix_b(&pt(0.0, 0.0)),
            Matrix2x3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0)
        );
        assert_eq!(
            matrix_a(&pt(1.0, 2.0)),
            Matrix2x3::new(-1.0, 0.0, 1.0, 0.0, -1.0, 2.0)
        );
        assert_eq!(
            matrix_b(&pt(1.0, 0.0)),
            Matrix2x3::new(0.0, -2.0, 0.0, 1.0, 0.0, -1.0)
        );
        assert_eq!(matrix_a(&pt(0.3, -0.2)) * Vector3::zeros(), Vector2::zeros());
        assert_eq!(matrix_b(&pt(0.0, 0.0)) * Vector3::z(), Vector2::zeros());
    }

    #[test]
    fn c_picks_translation_column_at_origin() {
        let mut h = HomographyVec::zeros();
        for (i, v) in h.iter_mut().enumerate() {
            *v = (i + 1) as f64;
        }
        let u = matrix_c(&pt(0.0, 0.0)) * h;
        assert_eq!(u, Vector2::new(3.0, 6.0));
    }

    #[test]
    fn c_matches_direct_product_for_unit_entry() {
        // H11 = 1 at x = (1, 1): (I - x e3^T) H x = (1, 0, 0) - x * 0 => u = (1, 0).
        let mut h = Matrix3::zeros();
        h[(0, 0)] = 1.0;
        let x = pt(1.0, 1.0);
        let direct = DiffHomography(h).flow_at(&x);
        let via_c = matrix_c(&x) * DiffHomography(h).to_vec();
        assert_eq!(direct, Vector2::new(1.0, 0.0));
        assert_eq!(via_c, direct);
    }

    #[test]
    fn d_blocks_and_depth_errors() {
        let d = matrix_d(&pt(0.0, 0.0), 1.0).unwrap();
        let expected = SMatrix::<f64, 2, 6>::from_row_slice(&[
            -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, //
            0.0, -1.0, 0.0, 1.0, 0.0, 0.0,
        ]);
        assert_eq!(d, expected);
        let d2 = matrix_d(&pt(0.0, 0.0), 2.0).unwrap();
        assert_eq!(d2[(0, 0)], -0.5);
        assert_eq!(d2[(1, 3)], 1.0);
        assert!(matches!(
            matrix_d(&pt(0.0, 0.0), 0.0),
            Err(Error::DegenerateDepth(_))
        ));
    }

    #[test]
    fn epipolar_terms_examples() {
        let v = Velocity::new(Vector3::z(), Vector3::z());
        let (_, s) = epipolar_terms(&v);
        assert_eq!(s, Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 0.0)));
        let (nu, s) = epipolar_terms(&Velocity::rotation(Vector3::new(0.1, 0.2, 0.3)));
        assert_eq!(nu, Matrix3::zeros());
        assert_eq!(s, Matrix3::zeros());
    }

    #[test]
    fn nf_residual_examples() {
        let x = pt(0.0, 0.0);
        let o = NormalFlowObs::new(x, Vector2::new(1.732, 0.0), 0.0).unwrap();
        assert_eq!(nf_residual(&o, &Vector2::new(1.732, -1.0)), 0.0);
        let o = NormalFlowObs::new(x, Vector2::new(0.3, -0.4), 0.0).unwrap();
        assert_abs_diff_eq!(nf_residual(&o, &Vector2::new(0.3, -0.4)), 0.0, epsilon = 1e-16);
        let o = NormalFlowObs::new(x, Vector2::new(1.0, 0.0), 0.0).unwrap();
        assert_eq!(nf_residual(&o, &Vector2::new(0.0, 1.0)), -1.0);
    }

    #[test]
    fn observation_rejects_tiny_flow() {
        assert!(NormalFlowObs::new(pt(0.0, 0.0), Vector2::new(1e-10, 0.0), 0.0).is_err());
    }

    #[test]
    fn pixel_conversion() {
        let k = Intrinsics::new(200.0, 200.0, 120.0, 90.0, 240, 180).unwrap();
        let (p, g) = k
            .pixel_to_calibrated(Vector2::new(120.0, 90.0), Vector2::new(0.5, 0.0))
            .unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_eq!(g, Vector2::new(100.0, 0.0));
        assert!(matches!(
            k.pixel_to_calibrated(Vector2::new(240.0, 3.0), Vector2::zeros()),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
    }

    #[test]
    fn fov_limit() {
        assert!(CalibratedPoint::new(3.0, -3.0).is_ok());
        assert!(CalibratedPoint::new(3.1, 0.0).is_err());
        assert!(CalibratedPoint::new(f64::NAN, 0.0).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn calibrated_round_trip(x in -1.0..1.0f64, y in -0.9..0.9f64) {
            let k = Intrinsics::new(200.0, 210.0, 120.0, 90.0, 240, 180).unwrap();
            let p = CalibratedPoint::new(x * 0.59, y * 0.42).unwrap();
            let px = k.calibrated_to_pixel(&p);
            let (q, _) = k.pixel_to_calibrated(px, Vector2::zeros()).unwrap();
            prop_assert!((q.x - p.x).abs() <= 1e-12 && (q.y - p.y).abs() <= 1e-12);
        }

        #[test]
        fn motion_field_satisfies_epipolar_constraint(
            x in -1.5..1.5f64, y in -1.5..1.5f64, z in 0.2..20.0f64, nu in vec3(), om in vec3()
        ) {
            let p = pt(x, y);
            let v = Velocity::new(nu, om);
            let u = motion_field(&p, z, &v).unwrap();
            prop_assert!(epipolar_residual(&p, &u, &v).abs() <= 1e-10);
        }

        #[test]
        fn planar_motion_field_matches_homography(
            x in -1.0..1.0f64, y in -1.0..1.0f64, om in vec3(), nu in vec3(),
            nx in -0.5..0.5f64, ny in -0.5..0.5f64, d in 0.5..5.0f64, eps in -10.0..10.0f64
        ) {
            let normal = Vector3::new(nx, ny, 1.0).normalize();
            let p = pt(x, y);
            let inv_depth = normal.dot(&p.homogeneous()) / d;
            prop_assume!(inv_depth > 1e-3);
            let v = Velocity::new(nu, om);
            let u = motion_field(&p, 1.0 / inv_depth, &v).unwrap();
            let h = DiffHomography::from_motion(&om, &(nu / d), &normal);
            let uh = h.flow_at(&p);
            prop_assert!((u - uh).norm() <= 1e-10 * (1.0 + u.norm()));
            // eps * I lies in the null space of the planar flow.
            let shifted = DiffHomography(h.0 + Matrix3::identity() * eps);
            let us = matrix_c(&p) * shifted.to_vec();
            prop_assert!((us - uh).norm() <= 1e-10 * (1.0 + eps.abs()));
        }

        #[test]
        fn epipolar_s_symmetric(nu in vec3(), om in vec3()) {
            let (_, s) = epipolar_terms(&Velocity::new(nu, om));
            prop_assert_eq!(s, s.transpose());
        }

        #[test]
        fn normal_flow_identity(ux in -5.0..5.0f64, uy in -5.0..5.0f64, ang in 0.0..std::f64::consts::TAU) {
            let u = Vector2::new(ux, uy);
            let g = Vector2::new(ang.cos(), ang.sin());
            let n = g * u.dot(&g);
            prop_assert!((n.dot(&u) - n.dot(&n)).abs() <= 1e-12 * (1.0 + u.norm_squared()));
        }
    }
}
