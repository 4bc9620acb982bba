//! Differential homography: removing the `eps * I` ambiguity of the linear
//! solution and splitting `H_d = -([omega]x + (nu/d) N^T)` into its two
//! motion/structure candidates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, vee, DiffHomography};

/// Relative tolerance on `|M|_F` below which the plane is unobservable.
pub const PURE_ROTATION_RTOL: f64 = 1e-8;
/// Relative tolerance used to call an eigenvalue zero.
pub const EIGEN_ZERO_RTOL: f64 = 1e-8;
/// Relative tolerance for eigenvector sign ties.
const SIGN_TIE_RTOL: f64 = 1e-12;

/// One candidate explanation of a differential homography.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarStructure {
    /// Translational velocity over plane distance, 1/s.
    pub nu_over_d: Vector3<f64>,
    /// Unit plane normal with non-negative z component.
    pub normal: Vector3<f64>,
    /// Angular velocity, rad/s.
    pub omega: Vector3<f64>,
    /// Frobenius norm of the symmetric part discarded by the vee operator.
    pub symmetric_residual: f64,
}

impl PlanarStructure {
    pub fn homography(&self) -> DiffHomography {
        DiffHomography::from_motion(&self.omega, &self.nu_over_d, &self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub candidates: [PlanarStructure; 2],
    /// Eigenvalues of `M = -(H_d + H_d^T)`, descending.
    pub eigenvalues: [f64; 3],
}

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues sorted
/// descending and each eigenvector's largest-magnitude component positive.
pub fn sorted_symmetric_eigen(m: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| canonical_sign(eig.eigenvectors.column(i).into_owned()));
    (values, vectors)
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let max = v.amax();
    let tol = SIGN_TIE_RTOL * max;
    // First component within tolerance of the largest magnitude decides the sign.
    let lead = v.iter().find(|c| c.abs() >= max - tol).copied().unwrap_or(0.0);
    if lead < 0.0 {
        -v
    } else {
        v
    }
}

/// Removes the `eps * I` ambiguity: the middle eigenvalue of `H_L + H_L^T`
/// equals `2 eps` because the true `H_d + H_d^T` has rank at most two with
/// eigenvalues of opposite sign.
pub fn recover_true_hd(h_l: &DiffHomography) -> (DiffHomography, f64) {
    let m = h_l.0 + h_l.0.transpose();
    let (values, _) = sorted_symmetric_eigen(&m);
    let eps = values[1] / 2.0;
    (DiffHomography(h_l.0 - Matrix3::identity() * eps), eps)
}

fn candidate(h: &Matrix3<f64>, j: &Vector3<f64>, k: &Vector3<f64>) -> PlanarStructure {
    let (j, k) = if k.z < 0.0 { (-j, -k) } else { (*j, *k) };
    let k_norm = k.norm();
    let s = h + j * k.transpose();
    let sym = (s + s.transpose()) * 0.5;
    PlanarStructure {
        nu_over_d: j * k_norm,
        normal: k / k_norm,
        omega: -vee(&s),
        symmetric_residual: sym.norm(),
    }
}

/// Splits a (true) differential homography into its two candidate
/// `(omega, nu/d, N)` sets.
pub fn decompose_hd(h_d: &DiffHomography) -> Result<DecompositionResult> {
    let h = h_d.0;
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite differential homography".into()));
    }
    let m = -(h + h.transpose());
    if m.norm() < PURE_ROTATION_RTOL * h.norm() || h.norm() == 0.0 {
        let omega = -vee(&h);
        return Err(Error::PureRotationDegenerate {
            omega: [omega.x, omega.y, omega.z],
        });
    }
    let (values, vectors) = sorted_symmetric_eigen(&m);
    let scale = values[0].abs().max(values[2].abs());
    let zero = EIGEN_ZERO_RTOL * scale;
    if values[1].abs() <= zero && (values[0] <= zero || values[2] >= -zero) {
        return Err(Error::RankOneDegenerate);
    }
    let a = (values[0].max(0.0) / 2.0).sqrt();
    let b = (-values[2].min(0.0) / 2.0).sqrt();
    let j = vectors[0] * a + vectors[2] * b;
    let k = vectors[0] * a - vectors[2] * b;
    Ok(DecompositionResult {
        candidates: [candidate(&h, &j, &k), candidate(&h, &k, &j)],
        eigenvalues: values,
    })
}

/// Output document of the homography pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyReport {
    pub epsilon: f64,
    /// Row-major true differential homography.
    pub h_d: [[f64; 3]; 3],
    pub candidates: Option<[PlanarStructure; 2]>,
    pub eigenvalues: Option<[f64; 3]>,
    /// Set when the decomposition hit a degenerate configuration.
    pub degeneracy: Option<String>,
    /// Angular velocity for the pure-rotation case.
    pub omega: Option<Vector3<f64>>,
}

/// Recovers `H_d` from a linear estimate and decomposes it; degenerate cases
/// are reported in the document rather than as errors.
pub fn analyse_linear_homography(h_l: &DiffHomography) -> Result<HomographyReport> {
    let (h_d, epsilon) = recover_true_hd(h_l);
    let mut report = HomographyReport {
        epsilon,
        h_d: h_d.rows(),
        candidates: None,
        eigenvalues: None,
        degeneracy: None,
        omega: None,
    };
    match decompose_hd(&h_d) {
        Ok(d) => {
            report.candidates = Some(d.candidates);
            report.eigenvalues = Some(d.eigenvalues);
        }
        Err(Error::PureRotationDegenerate { omega }) => {
            report.degeneracy = Some("pure_rotation".into());
            report.omega = Some(Vector3::from(omega));
        }
        Err(Error::RankOneDegenerate) => report.degeneracy = Some("rank_one".into()),
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// `-[omega]x` for a pure rotation.
pub fn rotation_homography(omega: &Vector3<f64>) -> DiffHomography {
    DiffHomography(-skew(omega))
}
