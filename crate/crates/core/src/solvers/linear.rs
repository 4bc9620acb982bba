use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::lsq::{SolveDiagnostics, SolveOptions, StackedSystem};
use crate::error::{Error, Result};
use crate::geometry::{
    epipolar_terms, matrix_a, matrix_b, matrix_c, matrix_d, DiffHomography, FlowVector,
    NormalFlowObs, Velocity,
};

/// Relative tolerance below which a scalar denominator or 2x2 determinant is
/// treated as zero.
const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T> {
    pub value: T,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimate {
    pub u: FlowVector,
    /// Condition number of the 2x2 system.
    pub cond: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEstimate {
    pub depth: f64,
    /// `false` when the recovered depth is not positive (point behind the camera).
    pub cheirality_ok: bool,
}

pub fn angular_velocity_row(obs: &NormalFlowObs) -> [f64; 3] {
    let r = obs.n.transpose() * matrix_b(&obs.x);
    [r[0], r[1], r[2]]
}

pub fn six_dof_row(obs: &NormalFlowObs, depth: f64) -> Result<[f64; 6]> {
    let r = obs.n.transpose() * matrix_d(&obs.x, depth)?;
    let mut out = [0.0; 6];
    out.copy_from_slice(r.as_slice());
    Ok(out)
}

/// Coefficients over the row-major vectorization of `H`.
pub fn diff_homography_row(obs: &NormalFlowObs) -> [f64; 9] {
    let r = obs.n.transpose() * matrix_c(&obs.x);
    let mut out = [0.0; 9];
    out.copy_from_slice(r.as_slice());
    out
}

/// Global-flow model with `O = I`: the row is `n^T` itself.
pub fn global_flow_row(obs: &NormalFlowObs) -> [f64; 2] {
    [obs.n.x, obs.n.y]
}

/// Full flow at one pixel from its normal flow and the camera velocity, by
/// intersecting the normal-flow constraint with the differential epipolar
/// constraint.
pub fn solve_optical_flow(obs: &NormalFlowObs, v: &Velocity) -> Result<FlowEstimate> {
    if v.nu.norm() == 0.0 {
        return Err(Error::PureRotation);
    }
    let (nu_x, s) = epipolar_terms(v);
    let xh = obs.x.homogeneous();
    let epi = -(xh.transpose() * nu_x);
    let m = Matrix2::new(obs.n.x, obs.n.y, epi[0], epi[1]);
    let rhs = Vector2::new(obs.mag2, xh.dot(&(s * xh)));

    let row_scale = obs.n.norm() * Vector2::new(epi[0], epi[1]).norm();
    let det = m.determinant();
    if row_scale == 0.0 || det.abs() <= SINGULAR_RTOL * row_scale {
        return Err(Error::SingularSystem);
    }
    let u = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularSystem)?;
    let sv = m.singular_values();
    let cond = sv.max() / sv.min();
    Ok(FlowEstimate { u, cond })
}

/// Closed-form depth `Z = n^T A nu / (|n|^2 - n^T B omega)`.
pub fn solve_depth(obs: &NormalFlowObs, v: &Velocity) -> Result<DepthEstimate> {
    let a_nu = matrix_a(&obs.x) * v.nu;
    let b_om = matrix_b(&obs.x) * v.omega;
    let num = obs.n.dot(&a_nu);
    let den = obs.mag2 - obs.n.dot(&b_om);
    if den.abs() <= SINGULAR_RTOL * obs.mag2 {
        return Err(Error::RotationExplainsFlow);
    }
    let num_scale = obs.n.norm() * v.nu.norm() * (1.0 + obs.x.to_vector().norm());
    if num_scale == 0.0 || num.abs() <= SINGULAR_RTOL * num_scale {
        return Err(Error::PureTranslationZeroNumerator);
    }
    let depth = num / den;
    Ok(DepthEstimate {
        depth,
        cheirality_ok: depth > 0.0,
    })
}

fn check_count(obs: usize, required: usize) -> Result<()> {
    if obs < required {
        Err(Error::TooFewObservations {
            found: obs,
            required,
        })
    } else {
        Ok(())
    }
}

/// Angular velocity of a purely rotating camera.
pub fn solve_angular_velocity(obs: &[NormalFlowObs]) -> Result<Fit<Vector3<f64>>> {
    check_count(obs.len(), 3)?;
    let mut sys = StackedSystem::with_capacity(3, obs.len());
    for o in obs {
        sys.push(&angular_velocity_row(o), o.mag2);
    }
    let sol = sys.solve(SolveOptions::full_rank(3))?;
    Ok(Fit {
        value: Vector3::new(sol.theta[0], sol.theta[1], sol.theta[2]),
        diagnostics: sol.diagnostics,
    })
}

/// Linear and angular velocity from observations with known depth.
pub fn solve_six_dof(obs: &[NormalFlowObs], depths: &[f64]) -> Result<Fit<Velocity>> {
    if depths.len() != obs.len() {
        return Err(Error::InvalidInput(format!(
            "{} observations but {} depths",
            obs.len(),
            depths.len()
        )));
    }
    check_count(obs.len(), 6)?;
    let mut sys = StackedSystem::with_capacity(6, obs.len());
    for (o, &z) in obs.iter().zip(depths) {
        sys.push(&six_dof_row(o, z)?, o.mag2);
    }
    let sol = sys.solve(SolveOptions::full_rank(6))?;
    Ok(Fit {
        value: Velocity::from_slice(sol.theta.as_slice()),
        diagnostics: sol.diagnostics,
    })
}

/// Minimum-norm differential homography. The result is defined up to `eps * I`;
/// see [`crate::homography::recover_true_hd`].
pub fn solve_diff_homography(obs: &[NormalFlowObs]) -> Result<Fit<DiffHomography>> {
    check_count(obs.len(), 8)?;
    let mut sys = StackedSystem::with_capacity(9, obs.len());
    for o in obs {
        sys.push(&diff_homography_row(o), o.mag2);
    }
    let sol = sys.solve(SolveOptions::minimum_norm(8))?;
    Ok(Fit {
        value: DiffHomography::from_vec(sol.theta.as_slice()),
        diagnostics: sol.diagnostics,
    })
}

/// One flow vector shared by all observations (`O = I`).
pub fn solve_global_flow(obs: &[NormalFlowObs]) -> Result<Fit<FlowVector>> {
    check_count(obs.len(), 2)?;
    let mut sys = StackedSystem::with_capacity(2, obs.len());
    for o in obs {
        sys.push(&global_flow_row(o), o.mag2);
    }
    let sol = sys.solve(SolveOptions::full_rank(2))?;
    Ok(Fit {
        value: Vector2::new(sol.theta[0], sol.theta[1]),
        diagnostics: sol.diagnostics,
    })
}
