//! Stacked least-squares solves.
//!
//! Full-rank systems go through a Householder QR factorization. Systems that
//! are rank deficient by construction (the differential homography has a
//! one-dimensional null space) use a truncated SVD and return the
//! minimum-norm solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    /// Numerical rank the system must reach.
    pub required_rank: usize,
    /// Return the minimum-norm solution restricted to the leading
    /// `required_rank` singular directions.
    pub minimum_norm: bool,
}

impl SolveOptions {
    pub fn full_rank(cols: usize) -> Self {
        Self {
            required_rank: cols,
            minimum_norm: false,
        }
    }

    pub fn minimum_norm(rank: usize) -> Self {
        Self {
            required_rank: rank,
            minimum_norm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub rank: usize,
    /// `sigma_max / sigma_r` with `r` the required rank.
    pub cond: f64,
    pub residual_rms: f64,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: DVector<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Numerical rank threshold relative to the largest singular value.
fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    sigma_max * rows.max(cols) as f64 * f64::EPSILON * 16.0
}

/// Solves `A theta = b` in the least-squares sense.
pub fn stack_and_solve(a: &DMatrix<f64>, b: &DVector<f64>, opts: SolveOptions) -> Result<Solution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::InvalidInput(format!(
            "{m} rows but {} right-hand sides",
            b.len()
        )));
    }
    if opts.required_rank > n || opts.required_rank == 0 {
        return Err(Error::InvalidInput(format!(
            "required rank {} for {n} unknowns",
            opts.required_rank
        )));
    }
    if m < opts.required_rank || (m < n && !opts.minimum_norm) {
        return Err(Error::RankDeficient {
            rank: m.min(n),
            required: opts.required_rank,
        });
    }
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite entries in stacked system".into()));
    }

    let svd = a.clone().svd(opts.minimum_norm, opts.minimum_norm);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(m, n, sigma_max);
    let rank = if sigma_max > 0.0 {
        sv.iter().filter(|&&s| s > tol).count()
    } else {
        0
    };
    if rank < opts.required_rank {
        return Err(Error::RankDeficient {
            rank,
            required: opts.required_rank,
        });
    }
    let cond = sigma_max / sv[opts.required_rank - 1];

    let theta = if opts.minimum_norm {
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        // nalgebra does not guarantee ordering; select the leading directions explicitly.
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let mut theta = DVector::zeros(n);
        for &i in order.iter().take(opts.required_rank) {
            let coeff = u.column(i).dot(b) / svd.singular_values[i];
            theta += v_t.row(i).transpose() * coeff;
        }
        theta
    } else {
        let qr = a.clone().qr();
        let qtb = qr.q().transpose() * b;
        qr.r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Numerical("QR back-substitution failed".into()))?
    };
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite least-squares solution".into()));
    }

    let residual = a * &theta - b;
    let residual_rms = (residual.norm_squared() / m as f64).sqrt();
    Ok(Solution {
        theta,
        diagnostics: SolveDiagnostics {
            rank,
            cond,
            residual_rms,
            singular_values: sv,
        },
    })
}

/// Row-oriented builder for the stacked system.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    cols: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
}

impl StackedSystem {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            data: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            data: Vec::with_capacity(cols * rows),
            rhs: Vec::with_capacity(rows),
        }
    }

    pub fn push(&mut self, row: &[f64], rhs: f64) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rhs.push(rhs);
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rhs.len(), self.cols, &self.data)
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rhs)
    }

    pub fn solve(&self, opts: SolveOptions) -> Result<Solution> {
        stack_and_solve(&self.matrix(), &self.rhs(), opts)
    }
}
