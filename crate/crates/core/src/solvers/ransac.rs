use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{
    angular_velocity_row, diff_homography_row, six_dof_row, solve_depth, solve_optical_flow,
};
use super::lsq::{stack_and_solve, SolveOptions};
use super::{ModelKind, ModelTag};
use crate::error::{Error, Result};
use crate::geometry::NormalFlowObs;

/// Hypotheses evaluated between two checks of the adaptive stopping rule.
/// Fixed so that the outcome does not depend on the thread count.
const BATCH: usize = 32;

/// Refit / re-score rounds after consensus.
const REFIT_ROUNDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier threshold on `|n^T O theta - |n|^2|`, in calibrated units^2/s^2.
    /// A pixel-domain threshold `tau` maps to `tau / f^2` (see [`RansacConfig::from_pixel_threshold`]).
    pub threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub threads: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-4,
            max_iterations: 1000,
            confidence: 0.999,
            seed: 0,
            threads: 0,
        }
    }
}

impl RansacConfig {
    /// Converts a threshold expressed on pixel-unit flows (px^2/s^2) for a
    /// camera with focal length `focal_px`.
    pub fn from_pixel_threshold(threshold_px: f64, focal_px: f64) -> Self {
        Self {
            threshold: threshold_px / (focal_px * focal_px),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidInput(format!(
                "RANSAC threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidInput(format!(
                "RANSAC confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelTag,
    /// Shared parameters for the global models; per-observation values
    /// (concatenated over `inliers`) for the per-pixel models.
    pub theta: Vec<f64>,
    pub inliers: Vec<usize>,
    /// RMS of the normal-flow residual over the inliers.
    pub rms: f64,
    pub cond: f64,
    pub iterations: usize,
}

/// Robust estimate of a model from normal-flow observations.
///
/// Global models run a seeded consensus search over minimal samples, then
/// refit on the consensus set. Per-pixel models (optical flow, depth) solve
/// each observation on its own; observations that fail are left out of
/// `inliers`.
pub fn ransac_estimate(obs: &[NormalFlowObs], kind: &ModelKind, cfg: &RansacConfig) -> Result<FitReport> {
    cfg.validate()?;
    let c = kind.minimal_sample();
    if obs.len() < c {
        return Err(Error::TooFewObservations {
            found: obs.len(),
            required: c,
        });
    }
    match kind {
        ModelKind::OpticalFlow { velocity } => per_pixel(obs, kind.tag(), |o| {
            solve_optical_flow(o, velocity).map(|e| (vec![e.u.x, e.u.y], e.cond))
        }),
        ModelKind::Depth { velocity } => per_pixel(obs, kind.tag(), |o| {
            solve_depth(o, velocity).map(|e| (vec![e.depth], 1.0))
        }),
        ModelKind::AngularVelocity => {
            let rows: Vec<[f64; 3]> = obs.iter().map(angular_velocity_row).collect();
            consensus(obs, ModelTag::AngularVelocity, &flatten(&rows), 3, SolveOptions::full_rank(3), cfg)
        }
        ModelKind::SixDof { depths } => {
            if depths.len() != obs.len() {
                return Err(Error::InvalidInput(format!(
                    "{} observations but {} depths",
                    obs.len(),
                    depths.len()
                )));
            }
            let rows = obs
                .iter()
                .zip(depths)
                .map(|(o, &z)| six_dof_row(o, z))
                .collect::<Result<Vec<_>>>()?;
            consensus(obs, ModelTag::SixDof, &flatten(&rows), 6, SolveOptions::full_rank(6), cfg)
        }
        ModelKind::DiffHomographyLinear => {
            let rows: Vec<[f64; 9]> = obs.iter().map(diff_homography_row).collect();
            consensus(
                obs,
                ModelTag::DiffHomographyLinear,
                &flatten(&rows),
                9,
                SolveOptions::minimum_norm(8),
                cfg,
            )
        }
    }
}

fn flatten<const N: usize>(rows: &[[f64; N]]) -> Vec<f64> {
    rows.iter().flat_map(|r| r.iter().copied()).collect()
}

fn per_pixel<F>(obs: &[NormalFlowObs], tag: ModelTag, solve: F) -> Result<FitReport>
where
    F: Fn(&NormalFlowObs) -> Result<(Vec<f64>, f64)>,
{
    let mut theta = Vec::new();
    let mut inliers = Vec::new();
    let mut cond: f64 = 1.0;
    for (i, o) in obs.iter().enumerate() {
        if let Ok((values, c)) = solve(o) {
            if values.iter().all(|v| v.is_finite()) {
                theta.extend(values);
                inliers.push(i);
                cond = cond.max(c);
            }
        }
    }
    if inliers.is_empty() {
        return Err(Error::NoConsensus {
            inliers: 0,
            required: 1,
        });
    }
    // Each per-pixel solve satisfies its own normal-flow equation exactly.
    Ok(FitReport {
        model: tag,
        theta,
        inliers,
        rms: 0.0,
        cond,
        iterations: obs.len(),
    })
}

struct Problem<'a> {
    rows: &'a [f64],
    rhs: Vec<f64>,
    cols: usize,
}

impl Problem<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.cols..(i + 1) * self.cols]
    }

    fn residual(&self, i: usize, theta: &[f64]) -> f64 {
        self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - self.rhs[i]
    }

    fn inliers(&self, theta: &[f64], threshold: f64) -> Vec<usize> {
        (0..self.rhs.len())
            .filter(|&i| self.residual(i, theta).abs() <= threshold)
            .collect()
    }

    fn subsystem(&self, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let a = DMatrix::from_fn(idx.len(), self.cols, |r, c| self.rows[idx[r] * self.cols + c]);
        let b = DVector::from_fn(idx.len(), |r, _| self.rhs[idx[r]]);
        (a, b)
    }
}

fn required_iterations(inlier_ratio: f64, sample: usize, confidence: f64) -> usize {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

fn hypothesis(problem: &Problem<'_>, c: usize, opts: SolveOptions, seed: u64, iter: usize) -> Option<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter as u64);
    let mut sample = index::sample(&mut rng, problem.rhs.len(), c).into_vec();
    sample.sort_unstable();
    let (a, b) = problem.subsystem(&sample);
    let sol = stack_and_solve(&a, &b, opts).ok()?;
    let theta: Vec<f64> = sol.theta.iter().copied().collect();
    Some((iter, theta))
}

fn consensus(
    obs: &[NormalFlowObs],
    tag: ModelTag,
    rows: &[f64],
    cols: usize,
    opts: SolveOptions,
    cfg: &RansacConfig,
) -> Result<FitReport> {
    let problem = Problem {
        rows,
        rhs: obs.iter().map(|o| o.mag2).collect(),
        cols,
    };
    let c = tag.minimal_sample();
    let total = obs.len();

    let run = || {
        let mut best: Option<(usize, usize, Vec<f64>)> = None;
        let mut budget = cfg.max_iterations;
        let mut done = 0;
        while done < budget {
            let end = (done + BATCH).min(budget);
            let scored: Vec<(usize, usize, Vec<f64>)> = (done..end)
                .into_par_iter()
                .filter_map(|it| hypothesis(&problem, c, opts, cfg.seed, it))
                .map(|(it, theta)| {
                    let count = (0..total)
                        .filter(|&i| problem.residual(i, &theta).abs() <= cfg.threshold)
                        .count();
                    (it, count, theta)
                })
                .collect();
            for (it, count, theta) in scored {
                let better = match &best {
                    None => true,
                    Some((bit, bcount, _)) => count > *bcount || (count == *bcount && it < *bit),
                };
                if better {
                    best = Some((it, count, theta));
                }
            }
            done = end;
            if let Some((_, count, _)) = &best {
                let need = required_iterations(*count as f64 / total as f64, c, cfg.confidence);
                budget = budget.min(need.max(done.min(budget)));
            }
        }
        (best, done)
    };

    let (best, iterations) = if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    };

    let (_, count, theta) = best.ok_or(Error::NoConsensus {
        inliers: 0,
        required: 2 * c,
    })?;
    if count < 2 * c {
        return Err(Error::NoConsensus {
            inliers: count,
            required: 2 * c,
        });
    }

    let mut inliers = problem.inliers(&theta, cfg.threshold);
    let mut fit = None;
    for _ in 0..REFIT_ROUNDS {
        let (a, b) = problem.subsystem(&inliers);
        let sol = match stack_and_solve(&a, &b, opts) {
            Ok(sol) => sol,
            Err(e) if fit.is_none() => return Err(e),
            Err(_) => break,
        };
        let theta: Vec<f64> = sol.theta.iter().copied().collect();
        let next = problem.inliers(&theta, cfg.threshold);
        if next.len() < 2 * c {
            break;
        }
        let stable = next == inliers;
        fit = Some((theta, sol.diagnostics.cond, next.clone()));
        inliers = next;
        if stable {
            break;
        }
    }
    let (theta, cond, inliers) = fit.ok_or(Error::NoConsensus {
        inliers: inliers.len(),
        required: 2 * c,
    })?;
    let rms = (inliers
        .iter()
        .map(|&i| problem.residual(i, &theta).powi(2))
        .sum::<f64>()
        / inliers.len() as f64)
        .sqrt();
    Ok(FitReport {
        model: tag,
        theta,
        inliers,
        rms,
        cond,
        iterations,
    })
}
