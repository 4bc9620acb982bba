//! Monte-Carlo noise sweeps of the linear solvers.
//!
//! Each trial draws a fresh simulated dataset and measures the relative error
//! of the batch least-squares estimate. Trial `i` uses the same seed at every
//! noise level, so the levels differ only in the noise amplitude.

use std::io::Write;

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Velocity};
use crate::homography::recover_true_hd;
use crate::solvers::{solve_angular_velocity, solve_depth, solve_diff_homography, solve_optical_flow, solve_six_dof, ModelTag};
use crate::synth::{generate_dataset, Dataset, MotionProfile, NoiseSpec, SceneGeometry, SceneSpec};

/// Noise levels of the default sweep, px.
pub const DEFAULT_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub kind: ModelTag,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub samples: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(kind: ModelTag, seed: u64) -> Self {
        Self {
            kind,
            grid: DEFAULT_GRID.to_vec(),
            trials: DEFAULT_TRIALS,
            samples: DEFAULT_SAMPLES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidInput("noise grid is empty".into()));
        }
        if self.grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("noise levels must be finite and non-negative".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("noise grid must be strictly increasing".into()));
        }
        if self.trials == 0 || self.samples < self.kind.minimal_sample() {
            return Err(Error::InvalidInput(format!(
                "need at least one trial and {} samples",
                self.kind.minimal_sample()
            )));
        }
        Ok(())
    }
}

/// Camera used by the sweep.
pub fn bench_camera() -> Intrinsics {
    Intrinsics {
        fx: 200.0,
        fy: 200.0,
        cx: 120.0,
        cy: 90.0,
        width: 240,
        height: 180,
    }
}

/// Scene and motion used for a model: planar for the homography, a random
/// point cloud otherwise; rotation only for the angular-velocity model.
pub fn bench_scenario(kind: ModelTag) -> (SceneSpec, MotionProfile) {
    let omega = Vector3::new(0.4, -0.3, 0.2);
    // The angular-velocity model assumes a purely rotating camera.
    let velocity = match kind {
        ModelTag::AngularVelocity => Velocity::rotation(omega),
        _ => Velocity::new(Vector3::new(0.3, -0.2, 0.5), omega),
    };
    let geometry = match kind {
        ModelTag::DiffHomographyLinear => SceneGeometry::Plane {
            normal: Vector3::new(0.2, -0.1, 1.0).normalize().into(),
            distance: 2.0,
        },
        _ => SceneGeometry::RandomPoints {
            depth_min: 1.0,
            depth_max: 5.0,
        },
    };
    (
        SceneSpec { geometry, extent: 1.0 },
        MotionProfile::Constant { velocity },
    )
}

fn median_of(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.5))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Relative error of the batch linear estimate on one dataset. Per-pixel
/// models report the median over observations that the solver accepts.
pub fn trial_error(kind: ModelTag, data: &Dataset) -> Result<f64> {
    let truth = &data.truth;
    let velocity = truth
        .velocity
        .ok_or_else(|| Error::InvalidInput("noise sweeps need a constant motion profile".into()))?;
    let obs = &data.observations;
    match kind {
        ModelTag::AngularVelocity => {
            let w = solve_angular_velocity(obs)?.value;
            Ok((w - velocity.omega).norm() / velocity.omega.norm())
        }
        ModelTag::SixDof => {
            let v = solve_six_dof(obs, &truth.depths)?.value;
            let (est, gt) = (v.to_array(), velocity.to_array());
            let num: f64 = est.iter().zip(&gt).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = gt.iter().map(|b| b * b).sum();
            Ok((num / den).sqrt())
        }
        ModelTag::DiffHomographyLinear => {
            let h_gt = truth
                .diff_homography
                .ok_or_else(|| Error::InvalidInput("homography sweeps need a planar scene".into()))?;
            let h_gt = Matrix3::from_row_slice(&h_gt);
            let (h, _) = recover_true_hd(&solve_diff_homography(obs)?.value);
            Ok((h.0 - h_gt).norm() / h_gt.norm())
        }
        ModelTag::OpticalFlow => {
            let errs: Vec<f64> = obs
                .iter()
                .zip(&truth.flows)
                .filter_map(|(o, u)| {
                    let u = Vector2::from(*u);
                    solve_optical_flow(o, &velocity).ok().map(|e| (e.u - u).norm() / u.norm())
                })
                .collect();
            median_of(errs).ok_or(Error::SingularSystem)
        }
        ModelTag::Depth => {
            let errs: Vec<f64> = obs
                .iter()
                .zip(&truth.depths)
                .filter_map(|(o, z)| solve_depth(o, &velocity).ok().map(|e| (e.depth - z).abs() / z))
                .collect();
            median_of(errs).ok_or(Error::RotationExplainsFlow)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelResult {
    pub sigma_px: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub trials: usize,
    pub failures: usize,
}

impl NoiseLevelResult {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Runs the sweep; trials run in parallel with results in a fixed order.
pub fn noise_sweep(cfg: &BenchConfig) -> Result<Vec<NoiseLevelResult>> {
    cfg.validate()?;
    let k = bench_camera();
    let (scene, motion) = bench_scenario(cfg.kind);
    cfg.grid
        .iter()
        .map(|&sigma| {
            let outcomes: Vec<Result<f64>> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let noise = NoiseSpec {
                        sigma_px: sigma,
                        seed: cfg.seed.wrapping_add(trial),
                        ..Default::default()
                    };
                    let data = generate_dataset(&scene, &motion, &k, cfg.samples, (0.0, 0.01), &noise)?;
                    trial_error(cfg.kind, &data)
                })
                .collect();
            let mut errs = Vec::new();
            let mut failures = 0;
            for o in outcomes {
                match o {
                    Ok(e) if e.is_finite() => errs.push(e),
                    Ok(_) => failures += 1,
                    Err(e) if e.class() == crate::error::ErrorClass::Input => return Err(e),
                    Err(_) => failures += 1,
                }
            }
            errs.sort_by(f64::total_cmp);
            let (median, q1, q3) = if errs.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    quantile_sorted(&errs, 0.5),
                    quantile_sorted(&errs, 0.25),
                    quantile_sorted(&errs, 0.75),
                )
            };
            Ok(NoiseLevelResult {
                sigma_px: sigma,
                median,
                q1,
                q3,
                trials: errs.len(),
                failures,
            })
        })
        .collect()
}

pub fn write_bench_csv<W: Write>(mut w: W, kind: ModelTag, rows: &[NoiseLevelResult]) -> std::io::Result<()> {
    writeln!(w, "model,sigma_px,median_rel_error,q1,q3,iqr,trials,failures")?;
    for r in rows {
        writeln!(
            w,
            "{kind},{},{},{},{},{},{},{}",
            r.sigma_px,
            r.median,
            r.q1,
            r.q3,
            r.iqr(),
            r.trials,
            r.failures
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let mut cfg = BenchConfig::new(ModelTag::AngularVelocity, 1);
        cfg.grid.clear();
        assert!(cfg.validate().is_err());
        cfg.grid = vec![1.0, 1.0];
        assert!(cfg.validate().is_err());
        cfg.grid = vec![0.1, 1.0];
        cfg.validate().unwrap();
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
    }

    #[test]
    fn small_sweep_is_reproducible_and_monotone() {
        let cfg = BenchConfig {
            trials: 3,
            samples: 300,
            ..BenchConfig::new(ModelTag::AngularVelocity, 9)
        };
        let a = noise_sweep(&cfg).unwrap();
        let b = noise_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        for w in a.windows(2) {
            assert!(w[1].median >= w[0].median);
        }
    }

    #[test]
    fn noise_free_trials_are_exact() {
        let k = bench_camera();
        for kind in ModelTag::ALL {
            let (scene, motion) = bench_scenario(kind);
            let data = generate_dataset(&scene, &motion, &k, 200, (0.0, 0.01), &NoiseSpec::default()).unwrap();
            let e = trial_error(kind, &data).unwrap();
            assert!(e <= 1e-8, "{kind}: {e}");
        }
    }
}
