//! Sparse normal flow from a time surface.
//!
//! Around each fired pixel a plane `t = a dx + b dy + c` is fitted to the
//! neighbouring timestamps with a small RANSAC followed by a least-squares
//! refit. The gradient `g = (a, b)` (s/px) points along the normal flow and its
//! inverse length is the normal speed, so `n = g / |g|^2` (px/s).

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{PolarityFilter, TimeSurface};
use crate::geometry::{CalibratedPoint, Intrinsics, NormalFlowObs, DEFAULT_FOV_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Side of the square neighbourhood, px (odd).
    pub spatial_window: u32,
    /// Neighbours farther than this in time from the centre pixel are ignored, s.
    pub temporal_window: f64,
    /// Plane-fit inlier threshold on the timestamp residual, s.
    pub plane_ransac_thresh: f64,
    pub plane_iterations: usize,
    pub min_support: usize,
    /// Largest accepted normal speed, px/s.
    pub max_flow: f64,
    /// Smallest accepted gradient norm, s/px.
    pub min_gradient: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub threads: usize,
    pub polarity: PolarityFilter,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            spatial_window: 7,
            temporal_window: 0.04,
            plane_ransac_thresh: 1e-5,
            plane_iterations: 50,
            min_support: 10,
            max_flow: 1e4,
            min_gradient: 1e-4,
            seed: 0,
            threads: 0,
            polarity: PolarityFilter::Both,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.spatial_window >= 3
            && self.spatial_window % 2 == 1
            && self.temporal_window > 0.0
            && self.plane_ransac_thresh > 0.0
            && self.plane_iterations > 0
            && self.min_support >= 3
            && self.max_flow > 0.0
            && self.min_gradient > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid extraction config {self:?}")))
        }
    }

    fn gradient_floor(&self) -> f64 {
        self.min_gradient.max(1.0 / self.max_flow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    /// Time-surface gradient, s/px.
    pub gradient: Vector2<f64>,
    /// Fitted timestamp at the centre pixel, s.
    pub offset: f64,
    pub inlier_count: usize,
    pub rms: f64,
}

fn plane_through(p: [&Vector3<f64>; 3]) -> Option<Vector3<f64>> {
    let m = Matrix3::new(
        p[0].x, p[0].y, 1.0, //
        p[1].x, p[1].y, 1.0, //
        p[2].x, p[2].y, 1.0,
    );
    if m.determinant().abs() < 1e-9 {
        return None;
    }
    m.lu().solve(&Vector3::new(p[0].z, p[1].z, p[2].z))
}

fn plane_residual(plane: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    plane.x * p.x + plane.y * p.y + plane.z - p.z
}

/// Least-squares plane through points `(dx, dy, t)` with centred moments.
fn refit(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy, dt) = (p.x - mean.x, p.y - mean.y, p.z - mean.z);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxt += dx * dt;
        syt += dy * dt;
    }
    let det = sxx * syy - sxy * sxy;
    if det <= 1e-12 * (sxx + syy).powi(2) {
        return None;
    }
    let a = (syy * sxt - sxy * syt) / det;
    let b = (sxx * syt - sxy * sxt) / det;
    let c = mean.z - a * mean.x - b * mean.y;
    Some(Vector3::new(a, b, c))
}

fn collinear(points: &[Vector3<f64>]) -> bool {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p.x / n, y + p.y / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    sxx * syy - sxy * sxy <= 1e-9 * (sxx + syy).powi(2)
}

fn neighbourhood(ts: &TimeSurface, cx: u32, cy: u32, cfg: &ExtractionConfig) -> Option<Vec<Vector3<f64>>> {
    let t0 = ts.get(cx, cy)?;
    let half = (cfg.spatial_window / 2) as i64;
    let mut pts = Vec::with_capacity((cfg.spatial_window * cfg.spatial_window) as usize);
    for dy in -half..=half {
        for dx in -half..=half {
            let (x, y) = (cx as i64 + dx, cy as i64 + dy);
            if x < 0 || y < 0 {
                continue;
            }
            if let Some(t) = ts.get(x as u32, y as u32) {
                if (t - t0).abs() <= cfg.temporal_window {
                    pts.push(Vector3::new(dx as f64, dy as f64, t));
                }
            }
        }
    }
    Some(pts)
}

/// Robust plane fit around `(cx, cy)`.
pub fn fit_local_plane(ts: &TimeSurface, cx: u32, cy: u32, cfg: &ExtractionConfig) -> Result<PlaneFit> {
    let pixel_index = cy as u64 * ts.width() as u64 + cx as u64;
    let points = neighbourhood(ts, cx, cy, cfg).ok_or(Error::InsufficientSupport {
        found: 0,
        required: cfg.min_support,
    })?;
    if points.len() < 3 {
        return Err(Error::InsufficientSupport {
            found: points.len(),
            required: cfg.min_support,
        });
    }
    if collinear(&points) {
        return Err(Error::DegenerateConfiguration);
    }
    if points.len() < cfg.min_support {
        return Err(Error::InsufficientSupport {
            found: points.len(),
            required: cfg.min_support,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(pixel_index);
    let mut best: Option<(usize, Vector3<f64>)> = None;
    for _ in 0..cfg.plane_iterations {
        let s = index::sample(&mut rng, points.len(), 3);
        let Some(plane) = plane_through([&points[s.index(0)], &points[s.index(1)], &points[s.index(2)]]) else {
            continue;
        };
        let count = points
            .iter()
            .filter(|p| plane_residual(&plane, p).abs() <= cfg.plane_ransac_thresh)
            .count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, plane));
        }
    }
    let (count, plane) = best.ok_or(Error::DegenerateConfiguration)?;
    if count < cfg.min_support {
        return Err(Error::InsufficientSupport {
            found: count,
            required: cfg.min_support,
        });
    }
    let inliers: Vec<Vector3<f64>> = points
        .iter()
        .filter(|p| plane_residual(&plane, p).abs() <= cfg.plane_ransac_thresh)
        .copied()
        .collect();
    if collinear(&inliers) {
        return Err(Error::DegenerateConfiguration);
    }
    let fitted = refit(&inliers).ok_or(Error::DegenerateConfiguration)?;
    let rms = (inliers
        .iter()
        .map(|p| plane_residual(&fitted, p).powi(2))
        .sum::<f64>()
        / inliers.len() as f64)
        .sqrt();
    Ok(PlaneFit {
        gradient: Vector2::new(fitted.x, fitted.y),
        offset: fitted.z,
        inlier_count: inliers.len(),
        rms,
    })
}

/// `n = g / |g|^2`; gradients flatter than the configured floor are rejected.
pub fn normal_flow_from_gradient(g: Vector2<f64>, cfg: &ExtractionConfig) -> Result<Vector2<f64>> {
    let norm = g.norm();
    if !norm.is_finite() || norm < cfg.gradient_floor() || norm == 0.0 {
        return Err(Error::BelowMinGradient { norm });
    }
    Ok(g / (norm * norm))
}

/// One extracted observation with its pixel-level provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub obs: NormalFlowObs,
    pub x_px: f64,
    pub y_px: f64,
    pub inliers: usize,
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub attempted: usize,
    pub emitted: usize,
    pub insufficient_support: usize,
    pub degenerate: usize,
    pub below_min_gradient: usize,
    pub out_of_bounds: usize,
}

impl ExtractionStats {
    fn record(&mut self, outcome: &Result<FlowSample>) {
        self.attempted += 1;
        match outcome {
            Ok(_) => self.emitted += 1,
            Err(Error::InsufficientSupport { .. }) => self.insufficient_support += 1,
            Err(Error::DegenerateConfiguration) => self.degenerate += 1,
            Err(Error::BelowMinGradient { .. }) => self.below_min_gradient += 1,
            Err(_) => self.out_of_bounds += 1,
        }
    }
}

fn extract_at(ts: &TimeSurface, k: &Intrinsics, x: u32, y: u32, t: f64, cfg: &ExtractionConfig) -> Result<FlowSample> {
    let fit = fit_local_plane(ts, x, y, cfg)?;
    normal_flow_from_gradient(fit.gradient, cfg)?;
    let px = Vector2::new(x as f64, y as f64);
    let (point, g_cal) = k.pixel_to_calibrated(px, fit.gradient)?;
    let point = CalibratedPoint::with_limit(point.x, point.y, DEFAULT_FOV_LIMIT)?;
    let n = g_cal / g_cal.norm_squared();
    let obs = NormalFlowObs::new(point, n, t)?;
    Ok(FlowSample {
        obs,
        x_px: px.x,
        y_px: px.y,
        inliers: fit.inlier_count,
        rms: fit.rms,
    })
}

/// Runs the plane fit at every fired pixel. Output is ordered by pixel index
/// regardless of the thread count.
pub fn extract_normal_flows(
    ts: &TimeSurface,
    k: &Intrinsics,
    cfg: &ExtractionConfig,
) -> Result<(Vec<FlowSample>, ExtractionStats)> {
    cfg.validate()?;
    k.validate()?;
    if ts.width() != k.width || ts.height() != k.height {
        return Err(Error::InvalidInput(format!(
            "surface is {}x{} but intrinsics describe {}x{}",
            ts.width(),
            ts.height(),
            k.width,
            k.height
        )));
    }
    let fired: Vec<(u32, u32, f64)> = ts.fired().collect();
    let work = || -> Vec<Result<FlowSample>> {
        fired
            .par_iter()
            .map(|&(x, y, t)| extract_at(ts, k, x, y, t, cfg))
            .collect()
    };
    let outcomes = if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(work)
    } else {
        work()
    };
    let mut stats = ExtractionStats::default();
    let mut samples = Vec::new();
    for outcome in outcomes {
        stats.record(&outcome);
        if let Ok(s) = outcome {
            samples.push(s);
        }
    }
    Ok((samples, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surface_from(f: impl Fn(u32, u32) -> Option<f64>, w: u32, h: u32) -> TimeSurface {
        let mut ts = TimeSurface::new(w, h, 10.0, 20.0);
        for y in 0..h {
            for x in 0..w {
                if let Some(t) = f(x, y) {
                    ts.set(x, y, t, 1);
                }
            }
        }
        ts
    }

    #[test]
    fn exact_plane_gradient() {
        let ts = surface_from(|x, _| Some(0.01 * x as f64 + 0.5), 15, 15);
        let fit = fit_local_plane(&ts, 7, 7, &ExtractionConfig::default()).unwrap();
        assert!((fit.gradient - Vector2::new(0.01, 0.0)).norm() <= 1e-12);
        assert_eq!(fit.inlier_count, 49);
        assert!(fit.rms <= 1e-12);
        assert!((fit.offset - 0.57).abs() <= 1e-12);
    }

    #[test]
    fn flat_surface_is_rejected_downstream() {
        let ts = surface_from(|_, _| Some(1.0), 9, 9);
        let cfg = ExtractionConfig::default();
        let fit = fit_local_plane(&ts, 4, 4, &cfg).unwrap();
        assert_eq!(fit.gradient, Vector2::zeros());
        assert!(matches!(
            normal_flow_from_gradient(fit.gradient, &cfg),
            Err(Error::BelowMinGradient { .. })
        ));
    }

    #[test]
    fn collinear_support_is_degenerate() {
        let ts = surface_from(|x, y| (y == 4 && (3..6).contains(&x)).then_some(0.001 * x as f64), 9, 9);
        assert!(matches!(
            fit_local_plane(&ts, 4, 4, &ExtractionConfig::default()),
            Err(Error::DegenerateConfiguration)
        ));
        let ts = surface_from(|x, y| (y == 4).then_some(0.001 * x as f64), 9, 9);
        assert!(matches!(
            fit_local_plane(&ts, 4, 4, &ExtractionConfig::default()),
            Err(Error::DegenerateConfiguration)
        ));
    }

    #[test]
    fn sparse_support_is_insufficient() {
        let ts = surface_from(|x, y| ((x + y) % 5 == 0).then_some(0.01 * x as f64), 9, 9);
        assert!(matches!(
            fit_local_plane(&ts, 4, 1, &ExtractionConfig::default()),
            Err(Error::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn outlier_timestamps_are_ignored() {
        let ts = surface_from(
            |x, y| Some(if (x * 7 + y * 3) % 11 == 0 { 5.0 } else { 0.02 * x as f64 - 0.01 * y as f64 }),
            15,
            15,
        );
        let fit = fit_local_plane(&ts, 7, 7, &ExtractionConfig::default()).unwrap();
        assert!((fit.gradient - Vector2::new(0.02, -0.01)).norm() <= 1e-12);
        assert!(fit.inlier_count < 49);
    }

    #[test]
    fn gradient_to_flow() {
        let cfg = ExtractionConfig::default();
        let n = normal_flow_from_gradient(Vector2::new(0.5, 0.0), &cfg).unwrap();
        assert!((n - Vector2::new(2.0, 0.0)).norm() < 1e-15);
        let n = normal_flow_from_gradient(Vector2::new(0.1, 0.1), &cfg).unwrap();
        assert!((n - Vector2::new(5.0, 5.0)).norm() < 1e-12);
        assert!(matches!(
            normal_flow_from_gradient(Vector2::zeros(), &cfg),
            Err(Error::BelowMinGradient { .. })
        ));
    }

    #[test]
    fn empty_surface() {
        let k = Intrinsics::new(100.0, 100.0, 10.0, 10.0, 20, 20).unwrap();
        let ts = TimeSurface::new(20, 20, 1.0, 0.04);
        let (s, stats) = extract_normal_flows(&ts, &k, &ExtractionConfig::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!(stats.attempted, 0);
    }

    #[test]
    fn output_independent_of_threads() {
        let k = Intrinsics::new(100.0, 100.0, 20.0, 20.0, 40, 40).unwrap();
        let ts = surface_from(
            |x, y| Some(0.9 + 0.002 * x as f64 + 0.001 * y as f64 + if (x * y) % 13 == 0 { 0.01 } else { 0.0 }),
            40,
            40,
        );
        let mut cfg = ExtractionConfig {
            temporal_window: 1.0,
            ..Default::default()
        };
        cfg.threads = 1;
        let (a, sa) = extract_normal_flows(&ts, &k, &cfg).unwrap();
        cfg.threads = 3;
        let (b, sb) = extract_normal_flows(&ts, &k, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(!a.is_empty());
    }
}
