//! Continuous-time model parameters as a uniform cubic B-spline.
//!
//! `theta(t) = sum_i B_i(u(t)) c_i` with four active control points per knot
//! interval. Because every normal-flow residual is linear in `theta`, it is
//! also linear in the control points, so the fit is a (robustly reweighted)
//! linear least-squares problem over all asynchronous observations.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NormalFlowObs;
use crate::solvers::{
    angular_velocity_row, ransac_estimate, six_dof_row, stack_and_solve, ModelKind, ModelTag, RansacConfig,
    SolveOptions,
};

/// Default knot spacing, s.
pub const DEFAULT_KNOT_SPACING: f64 = 0.05;
/// Lower bound of the robust scale relative to its first estimate; keeps the
/// reweighting well conditioned once most residuals vanish.
const SCALE_FLOOR: f64 = 1e-6;
/// Relative objective decrease below which reweighting stops.
const IRLS_RTOL: f64 = 1e-9;

/// Uniform cubic B-spline weights for the four active control points at
/// normalized local time `u`.
pub fn basis_weights(u: f64) -> Result<[f64; 4]> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidInput(format!("local spline time {u} outside [0, 1)")));
    }
    Ok(weights_unchecked(u))
}

fn weights_unchecked(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTrajectory {
    /// Knot origin, s.
    pub t0: f64,
    /// Knot spacing, s.
    pub dt: f64,
    pub dimension: usize,
    pub control_points: Vec<Vec<f64>>,
}

impl SplineTrajectory {
    pub fn new(t0: f64, dt: f64, control_points: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidInput(format!("invalid knots t0={t0}, dt={dt}")));
        }
        if control_points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "a cubic spline needs at least 4 control points, got {}",
                control_points.len()
            )));
        }
        let dimension = control_points[0].len();
        if dimension == 0 || control_points.iter().any(|c| c.len() != dimension) {
            return Err(Error::InvalidInput("control points must share a nonzero dimension".into()));
        }
        Ok(Self {
            t0,
            dt,
            dimension,
            control_points,
        })
    }

    /// Smallest trajectory whose domain contains `[start, end]`, with every
    /// control point set to `fill`.
    pub fn covering(start: f64, end: f64, dt: f64, fill: &[f64]) -> Result<Self> {
        if !(end >= start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidInput(format!("invalid window [{start}, {end}]")));
        }
        let n = ((end - start) / dt).floor() as usize + 4;
        let mut t0 = start - dt;
        // Round-off must not push the domain start past `start`.
        while t0 + dt > start {
            t0 = t0.next_down();
        }
        let traj = Self::new(t0, dt, vec![fill.to_vec(); n])?;
        debug_assert!(traj.domain().1 > end);
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.control_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_points.is_empty()
    }

    /// Number of knot intervals with full support.
    pub fn segment_count(&self) -> usize {
        self.len() - 3
    }

    /// Evaluation domain `[t0 + dt, t0 + (n - 2) dt)`.
    pub fn domain(&self) -> (f64, f64) {
        (self.t0 + self.dt, self.t0 + (self.len() as f64 - 2.0) * self.dt)
    }

    /// Knot interval index (first active control point is `seg - 1`) and local time.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (start, end) = self.domain();
        if !(t >= start && t < end) {
            return Err(Error::OutOfDomain { t, start, end });
        }
        let s = (t - self.t0) / self.dt;
        let max_seg = self.len() - 3;
        let seg = (s.floor() as usize).clamp(1, max_seg);
        let u = (s - seg as f64).clamp(0.0, 1.0 - f64::EPSILON);
        Ok((seg, u))
    }

    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let (seg, u) = self.locate(t)?;
        let w = weights_unchecked(u);
        let mut out = vec![0.0; self.dimension];
        for (i, wi) in w.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(&self.control_points[seg - 1 + i]) {
                *o += wi * c;
            }
        }
        Ok(out)
    }

    /// Knot times `t0 + i dt` for every control point.
    pub fn knots(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.t0 + i as f64 * self.dt).collect()
    }

    fn with_flat(&self, theta: &DVector<f64>) -> Self {
        let control_points = theta
            .as_slice()
            .chunks(self.dimension)
            .map(|c| c.to_vec())
            .collect();
        Self {
            control_points,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineFitConfig {
    /// Knot spacing used by [`init_from_linear`], s.
    pub knot_spacing: f64,
    /// Huber reweighting; disabled gives plain least squares.
    pub robust: bool,
    pub max_irls_rounds: usize,
    /// Weight of the second-difference rows tying control points of empty
    /// knot intervals to their neighbours.
    pub starved_weight: f64,
}

impl Default for SplineFitConfig {
    fn default() -> Self {
        Self {
            knot_spacing: DEFAULT_KNOT_SPACING,
            robust: true,
            max_irls_rounds: 10,
            starved_weight: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFitReport {
    pub rms: f64,
    pub rounds: usize,
    /// Final Huber scale on the normal-flow magnitude error: 3x the median
    /// absolute error, re-estimated each round and never increased.
    pub huber_scale: Option<f64>,
    /// Robust objective after each round (plain sum of squares if not robust).
    pub objective: Vec<f64>,
    /// Observations per knot interval.
    pub segment_counts: Vec<usize>,
    /// Knot intervals without observations.
    pub starved_segments: Vec<usize>,
}

/// Per-observation model rows for the spline-capable kinds.
fn model_rows(obs: &[NormalFlowObs], kind: &ModelKind) -> Result<Vec<Vec<f64>>> {
    match kind {
        ModelKind::AngularVelocity => Ok(obs.par_iter().map(|o| angular_velocity_row(o).to_vec()).collect()),
        ModelKind::SixDof { depths } => {
            if depths.len() != obs.len() {
                return Err(Error::InvalidInput(format!(
                    "{} depths for {} observations",
                    depths.len(),
                    obs.len()
                )));
            }
            obs.par_iter()
                .zip(depths.par_iter())
                .map(|(o, &z)| six_dof_row(o, z).map(|r| r.to_vec()))
                .collect()
        }
        other => Err(Error::InvalidInput(format!(
            "continuous-time fitting supports angular-velocity and six-dof, not {}",
            other.tag()
        ))),
    }
}

fn obs_order(a: &NormalFlowObs, b: &NormalFlowObs) -> Ordering {
    a.t.total_cmp(&b.t)
        .then(a.x.y.total_cmp(&b.x.y))
        .then(a.x.x.total_cmp(&b.x.x))
        .then(a.n.x.total_cmp(&b.n.x))
        .then(a.n.y.total_cmp(&b.n.y))
}

fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Jointly fits the spline control points to all observations, starting from
/// (and on the knot grid of) `init`.
pub fn fit(
    obs: &[NormalFlowObs],
    kind: &ModelKind,
    init: &SplineTrajectory,
    cfg: &SplineFitConfig,
) -> Result<(SplineTrajectory, SplineFitReport)> {
    let rows = model_rows(obs, kind)?;
    let dim = kind.tag().dimension();
    if init.dimension != dim {
        return Err(Error::InvalidInput(format!(
            "initial trajectory has dimension {} but {} needs {dim}",
            init.dimension,
            kind.tag()
        )));
    }
    let unknowns = init.len() * dim;
    if obs.len() < unknowns {
        return Err(Error::UnderDetermined {
            observations: obs.len(),
            unknowns,
        });
    }

    // Fixed accumulation order makes the result independent of input order.
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&a, &b| {
        let by_row = rows[a]
            .iter()
            .zip(&rows[b])
            .fold(Ordering::Equal, |acc, (x, y)| acc.then(x.total_cmp(y)));
        obs_order(&obs[a], &obs[b]).then(by_row)
    });

    let mut segment_counts = vec![0usize; init.segment_count()];
    let mut design = DMatrix::<f64>::zeros(obs.len(), unknowns);
    let mut rhs = DVector::<f64>::zeros(obs.len());
    for (r, &k) in order.iter().enumerate() {
        let (seg, u) = init.locate(obs[k].t)?;
        segment_counts[seg - 1] += 1;
        let w = weights_unchecked(u);
        for (i, wi) in w.iter().enumerate() {
            let col = (seg - 1 + i) * dim;
            for (d, v) in rows[k].iter().enumerate() {
                design[(r, col + d)] = wi * v;
            }
        }
        rhs[r] = obs[k].mag2;
    }

    let starved_segments: Vec<usize> = segment_counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(s, _)| s + 1)
        .collect();
    // Second-difference rows centred on the interior control points of empty intervals.
    let mut reg_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut centres: Vec<usize> = starved_segments.iter().flat_map(|&s| [s, s + 1]).collect();
    centres.sort_unstable();
    centres.dedup();
    if !starved_segments.is_empty() {
        let scale = (design.norm() / (obs.len() as f64).sqrt()).max(1e-12);
        for &c in centres.iter().filter(|&&c| c >= 1 && c + 1 < init.len()) {
            for d in 0..dim {
                let w = cfg.starved_weight * scale;
                reg_rows.push(vec![
                    ((c - 1) * dim + d, w),
                    (c * dim + d, -2.0 * w),
                    ((c + 1) * dim + d, w),
                ]);
            }
        }
    }

    let solve_weighted = |weights: &[f64]| -> Result<DVector<f64>> {
        let m = obs.len() + reg_rows.len();
        let mut a = DMatrix::<f64>::zeros(m, unknowns);
        let mut b = DVector::<f64>::zeros(m);
        for r in 0..obs.len() {
            let s = weights[r].sqrt();
            for c in 0..unknowns {
                a[(r, c)] = design[(r, c)] * s;
            }
            b[r] = rhs[r] * s;
        }
        for (i, row) in reg_rows.iter().enumerate() {
            for &(c, v) in row {
                a[(obs.len() + i, c)] = v;
            }
        }
        Ok(stack_and_solve(&a, &b, SolveOptions::full_rank(unknowns))?.theta)
    };
    let residuals = |theta: &DVector<f64>| -> DVector<f64> { &design * theta - &rhs };

    let mut theta = solve_weighted(&vec![1.0; obs.len()])?;
    let mut res = residuals(&theta);
    let mut rounds = 1;
    let mut huber_scale = None;
    let mut objective = vec![res.norm_squared() * 0.5];

    if cfg.robust {
        // Robust weights act on the residual divided by |n|, i.e. the error of
        // the predicted normal-flow magnitude, so the scale is estimated on a
        // quantity with one unit across observations; the data term keeps the
        // |n|^2 weighting of the plain objective.
        let norms: Vec<f64> = rhs.iter().map(|m| m.sqrt().max(f64::MIN_POSITIVE)).collect();
        let geometric = |r: &DVector<f64>| -> Vec<f64> { r.iter().zip(&norms).map(|(r, n)| r / n).collect() };
        let scale_of = |g: &[f64]| 3.0 * median(g.iter().map(|r| r.abs()).collect());
        let robust_obj = |g: &[f64], delta: f64| g.iter().zip(&rhs).map(|(&x, m)| m * huber(x, delta)).sum::<f64>();
        let mut geo = geometric(&res);
        let mut delta = scale_of(&geo);
        if delta > 0.0 && delta.is_finite() {
            let floor = delta * SCALE_FLOOR;
            objective = vec![robust_obj(&geo, delta)];
            for _ in 0..cfg.max_irls_rounds {
                // The Huber loss is non-decreasing in its scale, so letting the
                // scale only shrink keeps the objective sequence monotone.
                let shrunk = scale_of(&geo).max(floor);
                if shrunk < delta {
                    delta = shrunk;
                    *objective.last_mut().expect("non-empty") = robust_obj(&geo, delta);
                }
                let weights: Vec<f64> = geo
                    .iter()
                    .map(|g| if g.abs() <= delta { 1.0 } else { delta / g.abs() })
                    .collect();
                let candidate = solve_weighted(&weights)?;
                let cand_res = residuals(&candidate);
                let cand_geo = geometric(&cand_res);
                let obj = robust_obj(&cand_geo, delta);
                let prev = *objective.last().expect("non-empty");
                rounds += 1;
                if obj > prev {
                    // Guard against round-off: keep the best iterate.
                    objective.push(prev);
                    break;
                }
                objective.push(obj);
                theta = candidate;
                res = cand_res;
                geo = cand_geo;
                if prev - obj <= IRLS_RTOL * prev.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            huber_scale = Some(delta);
        }
    }

    let rms = (res.norm_squared() / obs.len() as f64).sqrt();
    let traj = init.with_flat(&theta);
    Ok((
        traj,
        SplineFitReport {
            rms,
            rounds,
            huber_scale,
            objective,
            segment_counts,
            starved_segments,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    /// Per knot interval linear estimate (`None` where the solver failed).
    pub segment_estimates: Vec<Option<Vec<f64>>>,
    /// Knot intervals filled from their neighbours.
    pub filled_segments: Vec<usize>,
}

/// Per-interval RANSAC linear fits turned into an initial trajectory
/// covering all observation timestamps.
pub fn init_from_linear(
    obs: &[NormalFlowObs],
    kind: &ModelKind,
    knot_spacing: f64,
    ransac: &RansacConfig,
) -> Result<(SplineTrajectory, InitReport)> {
    let tag = kind.tag();
    if !matches!(tag, ModelTag::AngularVelocity | ModelTag::SixDof) {
        return Err(Error::InvalidInput(format!(
            "continuous-time fitting supports angular-velocity and six-dof, not {tag}"
        )));
    }
    if obs.is_empty() {
        return Err(Error::TooFewObservations {
            found: 0,
            required: tag.minimal_sample(),
        });
    }
    let depths = match kind {
        ModelKind::SixDof { depths } if depths.len() != obs.len() => {
            return Err(Error::InvalidInput(format!(
                "{} depths for {} observations",
                depths.len(),
                obs.len()
            )))
        }
        ModelKind::SixDof { depths } => Some(depths),
        _ => None,
    };
    let (t_min, t_max) = obs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.t), hi.max(o.t)));
    let dim = tag.dimension();
    let mut traj = SplineTrajectory::covering(t_min, t_max, knot_spacing, &vec![0.0; dim])?;
    let segments = traj.segment_count();

    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); segments];
    for (k, o) in obs.iter().enumerate() {
        let (seg, _) = traj.locate(o.t)?;
        buckets[seg - 1].push(k);
    }
    let mut first_error = None;
    let estimates: Vec<Option<Vec<f64>>> = buckets
        .iter()
        .map(|idx| {
            let sub: Vec<NormalFlowObs> = idx.iter().map(|&k| obs[k]).collect();
            let sub_kind = match depths {
                Some(d) => ModelKind::SixDof {
                    depths: idx.iter().map(|&k| d[k]).collect(),
                },
                None => ModelKind::AngularVelocity,
            };
            match ransac_estimate(&sub, &sub_kind, ransac) {
                Ok(r) => Some(r.theta),
                Err(e) => {
                    first_error.get_or_insert(e);
                    None
                }
            }
        })
        .collect();
    let known: Vec<usize> = (0..segments).filter(|&s| estimates[s].is_some()).collect();
    if known.is_empty() {
        return Err(first_error.unwrap_or(Error::TooFewObservations {
            found: obs.len(),
            required: tag.minimal_sample(),
        }));
    }

    // Fill failed intervals by linear interpolation over the interval index
    // (the average of both neighbours for an isolated gap).
    let mut filled_segments = Vec::new();
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(segments);
    for s in 0..segments {
        if let Some(e) = &estimates[s] {
            targets.push(e.clone());
            continue;
        }
        filled_segments.push(s + 1);
        let left = known.iter().rev().find(|&&k| k < s);
        let right = known.iter().find(|&&k| k > s);
        let v = match (left, right) {
            (Some(&l), Some(&r)) => {
                let a = (s - l) as f64 / (r - l) as f64;
                let (el, er) = (estimates[l].as_ref().unwrap(), estimates[r].as_ref().unwrap());
                el.iter().zip(er).map(|(x, y)| (1.0 - a) * x + a * y).collect()
            }
            (Some(&l), None) => estimates[l].clone().unwrap(),
            (None, Some(&r)) => estimates[r].clone().unwrap(),
            (None, None) => unreachable!("at least one interval is known"),
        };
        targets.push(v);
    }

    // Control points: spline passes near each interval estimate at the
    // interval midpoint, with light smoothing to pin the remaining freedom.
    let n = traj.len();
    const SECOND_DIFF: f64 = 1e-3;
    const FIRST_DIFF: f64 = 1e-6;
    let rows = segments + (n - 2) + (n - 1);
    let mut a = DMatrix::<f64>::zeros(rows, n);
    let w = weights_unchecked(0.5);
    for s in 0..segments {
        for (i, wi) in w.iter().enumerate() {
            a[(s, s + i)] = *wi;
        }
    }
    for i in 0..n - 2 {
        a[(segments + i, i)] = SECOND_DIFF;
        a[(segments + i, i + 1)] = -2.0 * SECOND_DIFF;
        a[(segments + i, i + 2)] = SECOND_DIFF;
    }
    for i in 0..n - 1 {
        a[(segments + n - 2 + i, i)] = -FIRST_DIFF;
        a[(segments + n - 2 + i, i + 1)] = FIRST_DIFF;
    }
    for d in 0..dim {
        let mut b = DVector::<f64>::zeros(rows);
        for s in 0..segments {
            b[s] = targets[s][d];
        }
        let sol = stack_and_solve(&a, &b, SolveOptions::full_rank(n))?;
        for (c, v) in traj.control_points.iter_mut().zip(sol.theta.iter()) {
            c[d] = *v;
        }
    }
    Ok((
        traj,
        InitReport {
            segment_estimates: estimates,
            filled_segments,
        },
    ))
}

/// Column names of the trace CSV for a spline-capable model.
pub fn trace_columns(tag: ModelTag) -> &'static [&'static str] {
    match tag {
        ModelTag::SixDof => &["vx", "vy", "vz", "wx", "wy", "wz"],
        _ => &["wx", "wy", "wz"],
    }
}

/// Samples `theta(t)` on `count` uniformly spaced times spanning the domain.
pub fn sample_trace(traj: &SplineTrajectory, count: usize) -> Vec<(f64, Vec<f64>)> {
    let (start, end) = traj.domain();
    let count = count.max(2);
    // The domain is half-open; stop a hair before its end.
    let last = end - (end - start) * 1e-9;
    (0..count)
        .map(|i| {
            let t = start + (last - start) * i as f64 / (count - 1) as f64;
            (t, traj.evaluate(t).expect("inside domain"))
        })
        .collect()
}

pub fn write_trace<W: Write>(mut w: W, tag: ModelTag, trace: &[(f64, Vec<f64>)]) -> std::io::Result<()> {
    writeln!(w, "t,{}", trace_columns(tag).join(","))?;
    for (t, v) in trace {
        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{t},{}", vals.join(","))?;
    }
    Ok(())
}

/// JSON document of a fitted trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineDocument {
    pub model: ModelTag,
    pub t0: f64,
    pub knot_spacing: f64,
    pub domain: [f64; 2],
    pub knots: Vec<f64>,
    pub control_points: Vec<Vec<f64>>,
    pub init: InitReport,
    pub report: SplineFitReport,
}

impl SplineDocument {
    pub fn new(tag: ModelTag, traj: &SplineTrajectory, init: InitReport, report: SplineFitReport) -> Self {
        let (start, end) = traj.domain();
        Self {
            model: tag,
            t0: traj.t0,
            knot_spacing: traj.dt,
            domain: [start, end],
            knots: traj.knots(),
            control_points: traj.control_points.clone(),
            init,
            report,
        }
    }
}
