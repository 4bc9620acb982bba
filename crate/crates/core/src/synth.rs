//! Ground-truth simulator: scenes, motion profiles, exact motion fields,
//! sampled normal flows with noise, synthetic time surfaces and the
//! global-flow toy registration.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::TimeSurface;
use crate::geometry::{motion_field, CalibratedPoint, DiffHomography, FlowVector, Intrinsics, NormalFlowObs, Velocity};
use crate::solvers::{SolveOptions, StackedSystem};
use crate::spline::SplineTrajectory;

/// Normal-flow components smaller than this (calibrated units/s) are unobservable.
pub const UNOBSERVABLE_THRESHOLD: f64 = 1e-6;

/// Attempts per sample before a specification is declared inconsistent.
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneGeometry {
    /// Independent points with depths uniform in `[depth_min, depth_max]`, m.
    RandomPoints { depth_min: f64, depth_max: f64 },
    /// Plane `N^T X = d` with unit normal `N` and distance `d > 0`, m.
    Plane { normal: [f64; 3], distance: f64 },
    /// Two walls meeting on the optical axis at 2 m, each turned by `angle_deg`
    /// away from fronto-parallel; `x < 0` sees the left wall.
    TwoWalls { angle_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub geometry: SceneGeometry,
    /// Half-width of the sampled field of view in calibrated units.
    pub extent: f64,
}

const WALL_DEPTH: f64 = 2.0;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || !self.extent.is_finite() {
            return Err(Error::InvalidInput(format!("scene extent must be positive, got {}", self.extent)));
        }
        match self.geometry {
            SceneGeometry::RandomPoints { depth_min, depth_max } => {
                if !(depth_min > 0.0 && depth_max >= depth_min && depth_max.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "depth range [{depth_min}, {depth_max}] must be positive and ordered"
                    )));
                }
            }
            SceneGeometry::Plane { normal, distance } => {
                let n = Vector3::from(normal);
                if (n.norm() - 1.0).abs() > 1e-9 || !(distance > 0.0) {
                    return Err(Error::InvalidInput("plane needs a unit normal and positive distance".into()));
                }
                // All four frustum corners must see the plane in front of the camera.
                for (sx, sy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                    if n.dot(&Vector3::new(sx * self.extent, sy * self.extent, 1.0)) <= 0.0 {
                        return Err(Error::InvalidInput("plane is not in front of the camera across the extent".into()));
                    }
                }
            }
            SceneGeometry::TwoWalls { angle_deg } => {
                let a = angle_deg.to_radians();
                if !(0.0..90.0).contains(&angle_deg.abs()) || a.abs().tan() * self.extent >= 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "wall angle {angle_deg} deg leaves the walls behind the camera within the extent"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &CalibratedPoint) -> bool {
        x.x.abs() <= self.extent && x.y.abs() <= self.extent
    }

    /// Plane normal and distance at `x` for planar geometries.
    pub fn plane_at(&self, x: &CalibratedPoint) -> Option<(Vector3<f64>, f64)> {
        match self.geometry {
            SceneGeometry::RandomPoints { .. } => None,
            SceneGeometry::Plane { normal, distance } => Some((Vector3::from(normal), distance)),
            SceneGeometry::TwoWalls { angle_deg } => {
                let a = angle_deg.to_radians();
                let s = if x.x < 0.0 { a.sin() } else { -a.sin() };
                Some((Vector3::new(s, 0.0, a.cos()), WALL_DEPTH * a.cos()))
            }
        }
    }

    /// Depth along the ray through `x`; random scenes draw it from `rng`.
    pub fn depth_at<R: Rng>(&self, x: &CalibratedPoint, rng: &mut R) -> Result<f64> {
        if let SceneGeometry::RandomPoints { depth_min, depth_max } = self.geometry {
            return Ok(if depth_max > depth_min {
                rng.random_range(depth_min..=depth_max)
            } else {
                depth_min
            });
        }
        self.surface_depth(x)
    }

    /// Depth of a surface scene; random point clouds have no surface.
    pub fn surface_depth(&self, x: &CalibratedPoint) -> Result<f64> {
        let (n, d) = self
            .plane_at(x)
            .ok_or_else(|| Error::InvalidInput("random point scenes have no continuous surface".into()))?;
        let denom = n.dot(&x.homogeneous());
        if denom <= 0.0 {
            return Err(Error::DegenerateDepth(f64::INFINITY));
        }
        Ok(d / denom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MotionProfile {
    Constant { velocity: Velocity },
    Step { before: Velocity, after: Velocity, t_switch: f64 },
    /// Six-dimensional `(nu, omega)` or three-dimensional `omega` trajectory.
    Spline { trajectory: SplineTrajectory },
}

impl MotionProfile {
    pub fn velocity_at(&self, t: f64) -> Result<Velocity> {
        match self {
            MotionProfile::Constant { velocity } => Ok(*velocity),
            MotionProfile::Step { before, after, t_switch } => Ok(if t < *t_switch { *before } else { *after }),
            MotionProfile::Spline { trajectory } => {
                let v = trajectory.evaluate(t)?;
                match v.len() {
                    3 => Ok(Velocity::rotation(Vector3::from_column_slice(&v))),
                    6 => Ok(Velocity::from_slice(&v)),
                    d => Err(Error::InvalidInput(format!("motion spline of dimension {d}"))),
                }
            }
        }
    }

    pub fn constant(&self) -> Option<Velocity> {
        match self {
            MotionProfile::Constant { velocity } => Some(*velocity),
            _ => None,
        }
    }

    fn validate(&self, window: (f64, f64)) -> Result<()> {
        let finite = |v: &Velocity| v.to_array().iter().all(|x| x.is_finite());
        match self {
            MotionProfile::Constant { velocity } if !finite(velocity) => {
                Err(Error::InvalidInput("non-finite velocity".into()))
            }
            MotionProfile::Step { before, after, t_switch } if !finite(before) || !finite(after) || !t_switch.is_finite() => {
                Err(Error::InvalidInput("non-finite step profile".into()))
            }
            MotionProfile::Spline { trajectory } => {
                let (start, end) = trajectory.domain();
                if window.0 < start || window.1 >= end {
                    return Err(Error::InvalidInput(format!(
                        "motion spline domain [{start}, {end}) does not cover the window [{}, {}]",
                        window.0, window.1
                    )));
                }
                if !matches!(trajectory.dimension, 3 | 6) {
                    return Err(Error::InvalidInput("motion spline must have dimension 3 or 6".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian noise on each normal-flow component, px/s.
    pub sigma_px: f64,
    /// Probability that a sample is replaced by a random flow.
    pub outlier_fraction: f64,
    /// Outlier components are uniform in `[-m, m]`, calibrated units/s.
    pub outlier_magnitude: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_px: 0.0,
            outlier_fraction: 0.0,
            outlier_magnitude: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px >= 0.0 && self.sigma_px.is_finite()) {
            return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {}", self.sigma_px)));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidInput(format!(
                "outlier fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            )));
        }
        if !(self.outlier_magnitude > 0.0) {
            return Err(Error::InvalidInput("outlier magnitude must be positive".into()));
        }
        Ok(())
    }
}

/// Exact motion field `u = A nu / Z + B omega`.
pub fn ground_truth_flow(x: &CalibratedPoint, depth: f64, v: &Velocity) -> Result<FlowVector> {
    motion_field(x, depth, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledNormalFlow {
    pub n: Vector2<f64>,
    /// False when the flow is (nearly) parallel to the edge.
    pub observable: bool,
}

/// Projection of the full flow on a unit gradient direction: `n = (u . g) g`.
pub fn sample_normal_flow(u: &FlowVector, g: &Vector2<f64>) -> Result<SampledNormalFlow> {
    if (g.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("gradient direction has norm {}", g.norm())));
    }
    let s = u.dot(g);
    Ok(SampledNormalFlow {
        n: g * s,
        observable: s.abs() >= UNOBSERVABLE_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Camera velocity for constant profiles.
    pub velocity: Option<Velocity>,
    /// Row-major `H_d` for planar scenes under constant motion.
    pub diff_homography: Option<[f64; 9]>,
    /// Velocity at each sample time for time-varying profiles.
    pub sample_velocities: Option<Vec<Velocity>>,
    pub depths: Vec<f64>,
    /// Noise-free full flows, calibrated units/s.
    pub flows: Vec<[f64; 2]>,
    pub outliers: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<NormalFlowObs>,
    /// Pixel coordinates of each observation.
    pub pixels: Vec<[f64; 2]>,
    pub truth: GroundTruth,
}

struct Sample {
    obs: NormalFlowObs,
    pixel: [f64; 2],
    depth: f64,
    flow: FlowVector,
    velocity: Velocity,
    outlier: bool,
}

fn draw_sample(
    scene: &SceneSpec,
    motion: &MotionProfile,
    k: &Intrinsics,
    window: (f64, f64),
    noise: &NoiseSpec,
    index: u64,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(index);
    for _ in 0..MAX_DRAWS {
        let px = Vector2::new(
            rng.random_range(0.0..k.width as f64),
            rng.random_range(0.0..k.height as f64),
        );
        let t = if window.1 > window.0 {
            rng.random_range(window.0..window.1)
        } else {
            window.0
        };
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (x, _) = k.pixel_to_calibrated(px, Vector2::zeros())?;
        if !scene.contains(&x) {
            continue;
        }
        let Ok(depth) = scene.depth_at(&x, &mut rng) else {
            continue;
        };
        let velocity = motion.velocity_at(t)?;
        let flow = ground_truth_flow(&x, depth, &velocity)?;
        let g = Vector2::new(angle.cos(), angle.sin());
        let sampled = sample_normal_flow(&flow, &g)?;
        if !sampled.observable {
            continue;
        }
        let outlier = noise.outlier_fraction > 0.0 && rng.random_bool(noise.outlier_fraction);
        let n = if outlier {
            let m = noise.outlier_magnitude;
            Vector2::new(rng.random_range(-m..m), rng.random_range(-m..m))
        } else if noise.sigma_px > 0.0 {
            let ex: f64 = StandardNormal.sample(&mut rng);
            let ey: f64 = StandardNormal.sample(&mut rng);
            sampled.n + Vector2::new(ex * noise.sigma_px / k.fx, ey * noise.sigma_px / k.fy)
        } else {
            sampled.n
        };
        if n.norm() < UNOBSERVABLE_THRESHOLD {
            continue;
        }
        let obs = NormalFlowObs::new(x, n, t)?;
        return Ok(Sample {
            obs,
            pixel: [px.x, px.y],
            depth,
            flow,
            velocity,
            outlier,
        });
    }
    Err(Error::InvalidInput(format!(
        "no observable sample after {MAX_DRAWS} draws; check scene extent and motion"
    )))
}

/// Samples `count` normal-flow observations uniformly over the sensor and the
/// time window. Deterministic for a given seed, independent of thread count.
pub fn generate_dataset(
    scene: &SceneSpec,
    motion: &MotionProfile,
    k: &Intrinsics,
    count: usize,
    window: (f64, f64),
    noise: &NoiseSpec,
) -> Result<Dataset> {
    scene.validate()?;
    k.validate()?;
    noise.validate()?;
    if !(window.0.is_finite() && window.1.is_finite() && window.1 >= window.0) {
        return Err(Error::InvalidInput(format!("invalid time window [{}, {}]", window.0, window.1)));
    }
    motion.validate(window)?;
    let samples: Vec<Sample> = (0..count as u64)
        .into_par_iter()
        .map(|i| draw_sample(scene, motion, k, window, noise, i))
        .collect::<Result<_>>()?;

    let velocity = motion.constant();
    let diff_homography = match (velocity, scene.geometry) {
        (Some(v), SceneGeometry::Plane { normal, distance }) => Some(
            DiffHomography::from_motion(&v.omega, &(v.nu / distance), &Vector3::from(normal))
                .to_vec()
                .into(),
        ),
        _ => None,
    };
    Ok(Dataset {
        observations: samples.iter().map(|s| s.obs).collect(),
        pixels: samples.iter().map(|s| s.pixel).collect(),
        truth: GroundTruth {
            velocity,
            diff_homography,
            sample_velocities: velocity.is_none().then(|| samples.iter().map(|s| s.velocity).collect()),
            depths: samples.iter().map(|s| s.depth).collect(),
            flows: samples.iter().map(|s| [s.flow.x, s.flow.y]).collect(),
            outliers: samples.iter().map(|s| s.outlier).collect(),
        },
    })
}

/// A straight edge in the image that moves with the local motion field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// A point on the edge at the reference time, px.
    pub origin_px: [f64; 2],
    /// Direction of the edge normal (the gradient direction), rad.
    pub normal_angle: f64,
    /// Optional pixel box `[x_min, y_min, x_max, y_max]` the edge is confined to.
    pub region: Option<[f64; 4]>,
}

impl Edge {
    fn in_region(&self, px: &Vector2<f64>) -> bool {
        self.region
            .is_none_or(|[x0, y0, x1, y1]| px.x >= x0 && px.x <= x1 && px.y >= y0 && px.y <= y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub t_ref: f64,
    pub window: f64,
    /// Gaussian jitter on crossing times, s.
    pub timestamp_noise: f64,
    pub seed: u64,
}

/// Renders the latest crossing time of each edge at every pixel. Each edge
/// moves locally with the normal component of the exact motion field at the
/// pixel, so the crossing time is `t_ref + (p - p0) . g / s` with `s` the
/// normal speed in px/s.
pub fn synthesize_time_surface(
    scene: &SceneSpec,
    motion: &MotionProfile,
    k: &Intrinsics,
    edges: &[Edge],
    spec: &SurfaceSpec,
) -> Result<TimeSurface> {
    k.validate()?;
    if !(spec.window > 0.0) || !(spec.timestamp_noise >= 0.0) {
        return Err(Error::InvalidInput("surface window must be positive and noise non-negative".into()));
    }
    let velocity = motion.velocity_at(spec.t_ref)?;
    let mut ts = TimeSurface::new(k.width, k.height, spec.t_ref, spec.window);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for y in 0..k.height {
        for x in 0..k.width {
            let px = Vector2::new(x as f64, y as f64);
            let (xc, _) = k.pixel_to_calibrated(px, Vector2::zeros())?;
            let Ok(depth) = scene.surface_depth(&xc) else {
                continue;
            };
            let u = ground_truth_flow(&xc, depth, &velocity)?;
            let u_px = Vector2::new(k.fx * u.x, k.fy * u.y);
            let mut latest = f64::NEG_INFINITY;
            for e in edges.iter().filter(|e| e.in_region(&px)) {
                let g = Vector2::new(e.normal_angle.cos(), e.normal_angle.sin());
                let speed = u_px.dot(&g);
                if speed.abs() < UNOBSERVABLE_THRESHOLD {
                    continue;
                }
                let offset = (px - Vector2::from(e.origin_px)).dot(&g);
                let t = spec.t_ref + offset / speed;
                if t <= spec.t_ref && t > spec.t_ref - spec.window {
                    latest = latest.max(t);
                }
            }
            if latest.is_finite() {
                if spec.timestamp_noise > 0.0 {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    latest = (latest + e * spec.timestamp_noise).min(spec.t_ref);
                }
                ts.set(x, y, latest, 1);
            }
        }
    }
    Ok(ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyRegistration {
    /// Global flow from the stacked normal-flow constraints.
    pub constraint: Vector2<f64>,
    /// Mean of the normal flows, i.e. treating them as full flows.
    pub naive: Vector2<f64>,
}

/// A normal flow together with its unit gradient direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectedNormalFlow {
    pub g: Vector2<f64>,
    pub n: Vector2<f64>,
}

/// Estimates one global flow from normal flows both ways. The constraint rows
/// are `g^T theta = g^T n`, the normal-flow constraint divided by `|n|`, which
/// stays informative when a normal flow vanishes.
pub fn toy_registration(flows: &[DirectedNormalFlow]) -> Result<ToyRegistration> {
    if flows.is_empty() {
        return Err(Error::TooFewObservations { found: 0, required: 2 });
    }
    let mut sys = StackedSystem::with_capacity(2, flows.len());
    for f in flows {
        if (f.g.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("gradient direction has norm {}", f.g.norm())));
        }
        sys.push(&[f.g.x, f.g.y], f.g.dot(&f.n));
    }
    let theta = sys.solve(SolveOptions::full_rank(2))?.theta;
    let naive = flows.iter().fold(Vector2::zeros(), |acc, f| acc + f.n) / flows.len() as f64;
    Ok(ToyRegistration {
        constraint: Vector2::new(theta[0], theta[1]),
        naive,
    })
}

/// Normal flows of a global flow `u` at the given gradient directions (degrees).
pub fn toy_flows(u: &FlowVector, angles_deg: &[f64]) -> Result<Vec<DirectedNormalFlow>> {
    angles_deg
        .iter()
        .map(|a| {
            let r = a.to_radians();
            let g = Vector2::new(r.cos(), r.sin());
            Ok(DirectedNormalFlow {
                g,
                n: sample_normal_flow(u, &g)?.n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::matrix_c;
    use crate::normal_flow::{extract_normal_flows, fit_local_plane, ExtractionConfig};

    fn camera() -> Intrinsics {
        Intrinsics::new(200.0, 200.0, 120.0, 90.0, 240, 180).unwrap()
    }

    fn constant(nu: [f64; 3], omega: [f64; 3]) -> MotionProfile {
        MotionProfile::Constant {
            velocity: Velocity::new(Vector3::from(nu), Vector3::from(omega)),
        }
    }

    fn fronto(d: f64) -> SceneSpec {
        SceneSpec {
            geometry: SceneGeometry::Plane {
                normal: [0.0, 0.0, 1.0],
                distance: d,
            },
            extent: 1.0,
        }
    }

    #[test]
    fn flow_examples() {
        let o = CalibratedPoint::new(0.0, 0.0).unwrap();
        let v = Velocity::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
        assert_eq!(ground_truth_flow(&o, 1.0, &v).unwrap(), Vector2::new(-1.0, 0.0));
        let x = CalibratedPoint::new(1.0, 0.0).unwrap();
        let v = Velocity::rotation(Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(ground_truth_flow(&x, 1.0, &v).unwrap(), Vector2::new(0.0, -1.0));
        assert_eq!(ground_truth_flow(&x, 3.0, &Velocity::default()).unwrap(), Vector2::zeros());
        assert!(ground_truth_flow(&x, 0.0, &v).is_err());
    }

    #[test]
    fn normal_flow_sampling() {
        let u = Vector2::new(1.732, -1.0);
        let s = sample_normal_flow(&u, &Vector2::new(1.0, 0.0)).unwrap();
        assert_eq!(s.n, Vector2::new(1.732, 0.0));
        assert!(s.observable);
        let g = u / u.norm();
        assert!((sample_normal_flow(&u, &g).unwrap().n - u).norm() < 1e-15);
        let perp = Vector2::new(-g.y, g.x);
        let s = sample_normal_flow(&u, &perp).unwrap();
        assert!(s.n.norm() < 1e-15 && !s.observable);
        assert!(sample_normal_flow(&u, &Vector2::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let scene = SceneSpec {
            geometry: SceneGeometry::RandomPoints {
                depth_min: 1.0,
                depth_max: 5.0,
            },
            extent: 1.0,
        };
        let noise = NoiseSpec {
            sigma_px: 1.0,
            outlier_fraction: 0.2,
            seed: 42,
            ..Default::default()
        };
        let m = constant([0.1, 0.2, 0.3], [0.3, -0.2, 0.1]);
        let a = generate_dataset(&scene, &m, &camera(), 500, (0.0, 0.1), &noise).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_dataset(&scene, &m, &camera(), 500, (0.0, 0.1), &noise).unwrap());
        assert_eq!(a, b);
        let outliers = a.truth.outliers.iter().filter(|&&o| o).count();
        assert!((60..140).contains(&outliers));
    }

    #[test]
    fn noise_free_samples_satisfy_constraint() {
        let scene = SceneSpec {
            geometry: SceneGeometry::RandomPoints {
                depth_min: 1.0,
                depth_max: 5.0,
            },
            extent: 1.0,
        };
        let m = constant([0.4, -0.1, 0.5], [0.2, 0.1, -0.3]);
        let d = generate_dataset(&scene, &m, &camera(), 1000, (0.0, 0.1), &NoiseSpec::default()).unwrap();
        for (o, u) in d.observations.iter().zip(&d.truth.flows) {
            let u = Vector2::from(*u);
            assert!((o.n.dot(&u) - o.mag2).abs() <= 1e-12);
        }
    }

    #[test]
    fn planar_samples_satisfy_homography() {
        let n = Vector3::new(0.1, -0.2, 1.0).normalize();
        let scene = SceneSpec {
            geometry: SceneGeometry::Plane {
                normal: n.into(),
                distance: 2.5,
            },
            extent: 0.8,
        };
        let m = constant([0.3, 0.1, -0.4], [0.05, -0.1, 0.2]);
        let d = generate_dataset(&scene, &m, &camera(), 1000, (0.0, 0.1), &NoiseSpec::default()).unwrap();
        let h = nalgebra::SVector::<f64, 9>::from(d.truth.diff_homography.unwrap());
        for o in &d.observations {
            let r = (o.n.transpose() * matrix_c(&o.x) * h)[0];
            assert!((r - o.mag2).abs() <= 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        let bad = SceneSpec {
            geometry: SceneGeometry::Plane {
                normal: [1.0, 0.0, 0.0],
                distance: 1.0,
            },
            extent: 1.0,
        };
        assert!(bad.validate().is_err());
        let noise = NoiseSpec {
            outlier_fraction: 1.0,
            ..Default::default()
        };
        assert!(generate_dataset(&fronto(1.0), &constant([1.0, 0.0, 0.0], [0.0; 3]), &camera(), 10, (0.0, 1.0), &noise).is_err());
        let walls = SceneSpec {
            geometry: SceneGeometry::TwoWalls { angle_deg: 30.0 },
            extent: 0.6,
        };
        walls.validate().unwrap();
        let o = CalibratedPoint::new(0.0, 0.0).unwrap();
        assert!((walls.surface_depth(&o).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn translating_edge_gives_exact_ramp() {
        // 0.5 m/s sideways at 1 m with f = 200 px: 100 px/s everywhere.
        let k = camera();
        let motion = constant([-0.5, 0.0, 0.0], [0.0; 3]);
        let edge = Edge {
            origin_px: [120.0, 0.0],
            normal_angle: 0.0,
            region: None,
        };
        let spec = SurfaceSpec {
            t_ref: 1.0,
            window: 0.2,
            timestamp_noise: 0.0,
            seed: 0,
        };
        let ts = synthesize_time_surface(&fronto(1.0), &motion, &k, &[edge], &spec).unwrap();
        assert!(!ts.is_empty());
        let fit = fit_local_plane(&ts, 110, 90, &ExtractionConfig::default()).unwrap();
        assert!((fit.gradient - Vector2::new(0.01, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn stationary_edge_gives_nothing() {
        let k = camera();
        let edge = Edge {
            origin_px: [120.0, 0.0],
            normal_angle: 0.0,
            region: None,
        };
        let spec = SurfaceSpec {
            t_ref: 1.0,
            window: 0.2,
            timestamp_noise: 0.0,
            seed: 0,
        };
        let ts = synthesize_time_surface(&fronto(1.0), &constant([0.0; 3], [0.0; 3]), &k, &[edge], &spec).unwrap();
        assert!(ts.is_empty());
        let (flows, _) = extract_normal_flows(&ts, &k, &ExtractionConfig::default()).unwrap();
        assert!(flows.is_empty());
    }

    #[test]
    fn perpendicular_edges_give_two_populations() {
        let k = camera();
        // Diagonal translation: 100 px/s in x and 60 px/s in y.
        let motion = constant([-0.5, -0.3, 0.0], [0.0; 3]);
        let edges = [
            Edge {
                origin_px: [60.0, 0.0],
                normal_angle: 0.0,
                region: Some([0.0, 0.0, 119.0, 179.0]),
            },
            Edge {
                origin_px: [0.0, 90.0],
                normal_angle: std::f64::consts::FRAC_PI_2,
                region: Some([120.0, 0.0, 239.0, 179.0]),
            },
        ];
        let spec = SurfaceSpec {
            t_ref: 1.0,
            window: 0.1,
            timestamp_noise: 0.0,
            seed: 0,
        };
        let ts = synthesize_time_surface(&fronto(1.0), &motion, &k, &edges, &spec).unwrap();
        let (flows, _) = extract_normal_flows(&ts, &k, &ExtractionConfig::default()).unwrap();
        let left: Vec<_> = flows.iter().filter(|f| f.x_px < 112.0).collect();
        let right: Vec<_> = flows.iter().filter(|f| f.x_px > 127.0).collect();
        assert!(!left.is_empty() && !right.is_empty());
        for f in left {
            assert!((f.obs.n * 200.0 - Vector2::new(100.0, 0.0)).norm() < 1e-6);
        }
        for f in right {
            assert!((f.obs.n * 200.0 - Vector2::new(0.0, 60.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn toy_example() {
        let u = Vector2::new(1.732, -1.0);
        let obs = toy_flows(&u, &[0.0, 45.0, 90.0, 135.0]).unwrap();
        let r = toy_registration(&obs).unwrap();
        assert!((r.constraint - u).norm() < 1e-9);
        assert!((r.naive - u).norm() > 0.1);
        let single = toy_flows(&u, &[30.0, 30.0, 210.0]).unwrap();
        assert!(matches!(toy_registration(&single), Err(Error::RankDeficient { .. })));
        let zero = toy_flows(&Vector2::zeros(), &[0.0, 45.0, 90.0, 135.0]).unwrap();
        let r = toy_registration(&zero).unwrap();
        assert_eq!(r.constraint.norm(), 0.0);
        assert_eq!(r.naive, Vector2::zeros());
    }
}
