//! `evnf` command-line interface.
//!
//! Exit codes: 0 success, 2 input or specification error, 3 solver
//! degeneracy, 4 internal numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::Vector3;
use serde::Serialize;
use sha2::{Digest, Sha256};

use evnf::bench::{noise_sweep, write_bench_csv, BenchConfig, DEFAULT_GRID};
use evnf::error::{Error, ErrorClass, Result};
use evnf::events::{build_time_surface_filtered, read_event_file, PolarityFilter, DEFAULT_TEMPORAL_WINDOW};
use evnf::geometry::{DiffHomography, Intrinsics, Velocity};
use evnf::homography::{analyse_linear_homography, HomographyReport};
use evnf::io::{
    read_flow_file, read_json, records_to_observations, write_atomic, write_flow_csv, write_json_atomic, FlowRecord,
    Precision,
};
use evnf::normal_flow::{extract_normal_flows, ExtractionConfig, ExtractionStats};
use evnf::solvers::{ransac_estimate, FitReport, ModelKind, ModelTag, RansacConfig};
use evnf::spline::{fit, init_from_linear, sample_trace, write_trace, SplineDocument, SplineFitConfig};
use evnf::synth::{generate_dataset, GroundTruth, MotionProfile, NoiseSpec, SceneGeometry, SceneSpec};

#[derive(Debug, Parser, Serialize)]
#[command(name = "evnf", version, about = "Motion and structure from event-camera normal flow")]
#[command(args_override_self = true)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "EVNF_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Extract normal flow from an event file.
    Extract(ExtractArgs),
    /// Estimate a model from a normal-flow CSV.
    Solve(SolveArgs),
    /// Fit a continuous-time B-spline model.
    FitSpline(FitSplineArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Sweep noise levels and report solver error statistics.
    BenchNoise(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Polarity {
    Both,
    Positive,
    Negative,
}

impl From<Polarity> for PolarityFilter {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Both => PolarityFilter::Both,
            Polarity::Positive => PolarityFilter::Positive,
            Polarity::Negative => PolarityFilter::Negative,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    /// Event file (`t x y p` per line, optionally gzip-compressed).
    #[arg(long)]
    events: PathBuf,
    /// Intrinsics JSON (`fx, fy, cx, cy, width, height`).
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Stats JSON; defaults to `<output>.stats.json`.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Surface reference time; defaults to the last event.
    #[arg(long)]
    t_ref: Option<f64>,
    #[arg(long, default_value_t = 7)]
    spatial_window: u32,
    #[arg(long, default_value_t = DEFAULT_TEMPORAL_WINDOW)]
    temporal_window: f64,
    #[arg(long, default_value_t = 1e-5)]
    plane_ransac_thresh: f64,
    #[arg(long, default_value_t = 50)]
    plane_iterations: usize,
    #[arg(long, default_value_t = 10)]
    min_support: usize,
    /// px/s
    #[arg(long, default_value_t = 1e4)]
    max_flow: f64,
    /// s/px
    #[arg(long, default_value_t = 1e-4)]
    min_gradient: f64,
    #[arg(long, value_enum, default_value_t = Polarity::Both)]
    polarity: Polarity,
}

#[derive(Debug, Args, Serialize)]
struct RansacArgs {
    /// Inlier threshold on the normal-flow residual, calibrated units^2/s^2.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.999)]
    confidence: f64,
}

impl RansacArgs {
    fn config(&self, seed: u64, threads: usize) -> RansacConfig {
        RansacConfig {
            threshold: self.threshold,
            max_iterations: self.max_iterations,
            confidence: self.confidence,
            seed,
            threads,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    flows: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    /// optical-flow, depth, angular-velocity, six-dof or diff-homography.
    #[arg(long)]
    kind: ModelTag,
    /// Velocity JSON (`nu`, `omega`), needed by optical-flow and depth.
    #[arg(long)]
    velocity: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    ransac: RansacArgs,
}

#[derive(Debug, Args, Serialize)]
struct FitSplineArgs {
    #[arg(long)]
    flows: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    /// angular-velocity or six-dof.
    #[arg(long)]
    kind: ModelTag,
    #[arg(long)]
    output: PathBuf,
    /// Sampled trace CSV; defaults to `<output>.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// s
    #[arg(long, default_value_t = 0.05)]
    knot_spacing: f64,
    /// Points in the sampled trace.
    #[arg(long, default_value_t = 200)]
    trace_samples: usize,
    #[arg(long, default_value_t = 10)]
    max_irls_rounds: usize,
    /// Plain least squares instead of Huber reweighting.
    #[arg(long)]
    no_robust: bool,
    #[command(flatten)]
    ransac: RansacArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SceneKind {
    RandomPoints,
    Plane,
    TwoWalls,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MotionKind {
    Constant,
    Step,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    output_dir: PathBuf,
    /// Intrinsics JSON; defaults to a 240x180 camera with f = 200 px.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SceneKind::RandomPoints)]
    scene: SceneKind,
    #[arg(long, default_value_t = 1.0)]
    depth_min: f64,
    #[arg(long, default_value_t = 5.0)]
    depth_max: f64,
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,1")]
    plane_normal: [f64; 3],
    #[arg(long, default_value_t = 2.0)]
    plane_distance: f64,
    #[arg(long, default_value_t = 20.0)]
    wall_angle: f64,
    /// Half-width of the sampled field of view, calibrated units.
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
    #[arg(long, value_enum, default_value_t = MotionKind::Constant)]
    motion: MotionKind,
    /// m/s
    #[arg(long, value_parser = parse_vec3, default_value = "0.3,-0.2,0.5")]
    nu: [f64; 3],
    /// rad/s
    #[arg(long, value_parser = parse_vec3, default_value = "0.4,-0.3,0.2")]
    omega: [f64; 3],
    #[arg(long, value_parser = parse_vec3)]
    nu_after: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3)]
    omega_after: Option<[f64; 3]>,
    #[arg(long)]
    t_switch: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    #[arg(long, default_value_t = 0.5)]
    t_end: f64,
    /// Normal-flow noise, px/s.
    #[arg(long, default_value_t = 0.0)]
    sigma_px: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    outlier_magnitude: f64,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    kind: ModelTag,
    /// Comma-separated noise levels in px, strictly increasing.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = DEFAULT_GRID.to_vec())]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    output: PathBuf,
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|e| format!("`{p}`: {e}"))?;
    }
    Ok(out)
}

/// Record that makes a run reproducible.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a Cli,
    outputs: Vec<PathBuf>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(path: &Path, cli: &Cli, command: &str, outputs: Vec<PathBuf>) -> Result<()> {
    let config = serde_json::to_string(cli).map_err(|e| Error::Numerical(format!("json: {e}")))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cli.seed,
        config_hash: hex(&Sha256::digest(config.as_bytes())),
        config: cli,
        outputs,
    };
    write_json_atomic(path, &manifest)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let k: Intrinsics = read_json(path)?;
    k.validate().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(k)
}

#[derive(Serialize)]
struct ExtractStatsDoc {
    events: usize,
    t_ref: f64,
    fired_pixels: usize,
    #[serde(flatten)]
    stats: ExtractionStats,
    wall_time_s: f64,
}

fn cmd_extract(cli: &Cli, a: &ExtractArgs) -> Result<()> {
    let start = Instant::now();
    let k = read_intrinsics(&a.intrinsics)?;
    let events = read_event_file(&a.events, k.width, k.height)?;
    let t_ref = a.t_ref.unwrap_or_else(|| events.last().map_or(0.0, |e| e.t));
    let cfg = ExtractionConfig {
        spatial_window: a.spatial_window,
        temporal_window: a.temporal_window,
        plane_ransac_thresh: a.plane_ransac_thresh,
        plane_iterations: a.plane_iterations,
        min_support: a.min_support,
        max_flow: a.max_flow,
        min_gradient: a.min_gradient,
        seed: cli.seed,
        threads: cli.threads,
        polarity: a.polarity.into(),
    };
    let ts = build_time_surface_filtered(&events, k.width, k.height, t_ref, a.temporal_window, cfg.polarity);
    let (samples, stats) = extract_normal_flows(&ts, &k, &cfg)?;
    let records: Vec<FlowRecord> = samples.iter().map(FlowRecord::from).collect();
    write_atomic(&a.output, |w| write_flow_csv(w, &records, Precision::Significant9))?;
    let stats_path = a.stats.clone().unwrap_or_else(|| with_suffix(&a.output, ".stats.json"));
    let doc = ExtractStatsDoc {
        events: events.len(),
        t_ref,
        fired_pixels: ts.fired_count(),
        stats,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json_atomic(&stats_path, &doc)?;
    info!("extracted {} normal flows from {} events", records.len(), events.len());
    write_manifest(
        &with_suffix(&a.output, ".manifest.json"),
        cli,
        "extract",
        vec![a.output.clone(), stats_path],
    )
}

fn build_kind(tag: ModelTag, depths: Option<Vec<f64>>, velocity: Option<&Path>) -> Result<ModelKind> {
    let velocity = |what: &str| -> Result<Velocity> {
        let path = velocity.ok_or_else(|| Error::InvalidInput(format!("{what} needs --velocity")))?;
        read_json(path)
    };
    Ok(match tag {
        ModelTag::OpticalFlow => ModelKind::OpticalFlow {
            velocity: velocity("optical-flow")?,
        },
        ModelTag::Depth => ModelKind::Depth {
            velocity: velocity("depth")?,
        },
        ModelTag::AngularVelocity => ModelKind::AngularVelocity,
        ModelTag::SixDof => ModelKind::SixDof {
            depths: depths.ok_or_else(|| {
                Error::InvalidInput("missing depth: six-dof needs a `depth` column in the flow CSV".into())
            })?,
        },
        ModelTag::DiffHomographyLinear => ModelKind::DiffHomographyLinear,
    })
}

#[derive(Serialize)]
struct SolveDoc {
    #[serde(flatten)]
    fit: FitReport,
    inlier_count: usize,
    observations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    homography: Option<HomographyReport>,
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<()> {
    let k = read_intrinsics(&a.intrinsics)?;
    let records = read_flow_file(&a.flows)?;
    let (obs, depths) = records_to_observations(&records, &k)?;
    let kind = build_kind(a.kind, depths, a.velocity.as_deref())?;
    let fit = ransac_estimate(&obs, &kind, &a.ransac.config(cli.seed, cli.threads))?;
    let homography = match a.kind {
        ModelTag::DiffHomographyLinear => Some(analyse_linear_homography(&DiffHomography::from_vec(&fit.theta))?),
        _ => None,
    };
    let doc = SolveDoc {
        inlier_count: fit.inliers.len(),
        observations: obs.len(),
        fit,
        homography,
    };
    write_json_atomic(&a.output, &doc)?;
    write_manifest(&with_suffix(&a.output, ".manifest.json"), cli, "solve", vec![a.output.clone()])
}

fn cmd_fit_spline(cli: &Cli, a: &FitSplineArgs) -> Result<()> {
    if !matches!(a.kind, ModelTag::AngularVelocity | ModelTag::SixDof) {
        return Err(Error::InvalidInput(format!(
            "fit-spline supports angular-velocity and six-dof, not {}",
            a.kind
        )));
    }
    if !(a.knot_spacing > 0.0) {
        return Err(Error::InvalidInput("knot spacing must be positive".into()));
    }
    let k = read_intrinsics(&a.intrinsics)?;
    let records = read_flow_file(&a.flows)?;
    let (obs, depths) = records_to_observations(&records, &k)?;
    let kind = build_kind(a.kind, depths, None)?;
    let (t_min, t_max) = obs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.t), hi.max(o.t)));
    let span = if obs.is_empty() { 0.0 } else { t_max - t_min };
    if span < 4.0 * a.knot_spacing {
        // Shorter recordings cannot support a cubic spline on this knot grid.
        let control_points = (span / a.knot_spacing).floor() as usize + 4;
        return Err(Error::UnderDetermined {
            observations: obs.len(),
            unknowns: control_points * a.kind.dimension(),
        });
    }
    let ransac = a.ransac.config(cli.seed, cli.threads);
    let (init, init_report) = init_from_linear(&obs, &kind, a.knot_spacing, &ransac)?;
    let cfg = SplineFitConfig {
        knot_spacing: a.knot_spacing,
        robust: !a.no_robust,
        max_irls_rounds: a.max_irls_rounds,
        ..Default::default()
    };
    let (traj, report) = fit(&obs, &kind, &init, &cfg)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| with_suffix(&a.output, ".trace.csv"));
    let trace = sample_trace(&traj, a.trace_samples);
    write_atomic(&trace_path, |w| {
        write_trace(w, a.kind, &trace).map_err(|e| Error::io(&trace_path, e))
    })?;
    write_json_atomic(&a.output, &SplineDocument::new(a.kind, &traj, init_report, report))?;
    write_manifest(
        &with_suffix(&a.output, ".manifest.json"),
        cli,
        "fit-spline",
        vec![a.output.clone(), trace_path],
    )
}

#[derive(Serialize)]
struct GroundTruthDoc<'a> {
    scene: SceneSpec,
    motion: &'a MotionProfile,
    noise: NoiseSpec,
    intrinsics: Intrinsics,
    window: [f64; 2],
    #[serde(flatten)]
    truth: &'a GroundTruth,
}

fn default_camera() -> Intrinsics {
    evnf::bench::bench_camera()
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let k = match &a.intrinsics {
        Some(p) => read_intrinsics(p)?,
        None => default_camera(),
    };
    let geometry = match a.scene {
        SceneKind::RandomPoints => SceneGeometry::RandomPoints {
            depth_min: a.depth_min,
            depth_max: a.depth_max,
        },
        SceneKind::Plane => {
            let n = Vector3::from(a.plane_normal);
            let n = n
                .try_normalize(1e-12)
                .ok_or_else(|| Error::InvalidInput("plane normal must be nonzero".into()))?;
            SceneGeometry::Plane {
                normal: n.into(),
                distance: a.plane_distance,
            }
        }
        SceneKind::TwoWalls => SceneGeometry::TwoWalls {
            angle_deg: a.wall_angle,
        },
    };
    let scene = SceneSpec {
        geometry,
        extent: a.extent,
    };
    let before = Velocity::new(Vector3::from(a.nu), Vector3::from(a.omega));
    let motion = match a.motion {
        MotionKind::Constant => MotionProfile::Constant { velocity: before },
        MotionKind::Step => MotionProfile::Step {
            before,
            after: Velocity::new(
                Vector3::from(a.nu_after.unwrap_or(a.nu)),
                Vector3::from(a.omega_after.unwrap_or(a.omega)),
            ),
            t_switch: a.t_switch.unwrap_or(0.5 * (a.t_start + a.t_end)),
        },
    };
    let noise = NoiseSpec {
        sigma_px: a.sigma_px,
        outlier_fraction: a.outlier_fraction,
        outlier_magnitude: a.outlier_magnitude,
        seed: cli.seed,
    };
    let data = generate_dataset(&scene, &motion, &k, a.count, (a.t_start, a.t_end), &noise)?;

    std::fs::create_dir_all(&a.output_dir).map_err(|e| Error::io(&a.output_dir, e))?;
    let obs_path = a.output_dir.join("observations.csv");
    let records: Vec<FlowRecord> = data
        .observations
        .iter()
        .zip(&data.pixels)
        .zip(&data.truth.depths)
        .map(|((o, px), z)| FlowRecord {
            t: o.t,
            x_px: px[0],
            y_px: px[1],
            nx_cal: o.n.x,
            ny_cal: o.n.y,
            inliers: None,
            rms: None,
            depth: Some(*z),
        })
        .collect();
    write_atomic(&obs_path, |w| write_flow_csv(w, &records, Precision::Full))?;
    let truth_path = a.output_dir.join("ground_truth.json");
    write_json_atomic(
        &truth_path,
        &GroundTruthDoc {
            scene,
            motion: &motion,
            noise,
            intrinsics: k,
            window: [a.t_start, a.t_end],
            truth: &data.truth,
        },
    )?;
    let k_path = a.output_dir.join("intrinsics.json");
    write_json_atomic(&k_path, &k)?;
    let mut outputs = vec![obs_path, truth_path, k_path];
    if let Some(v) = data.truth.velocity {
        let v_path = a.output_dir.join("velocity.json");
        write_json_atomic(&v_path, &v)?;
        outputs.push(v_path);
    }
    write_manifest(&a.output_dir.join("manifest.json"), cli, "simulate", outputs)
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        kind: a.kind,
        grid: a.grid.clone(),
        trials: a.trials,
        samples: a.samples,
        seed: cli.seed,
    };
    let run = || noise_sweep(&cfg);
    let rows = if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };
    write_atomic(&a.output, |w| {
        write_bench_csv(w, a.kind, &rows).map_err(|e| Error::io(&a.output, e))
    })?;
    write_manifest(&with_suffix(&a.output, ".manifest.json"), cli, "bench-noise", vec![a.output.clone()])
}

const SUBCOMMANDS: [&str; 5] = ["extract", "solve", "fit-spline", "simulate", "bench-noise"];

/// Splices `key = value` lines from `--config FILE` into the argument list
/// right after the subcommand, so that flags given on the command line
/// (which come later) take precedence.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let mut config = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" && i + 1 < args.len() {
            config = Some(PathBuf::from(args.remove(i + 1)));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.clone(),
            message: format!("line {}: expected `key = value`", n + 1),
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.to_string());
            }
        }
    }
    let pos = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(args.len(), |p| p + 1);
    args.splice(pos..pos, flags);
    Ok(args)
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Degenerate => 3,
        ErrorClass::Numerical => 4,
    }
}

fn report(e: &Error) -> ExitCode {
    let line = serde_json::json!({ "status": "error", "reason": e.reason(), "message": e.to_string() });
    let _ = writeln!(std::io::stderr(), "evnf: error: {e}\n{line}");
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Extract(a) => cmd_extract(&cli, a),
        Command::Solve(a) => cmd_solve(&cli, a),
        Command::FitSpline(a) => cmd_fit_spline(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::BenchNoise(a) => cmd_bench(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
