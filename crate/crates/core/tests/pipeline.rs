use evnf::bench::bench_camera;
use evnf::geometry::{DiffHomography, Velocity};
use evnf::homography::analyse_linear_homography;
use evnf::io::{read_flow_csv, records_to_observations, write_flow_csv, FlowRecord, Precision};
use evnf::solvers::{ransac_estimate, ModelKind, RansacConfig};
use evnf::spline::{fit, init_from_linear, SplineFitConfig};
use evnf::synth::{generate_dataset, Dataset, MotionProfile, NoiseSpec, SceneGeometry, SceneSpec};
use nalgebra::{Matrix3, Vector3};
use std::path::Path;

fn dataset(geometry: SceneGeometry, velocity: Velocity, count: usize, noise: NoiseSpec) -> Dataset {
    let scene = SceneSpec { geometry, extent: 1.0 };
    let motion = MotionProfile::Constant { velocity };
    generate_dataset(&scene, &motion, &bench_camera(), count, (0.0, 0.2), &noise).unwrap()
}

fn points() -> SceneGeometry {
    SceneGeometry::RandomPoints {
        depth_min: 1.0,
        depth_max: 4.0,
    }
}

#[test]
fn ransac_recovers_every_model_with_outliers() {
    let velocity = Velocity::new(Vector3::new(0.2, 0.1, -0.4), Vector3::new(-0.3, 0.5, 0.1));
    let noise = NoiseSpec {
        outlier_fraction: 0.2,
        seed: 3,
        ..Default::default()
    };
    let cfg = RansacConfig {
        seed: 3,
        ..Default::default()
    };

    let rot = dataset(points(), Velocity::rotation(velocity.omega), 300, noise);
    let r = ransac_estimate(&rot.observations, &ModelKind::AngularVelocity, &cfg).unwrap();
    assert!((Vector3::from_column_slice(&r.theta) - velocity.omega).norm() < 1e-9);
    assert!(r.inliers.iter().all(|&i| !rot.truth.outliers[i]));

    let full = dataset(points(), velocity, 300, noise);
    let kind = ModelKind::SixDof {
        depths: full.truth.depths.clone(),
    };
    let r = ransac_estimate(&full.observations, &kind, &cfg).unwrap();
    let err: f64 = r.theta.iter().zip(velocity.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");

    let normal = Vector3::new(0.1, 0.2, 1.0).normalize();
    let planar = dataset(
        SceneGeometry::Plane {
            normal: normal.into(),
            distance: 2.5,
        },
        velocity,
        400,
        noise,
    );
    let r = ransac_estimate(&planar.observations, &ModelKind::DiffHomographyLinear, &cfg).unwrap();
    let report = analyse_linear_homography(&DiffHomography::from_vec(&r.theta)).unwrap();
    let gt = Matrix3::from_row_slice(&planar.truth.diff_homography.unwrap());
    assert!((Matrix3::from_fn(|i, j| report.h_d[i][j]) - gt).norm() < 1e-8);
    let candidates = report.candidates.unwrap();
    let best = candidates
        .iter()
        .map(|c| (c.omega - velocity.omega).norm() + (c.normal - normal).norm() + (c.nu_over_d - velocity.nu / 2.5).norm())
        .fold(f64::INFINITY, f64::min);
    assert!(best < 1e-7, "{best}");
}

#[test]
fn per_pixel_models_skip_failures() {
    let velocity = Velocity::new(Vector3::new(0.3, 0.0, 0.2), Vector3::new(0.1, -0.1, 0.0));
    let data = dataset(points(), velocity, 200, NoiseSpec::default());
    let r = ransac_estimate(&data.observations, &ModelKind::Depth { velocity }, &RansacConfig::default()).unwrap();
    assert!(!r.inliers.is_empty());
    for (z, &i) in r.theta.iter().zip(&r.inliers) {
        let want = data.truth.depths[i];
        assert!((z - want).abs() <= 1e-8 * want);
    }
    let r = ransac_estimate(&data.observations, &ModelKind::OpticalFlow { velocity }, &RansacConfig::default()).unwrap();
    assert_eq!(r.theta.len(), 2 * r.inliers.len());
}

#[test]
fn csv_round_trip_preserves_solution() {
    let omega = Vector3::new(0.25, 0.5, -0.75);
    let data = dataset(points(), Velocity::rotation(omega), 100, NoiseSpec::default());
    let k = bench_camera();
    let records: Vec<FlowRecord> = data
        .observations
        .iter()
        .zip(&data.pixels)
        .zip(&data.truth.depths)
        .map(|((o, p), z)| FlowRecord {
            t: o.t,
            x_px: p[0],
            y_px: p[1],
            nx_cal: o.n.x,
            ny_cal: o.n.y,
            inliers: None,
            rms: None,
            depth: Some(*z),
        })
        .collect();
    let mut buf = Vec::new();
    write_flow_csv(&mut buf, &records, Precision::Full).unwrap();
    let back = read_flow_csv(&buf[..], Path::new("mem")).unwrap();
    let (obs, depths) = records_to_observations(&back, &k).unwrap();
    assert_eq!(depths.unwrap(), data.truth.depths);
    let r = ransac_estimate(&obs, &ModelKind::AngularVelocity, &RansacConfig::default()).unwrap();
    assert!((Vector3::from_column_slice(&r.theta) - omega).norm() < 1e-12);
}

#[test]
fn spline_on_constant_six_dof_motion() {
    let velocity = Velocity::new(Vector3::new(0.2, -0.1, 0.3), Vector3::new(0.1, 0.0, -0.2));
    let data = dataset(points(), velocity, 1500, NoiseSpec::default());
    let kind = ModelKind::SixDof {
        depths: data.truth.depths.clone(),
    };
    let (init, report) = init_from_linear(&data.observations, &kind, 0.05, &RansacConfig::default()).unwrap();
    assert!(report.filled_segments.is_empty());
    let (traj, fit_report) = fit(&data.observations, &kind, &init, &SplineFitConfig::default()).unwrap();
    assert!(fit_report.rms < 1e-10);
    for c in &traj.control_points {
        for (a, b) in c.iter().zip(velocity.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
