use std::ffi::{CStr, CString};
use std::ptr;

use evnf_ffi::*;

fn camera() -> EvnfIntrinsics {
    EvnfIntrinsics {
        fx: 200.0,
        fy: 200.0,
        cx: 120.0,
        cy: 90.0,
        width: 240,
        height: 180,
    }
}

fn last_error() -> String {
    let p = evnf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Normal flows of a pure rotation at a grid of points and gradient angles.
fn rotation_observations(omega: [f64; 3]) -> Vec<EvnfObservation> {
    let mut out = Vec::new();
    for i in 0..60 {
        let x = -0.5 + (i % 10) as f64 * 0.1;
        let y = -0.4 + (i / 10) as f64 * 0.15;
        let u = [
            x * y * omega[0] - (1.0 + x * x) * omega[1] + y * omega[2],
            (1.0 + y * y) * omega[0] - x * y * omega[1] - x * omega[2],
        ];
        let a = i as f64 * 0.7;
        let g = [a.cos(), a.sin()];
        let s = u[0] * g[0] + u[1] * g[1];
        out.push(EvnfObservation {
            x,
            y,
            nx: s * g[0],
            ny: s * g[1],
            t: i as f64 * 1e-3,
        });
    }
    out
}

#[test]
fn solve_angular_velocity_through_handles() {
    let omega = [0.3, -0.2, 0.5];
    let items = rotation_observations(omega);
    let mut obs = ptr::null_mut();
    unsafe {
        assert_eq!(evnf_observations_new(items.as_ptr(), items.len(), &mut obs), EvnfStatus::Ok);
        let mut len = 0;
        assert_eq!(evnf_observations_len(obs, &mut len), EvnfStatus::Ok);
        assert_eq!(len, items.len());

        let cfg = evnf_ransac_config_default();
        let mut fit = ptr::null_mut();
        let status = evnf_solve(obs, EvnfModelKind::AngularVelocity as i32, ptr::null(), &cfg, &mut fit);
        assert_eq!(status, EvnfStatus::Ok);

        // Size query, then copy.
        let mut n = 0;
        assert_eq!(evnf_fit_theta(fit, ptr::null_mut(), 0, &mut n), EvnfStatus::BufferTooSmall);
        assert_eq!(n, 3);
        let mut theta = [0.0; 3];
        assert_eq!(evnf_fit_theta(fit, theta.as_mut_ptr(), 3, &mut n), EvnfStatus::Ok);
        for (a, b) in theta.iter().zip(omega) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut inliers = vec![0usize; items.len()];
        assert_eq!(evnf_fit_inliers(fit, inliers.as_mut_ptr(), inliers.len(), &mut n), EvnfStatus::Ok);
        assert_eq!(n, items.len());
        let mut rms = f64::NAN;
        assert_eq!(evnf_fit_rms(fit, &mut rms), EvnfStatus::Ok);
        assert!(rms < 1e-12);

        evnf_fit_free(fit);
        evnf_observations_free(obs);
    }
}

#[test]
fn error_codes_and_messages() {
    let items = rotation_observations([0.1, 0.2, 0.3]);
    let mut obs = ptr::null_mut();
    unsafe {
        assert_eq!(evnf_observations_new(items.as_ptr(), items.len(), ptr::null_mut()), EvnfStatus::NullPointer);
        assert!(last_error().contains("out"));
        assert_eq!(evnf_observations_new(ptr::null(), 3, &mut obs), EvnfStatus::NullPointer);

        assert_eq!(evnf_observations_new(items.as_ptr(), items.len(), &mut obs), EvnfStatus::Ok);
        let mut fit = ptr::null_mut();
        assert_eq!(evnf_solve(obs, 3, ptr::null(), ptr::null(), &mut fit), EvnfStatus::InvalidInput);
        assert!(last_error().contains("missing depth"));
        assert!(fit.is_null());
        assert_eq!(evnf_solve(obs, 42, ptr::null(), ptr::null(), &mut fit), EvnfStatus::InvalidInput);
        assert_eq!(evnf_solve(obs, EvnfModelKind::Depth as i32, ptr::null(), ptr::null(), &mut fit), EvnfStatus::NullPointer);
        assert_eq!(evnf_observations_set_depths(obs, [1.0].as_ptr(), 1), EvnfStatus::InvalidInput);
        evnf_observations_free(obs);

        // Too few observations for the model is a degenerate-data failure.
        assert_eq!(evnf_observations_new(items.as_ptr(), 2, &mut obs), EvnfStatus::Ok);
        assert_eq!(
            evnf_solve(obs, EvnfModelKind::AngularVelocity as i32, ptr::null(), ptr::null(), &mut fit),
            EvnfStatus::Degenerate
        );
        evnf_observations_free(obs);

        let path = CString::new("/nonexistent/flows.csv").unwrap();
        assert_eq!(evnf_observations_read_csv(path.as_ptr(), &camera(), &mut obs), EvnfStatus::InvalidInput);
        assert!(last_error().contains("/nonexistent/flows.csv"));

        evnf_observations_free(ptr::null_mut());
        evnf_fit_free(ptr::null_mut());
        evnf_time_surface_free(ptr::null_mut());
    }
}

#[test]
fn extraction_from_a_linear_surface() {
    // An edge sweeping along +x at 100 px/s.
    let k = camera();
    let mut ts = ptr::null_mut();
    unsafe {
        assert_eq!(evnf_time_surface_new(k.width, k.height, 1.0, 0.04, &mut ts), EvnfStatus::Ok);
        for y in 0..k.height {
            for x in 116..=120u32 {
                let t = 1.0 + (x as f64 - 120.0) / 100.0;
                assert_eq!(evnf_time_surface_set(ts, x, y, t, 1), EvnfStatus::Ok);
            }
        }
        assert_eq!(evnf_time_surface_set(ts, 999, 0, 1.0, 1), EvnfStatus::InvalidInput);

        let mut cfg = evnf_extraction_config_default();
        cfg.polarity = 5;
        let mut obs = ptr::null_mut();
        assert_eq!(evnf_extract(ts, &k, &cfg, &mut obs), EvnfStatus::InvalidInput);
        assert_eq!(evnf_extract(ts, &k, ptr::null(), &mut obs), EvnfStatus::Ok);

        let mut len = 0;
        assert_eq!(evnf_observations_copy(obs, ptr::null_mut(), 0, &mut len), EvnfStatus::BufferTooSmall);
        assert!(len > 0);
        let mut out = vec![
            EvnfObservation {
                x: 0.0,
                y: 0.0,
                nx: 0.0,
                ny: 0.0,
                t: 0.0
            };
            len
        ];
        assert_eq!(evnf_observations_copy(obs, out.as_mut_ptr(), out.len(), &mut len), EvnfStatus::Ok);
        for o in &out {
            // 100 px/s is 0.5 calibrated units/s along +x.
            assert!((o.nx - 0.5).abs() < 1e-9 && o.ny.abs() < 1e-9, "{o:?}");
        }
        evnf_observations_free(obs);
        evnf_time_surface_free(ts);
    }
}

#[test]
fn homography_analysis() {
    // H_d = -([w]x + v N^T) plus an identity shift of 2.5.
    let w = [0.1, -0.2, 0.3];
    let v = [0.4, 0.1, -0.2];
    let n = [0.0, 0.0, 1.0];
    let skew = [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]];
    let mut h = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            h[3 * i + j] = -(skew[i][j] + v[i] * n[j]) + if i == j { 2.5 } else { 0.0 };
        }
    }
    let mut out = std::mem::MaybeUninit::<EvnfHomographyResult>::uninit();
    unsafe {
        assert_eq!(evnf_homography_analyse(h.as_ptr(), out.as_mut_ptr()), EvnfStatus::Ok);
        let r = out.assume_init();
        assert!((r.epsilon - 2.5).abs() < 1e-12);
        assert_eq!(r.degeneracy, EvnfHomographyDegeneracy::None);
        let matches = r.candidates.iter().any(|c| {
            (0..3).all(|i| (c.omega[i] - w[i]).abs() < 1e-9 && (c.nu_over_d[i] - v[i]).abs() < 1e-9 && (c.normal[i] - n[i]).abs() < 1e-9)
        });
        assert!(matches, "{:?}", r.candidates);

        let rot = [0.0, -0.3, 0.2, 0.3, 0.0, -0.1, -0.2, 0.1, 0.0];
        assert_eq!(evnf_homography_analyse(rot.as_ptr(), out.as_mut_ptr()), EvnfStatus::Ok);
        let r = out.assume_init();
        assert_eq!(r.degeneracy, EvnfHomographyDegeneracy::PureRotation);
        assert_eq!(evnf_homography_analyse(ptr::null(), out.as_mut_ptr()), EvnfStatus::NullPointer);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(evnf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
