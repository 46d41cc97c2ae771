use diraclab::algebra::{alpha, alpha_dot, beta, Covector};
use diraclab::nonlinearity::Nonlinearity;
use diraclab::numerics::loglog_slope;
use diraclab::solver::*;
use diraclab::transport::LightRay;
use diraclab::Spinor;
use nalgebra::Matrix4;
use num_complex::Complex64;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gaussian(grid: Grid, amp: f64, width: f64, v: Spinor) -> SpinorField {
    SpinorField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|a| a * a).sum();
        v * c(amp * (-0.5 * r2 / (width * width)).exp(), 0.0)
    })
}

fn spin() -> Spinor {
    Spinor::new(c(1.0, 0.0), c(0.3, -0.2), c(0.0, 0.5), c(-0.4, 0.1)).normalize()
}

/// Eigenvector of `α·ξ + β` for `+√(1+|ξ|²)` via the spectral projector.
fn positive_energy_spinor(xi: &[f64; 3]) -> (Spinor, f64) {
    let h = alpha_dot(xi) + beta();
    let lambda = (1.0 + xi.iter().map(|a| a * a).sum::<f64>()).sqrt();
    let v = (h + Matrix4::identity() * c(lambda, 0.0)) * Spinor::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let v = v.normalize();
    assert!((h * v - v * c(lambda, 0.0)).norm() < 1e-13);
    (v, lambda)
}

#[test]
fn plane_wave_dispersion() {
    let grid = Grid::desk();
    let xi = [1.0 / 8.0, 2.0 / 8.0, -3.0 / 8.0];
    let (v, lambda) = positive_energy_spinor(&xi);
    let wave = |t: f64| {
        SpinorField::from_fn(grid, |x| {
            let phase = x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2] - lambda * t;
            v * c(0.0, phase).exp()
        })
    };
    let t_final = 1.0;
    let u = solve_nonlinear_final(&Nonlinearity::zero(), &wave(0.0), t_final, &SolveOptions::desk(t_final)).unwrap();
    let err = u.values.iter().zip(&wave(t_final).values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-9, "plane wave error {err:e}");
}

#[test]
fn zero_data_stays_zero() {
    let grid = Grid::new(8, 8.0).unwrap();
    for model in [Nonlinearity::soler(1.0), Nonlinearity::quintic(1.0), Nonlinearity::modulated_cubic(1.0, Nonlinearity::default_modulation())] {
        let traj = solve_nonlinear(&model, &SpinorField::zeros(grid), 0.5, &SolveOptions::desk(0.5)).unwrap();
        assert!(traj.fields.iter().all(|f| f.max_abs() == 0.0));
        assert_eq!(traj.times.len(), 257);
    }
}

#[test]
fn free_step_is_unitary() {
    let grid = Grid::new(16, 8.0 * PI).unwrap();
    let phi = gaussian(grid, 1.0, 2.0, spin());
    let n0 = phi.l2_norm();
    let traj = solve_nonlinear(&Nonlinearity::zero(), &phi, 1.0, &SolveOptions { dt: 0.125, record_stride: 1, blowup_guard: 1e6 }).unwrap();
    for w in traj.fields.windows(2) {
        assert!((w[1].l2_norm() - w[0].l2_norm()).abs() < 1e-12 * n0);
    }
}

#[test]
fn soler_conserves_charge() {
    let grid = Grid::desk();
    let phi = gaussian(grid, 0.5, 3.0, spin());
    let n0 = phi.l2_norm();
    let mut opts = SolveOptions::desk(1.0);
    opts.record_stride = 64;
    let traj = solve_nonlinear(&Nonlinearity::soler(1.0), &phi, 1.0, &opts).unwrap();
    assert_eq!(traj.times.len(), 5);
    for f in &traj.fields {
        let drift = (f.l2_norm() - n0).abs() / n0;
        assert!(drift < 1e-8, "drift {drift:e}");
    }
}

#[test]
fn splitting_is_second_order_in_dt() {
    let grid = Grid::new(16, 16.0 * PI).unwrap();
    let phi = gaussian(grid, 1.2, 3.0, spin());
    let model = Nonlinearity::soler(1.0);
    let run = |steps: usize| {
        let opts = SolveOptions { dt: 1.0 / steps as f64, record_stride: steps, blowup_guard: 1e6 };
        solve_nonlinear_final(&model, &phi, 1.0, &opts).unwrap()
    };
    let reference = run(1024);
    let dts = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&s| run(s).distance(&reference)).collect();
    let slope = loglog_slope(&dts, &errs).unwrap();
    assert!((1.8..=2.2).contains(&slope), "slope {slope}, errors {errs:?}");
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() < 0.6, "ratios {errs:?}");
    }
}

#[test]
fn spatial_convergence_is_spectral() {
    let length = 16.0 * PI;
    let free = |n: usize| {
        let grid = Grid::new(n, length).unwrap();
        let phi = gaussian(grid, 1.0, 2.0, spin());
        solve_nonlinear_final(&Nonlinearity::zero(), &phi, 1.0, &SolveOptions { dt: 0.25, record_stride: 4, blowup_guard: 1e6 }).unwrap()
    };
    let fine = free(64);
    // coarse grid points are every (64/n)-th fine point
    let err = |n: usize| {
        let u = free(n);
        let r = 64 / n;
        let g = u.grid;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let d = (u.values[g.index(i, j, k)] - fine.values[fine.grid.index(r * i, r * j, r * k)]).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    };
    let (e16, e32) = (err(16), err(32));
    assert!(e16 / e32 > 100.0, "e16 = {e16:e}, e32 = {e32:e}");
}

#[test]
fn finite_speed_of_propagation() {
    let grid = Grid::new(64, 8.0 * PI).unwrap();
    let radius = 6.0;
    let bump = |r: f64| if r < radius { (-1.0 / (1.0 - (r / radius).powi(2))).exp() } else { 0.0 };
    let phi = SpinorField::from_fn(grid, |x| {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        spin() * c(bump(r), 0.0)
    });
    let t_final = 1.0;
    let u = solve_nonlinear_final(&Nonlinearity::zero(), &phi, t_final, &SolveOptions { dt: 0.125, record_stride: 8, blowup_guard: 1e6 }).unwrap();
    let reach = radius + t_final + grid.spacing();
    let (mut outside, mut total) = (0.0, 0.0);
    for (p, v) in u.values.iter().enumerate() {
        let r = grid.point(p).iter().map(|a| a * a).sum::<f64>().sqrt();
        total += v.norm_squared();
        if r > reach {
            outside += v.norm_squared();
        }
    }
    let frac = outside / total;
    assert!(frac < 1e-6, "relative mass outside the cone {frac:e}");
}

#[test]
fn linearized_with_zero_model_is_free_evolution() {
    let grid = Grid::new(16, 16.0 * PI).unwrap();
    let phi = gaussian(grid, 1.0, 3.0, spin());
    let zero = Nonlinearity::zero();
    let opts = SolveOptions { dt: 1.0 / 32.0, record_stride: 1, blowup_guard: 1e6 };
    let background = solve_nonlinear(&zero, &gaussian(grid, 0.7, 2.0, spin()), 1.0, &opts).unwrap();
    let free = solve_nonlinear(&zero, &phi, 1.0, &opts).unwrap();
    let lin = solve_linearized(&zero, &background, &phi, None).unwrap();
    for (a, b) in lin.fields.iter().zip(&free.fields) {
        assert!(a.distance(b) < 1e-10);
    }
}

#[test]
fn linearized_homogeneous_zero_data_is_zero() {
    let grid = Grid::new(8, 8.0 * PI).unwrap();
    let model = Nonlinearity::soler(1.0);
    let opts = SolveOptions { dt: 1.0 / 16.0, record_stride: 1, blowup_guard: 1e6 };
    let background = solve_nonlinear(&model, &gaussian(grid, 1.0, 3.0, spin()), 1.0, &opts).unwrap();
    let w = solve_linearized(&model, &background, &SpinorField::zeros(grid), None).unwrap();
    assert!(w.fields.iter().all(|f| f.max_abs() == 0.0));
}

#[test]
fn linearized_rejects_foreign_background() {
    let grid = Grid::new(8, 8.0 * PI).unwrap();
    let opts = SolveOptions { dt: 1.0 / 16.0, record_stride: 1, blowup_guard: 1e6 };
    let phi = gaussian(grid, 1.0, 3.0, spin());
    let background = solve_nonlinear(&Nonlinearity::soler(1.0), &phi, 1.0, &opts).unwrap();
    let err = solve_linearized(&Nonlinearity::cubic(1.0), &background, &phi, None).unwrap_err();
    assert!(matches!(err, SolverError::BackgroundMismatch(_)), "{err}");
    let mut strided = background.clone();
    strided.times.remove(3);
    strided.fields.remove(3);
    assert!(matches!(
        solve_linearized(&Nonlinearity::soler(1.0), &strided, &phi, None),
        Err(SolverError::BackgroundMismatch(_))
    ));
}

#[test]
fn divergence_guard_triggers() {
    let grid = Grid::new(8, 8.0 * PI).unwrap();
    let phi = gaussian(grid, 3.0, 3.0, spin());
    let opts = SolveOptions { dt: 0.25, record_stride: 1, blowup_guard: 1e6 };
    let err = solve_nonlinear(&Nonlinearity::quintic(-50.0), &phi, 2.0, &opts).unwrap_err();
    assert!(matches!(err, SolverError::Divergence { .. }), "{err}");
}

/// Applies the continuous operator to the discrete solution of `Q(f)` and
/// compares with `f`.
fn causal_inverse_residual(steps: usize) -> f64 {
    let grid = Grid::new(16, 16.0 * PI).unwrap();
    let model = Nonlinearity::soler(1.0);
    let dt = 1.0 / steps as f64;
    let opts = SolveOptions { dt, record_stride: 1, blowup_guard: 1e6 };
    let background = solve_nonlinear(&model, &gaussian(grid, 1.0, 3.0, spin()), 1.0, &opts).unwrap();
    let profile = gaussian(grid, 1.0, 2.5, Spinor::new(c(0.0, 1.0), c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)));
    let source = Trajectory {
        grid,
        model: "source".into(),
        times: background.times.clone(),
        fields: background
            .times
            .iter()
            .map(|&t| {
                let mut f = SpinorField::zeros(grid);
                f.axpy((2.0 * t).cos(), &profile);
                f
            })
            .collect(),
    };
    let w = solve_linearized(&model, &background, &SpinorField::zeros(grid), Some(&source)).unwrap();
    let k = steps / 2;
    let wk = &w.fields[k];
    let grad = spectral_gradient(wk);
    let points = grid.points();
    let a = [alpha(1), alpha(2), alpha(3)];
    let b = beta();
    let i = c(0.0, 1.0);
    let mut res = SpinorField::zeros(grid);
    for p in 0..grid.len() {
        let dtw = (w.fields[k + 1].values[p] - w.fields[k - 1].values[p]) / c(2.0 * dt, 0.0);
        let adw = a[0] * grad[0].values[p] + a[1] * grad[1].values[p] + a[2] * grad[2].values[p];
        let u = background.fields[k].values[p];
        let pot = model.derivative(&points[p], &u, 1, &[wk.values[p]]).unwrap();
        res.values[p] = dtw * i + adw * i - b * wk.values[p] - pot - source.fields[k].values[p];
    }
    res.l2_norm() / source.fields[k].l2_norm()
}

#[test]
fn causal_inverse_solves_the_equation() {
    let coarse = causal_inverse_residual(32);
    let fine = causal_inverse_residual(64);
    assert!(fine < 1e-3, "residual {fine:e}");
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "residuals {coarse:e} {fine:e}");
}

#[test]
fn sampling_constant_in_space_returns_time_profile() {
    let grid = Grid::new(8, 8.0 * PI).unwrap();
    let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let profile = |t: f64| Spinor::new(c(1.0 + t, 0.0), c(0.0, -2.0 * t), c(0.5, 0.5), c(t, 1.0));
    let traj = Trajectory {
        grid,
        model: "test".into(),
        fields: times.iter().map(|&t| SpinorField::from_fn(grid, |_| profile(t))).collect(),
        times,
    };
    let ray = LightRay::new(0.0, [1.0, -2.0, 0.5], Covector::future_lightlike([0.0, 0.6, 0.8])).unwrap();
    let s: Vec<f64> = (0..=10).map(|k| 0.05 * k as f64).collect();
    let samples = sample_along_ray(&traj, &ray, &s).unwrap();
    for (sv, &si) in samples.iter().zip(&s) {
        assert!((sv - profile(2.0 * si)).norm() < 1e-12);
    }
}

#[test]
fn sampling_single_mode_matches_closed_form() {
    let grid = Grid::new(16, 8.0 * PI).unwrap();
    let xi = [0.25, -0.5, 0.75];
    let v = spin();
    let g = |t: f64| c(1.0 - 0.5 * t, 0.3 * t);
    let closed = |t: f64, x: &[f64; 3]| v * (c(0.0, x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2]).exp() * g(t));
    let times: Vec<f64> = (0..=4).map(|k| k as f64 * 0.25).collect();
    let traj = Trajectory {
        grid,
        model: "test".into(),
        fields: times.iter().map(|&t| SpinorField::from_fn(grid, |x| closed(t, x))).collect(),
        times,
    };
    let eta = Covector::future_lightlike([1.0 / 3.0, -2.0 / 3.0, 2.0 / 3.0]);
    let ray = LightRay::new(0.0, [0.3, 0.7, -1.1], eta).unwrap();
    let s: Vec<f64> = (0..=17).map(|k| k as f64 / 34.0).collect();
    let samples = sample_along_ray(&traj, &ray, &s).unwrap();
    for (sv, &si) in samples.iter().zip(&s) {
        let p = ray.point(si);
        assert!((sv - closed(p.t, &p.x)).norm() < 1e-9);
    }
}

#[test]
fn sampling_zero_trajectory_and_geometry_errors() {
    let grid = Grid::new(8, 8.0).unwrap();
    let traj = Trajectory {
        grid,
        model: "zero".into(),
        times: vec![0.0, 0.5, 1.0],
        fields: vec![SpinorField::zeros(grid); 3],
    };
    let ray = LightRay::new(0.0, [0.0; 3], Covector::future_lightlike([1.0, 0.0, 0.0])).unwrap();
    let out = sample_along_ray(&traj, &ray, &[0.0, 0.25, 0.5]).unwrap();
    assert!(out.iter().all(|v| v.norm() == 0.0));
    // beyond the recorded time span
    assert!(matches!(sample_along_ray(&traj, &ray, &[0.6]), Err(SolverError::Geometry { .. })));
    // too close to the box face: |x| must stay below L/2 − 2h = 2
    let edge = LightRay::new(0.0, [-1.5, 0.0, 0.0], Covector::future_lightlike([1.0, 0.0, 0.0])).unwrap();
    assert!(matches!(sample_along_ray(&traj, &edge, &[0.0, 0.4]), Err(SolverError::Geometry { .. })));
}

#[test]
fn trajectory_binary_round_trip() {
    let grid = Grid::new(8, 8.0).unwrap();
    let model = Nonlinearity::soler(1.0);
    let traj = solve_nonlinear(&model, &gaussian(grid, 1.0, 1.0, spin()), 0.5, &SolveOptions { dt: 0.125, record_stride: 2, blowup_guard: 1e6 }).unwrap();
    assert_eq!(traj.times, vec![0.0, 0.25, 0.5]);
    let mut bytes = Vec::new();
    write_trajectory(&traj, &mut bytes).unwrap();
    assert_eq!(&bytes[..8], b"DIRTRAJ1");
    let back = read_trajectory(bytes.as_slice()).unwrap();
    assert_eq!(back, traj);
    bytes[0] = b'X';
    assert!(matches!(read_trajectory(bytes.as_slice()), Err(SolverError::Format(_))));
}

#[test]
fn diagnostics_csv() {
    let grid = Grid::new(8, 8.0).unwrap();
    let traj = solve_nonlinear(&Nonlinearity::zero(), &gaussian(grid, 1.0, 1.0, spin()), 0.5, &SolveOptions { dt: 0.25, record_stride: 1, blowup_guard: 1e6 }).unwrap();
    let rows = traj.diagnostics();
    assert!(rows.iter().all(|r| r.h1_proxy >= r.l2_norm));
    let mut out = Vec::new();
    write_diagnostics_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("time,l2_norm,h1_proxy\n"));
    assert_eq!(text.lines().count(), 4);
}
