use diraclab::algebra::{alpha_dot, beta};
use diraclab::nonlinearity::{builtin_zoo, Nonlinearity};
use diraclab::reconstruction::*;
use diraclab::solver::{solve_nonlinear, Grid, SolveOptions, SpinorField};
use diraclab::transport::{ConstantBackground, TrajectoryBackground};
use diraclab::{Matrix4C, Spinor};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(a: f64, b: f64) -> Complex64 {
    Complex64::new(a, b)
}

fn random_point(rng: &mut ChaCha8Rng) -> SamplePoint {
    let z = Spinor::from_fn(|_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let r = rng.gen_range(0.0..1.0);
    SamplePoint {
        x: std::array::from_fn(|_| rng.gen_range(-2.0..2.0)),
        z: z * c(r / z.norm(), 0.0),
    }
}

fn point(z: Spinor) -> SamplePoint {
    SamplePoint { x: [0.2, -0.1, 0.4], z }
}

#[test]
fn round_trip_reproduces_every_builtin() {
    let setup = MeasurementSetup::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<SamplePoint> = (0..10).map(|_| random_point(&mut rng)).collect();
    for model in builtin_zoo() {
        for p in &points {
            let rt = round_trip(&model, &setup, p).unwrap();
            assert!(rt.rel_error < 1e-5, "{} at {p:?}: {rt:?}", model.name());
        }
    }
}

#[test]
fn zero_model_gives_zero_measurements_and_form() {
    let setup = MeasurementSetup::default();
    let p = point(Spinor::new(c(0.3, 0.0), c(0.0, 0.1), c(0.0, 0.0), c(0.2, 0.0)));
    let set = forward_measurements(&Nonlinearity::zero(), &setup, &p, &ConstantBackground(p.z)).unwrap();
    assert_eq!(set.configurations.len(), 16);
    for cfg in &set.configurations {
        assert!(cfg.end_map.kernel.determinant().abs() > DET_TOL);
        assert!(cfg.entries.iter().all(|e| e.w_final == Spinor::zeros()));
    }
    assert_eq!(assemble_trilinear(&set).unwrap().standard().max_abs(), 0.0);
}

#[test]
fn soler_at_zero_background() {
    let setup = MeasurementSetup::default();
    let p = point(Spinor::zeros());
    let model = Nonlinearity::soler(1.0);
    let set = forward_measurements(&model, &setup, &p, &ConstantBackground(Spinor::zeros())).unwrap();
    // closed form: w_final = W0 (1 − α·ξ₀) F⁽³⁾(0, v₁, v₂, v₃) with W0 = exp(T/2 · A₀)
    for cfg in &set.configurations {
        let proj = Matrix4C::identity() - alpha_dot(&cfg.xi0);
        let frames: [_; 3] = std::array::from_fn(|j| slot_frame(j, cfg.signs[j]));
        for e in cfg.entries.iter().step_by(7) {
            let v: [Spinor; 3] = std::array::from_fn(|j| diraclab::algebra::complexify(&frames[j][e.frame_index[j]]));
            let f3 = model.at(&p.x).third(&Spinor::zeros(), &v[0], &v[1], &v[2]);
            let g0 = recover_projection(&cfg.end_map, &e.w_final, 1.0).unwrap();
            assert!((g0 - proj * f3).norm() < 1e-8);
        }
    }
    let form = assemble_trilinear(&set).unwrap().standard();
    let v = Spinor::new(c(0.2, 0.4), c(-0.3, 0.0), c(0.0, 0.1), c(0.6, -0.2));
    let q = (v.adjoint() * beta() * v)[(0, 0)];
    let expected = beta() * v * q;
    assert!((form.evaluate(&v, &v, &v) - expected).norm() < 1e-6);
    let w = Spinor::new(c(0.0, 1.0), c(0.5, 0.0), c(0.3, -0.3), c(0.0, 0.0));
    let u = Spinor::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.2), c(0.1, 0.1));
    let a = form.evaluate(&v, &w, &u);
    for b in [form.evaluate(&w, &v, &u), form.evaluate(&u, &w, &v), form.evaluate(&v, &u, &w)] {
        assert!((a - b).norm() < 1e-8);
    }
}

#[test]
fn measurements_are_linear() {
    let setup = MeasurementSetup::default();
    let p = point(Spinor::new(c(0.3, 0.2), c(0.0, 0.1), c(-0.4, 0.0), c(0.2, 0.0)));
    let model = Nonlinearity::soler(1.0);
    let set = forward_measurements(&model, &setup, &p, &ConstantBackground(p.z)).unwrap();
    let base = assemble_trilinear(&set).unwrap().standard();
    let scaled = assemble_trilinear(&set.scaled(2.5)).unwrap().standard();
    for (a, b) in base.0.iter().zip(&scaled.0) {
        assert!((a * c(2.5, 0.0) - b).norm() < 1e-10);
    }
    // doubling v₁ doubles the measurement
    let v: Vec<Spinor> = (0..3).map(|j| diraclab::algebra::complexify(&slot_frame(j, 1.0)[0])).collect();
    let l = model.at(&p.x);
    let one = l.third(&p.z, &v[0], &v[1], &v[2]);
    let two = l.third(&p.z, &(v[0] * c(2.0, 0.0)), &v[1], &v[2]);
    assert!((two - one * c(2.0, 0.0)).norm() < 1e-12);
}

#[test]
fn halved_transport_step_gives_same_projection() {
    let setup = MeasurementSetup::default();
    let fine = MeasurementSetup {
        transport: setup.transport.halved(),
        ..setup
    };
    let p = point(Spinor::new(c(0.5, 0.2), c(0.0, 0.3), c(-0.4, 0.0), c(0.2, 0.1)));
    let model = Nonlinearity::quintic(1.0);
    let a = forward_measurements(&model, &setup, &p, &ConstantBackground(p.z)).unwrap();
    let b = forward_measurements(&model, &fine, &p, &ConstantBackground(p.z)).unwrap();
    for (ca, cb) in a.configurations.iter().zip(&b.configurations) {
        for (ea, eb) in ca.entries.iter().zip(&cb.entries) {
            let ga = recover_projection(&ca.end_map, &ea.w_final, 1.0).unwrap();
            let gb = recover_projection(&cb.end_map, &eb.w_final, 1.0).unwrap();
            assert!((ga - gb).norm() < 1e-6);
        }
    }
}

#[test]
fn incomplete_measurements_are_listed() {
    let setup = MeasurementSetup::default();
    let p = point(Spinor::zeros());
    let mut set = forward_measurements(&Nonlinearity::soler(1.0), &setup, &p, &ConstantBackground(p.z)).unwrap();
    set.configurations.retain(|cfg| !(cfg.signs == [-1.0, 1.0, 1.0] && cfg.choice == 1));
    set.configurations.remove(0);
    match assemble_trilinear(&set) {
        Err(ReconstructionError::Incomplete(missing)) => {
            assert_eq!(missing, vec!["+++/xi0".to_string(), "-++/xi0'".to_string()]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn background_must_match_sample_point() {
    let p = point(Spinor::new(c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)));
    let r = forward_measurements(&Nonlinearity::soler(1.0), &MeasurementSetup::default(), &p, &ConstantBackground(Spinor::zeros()));
    assert!(matches!(r, Err(ReconstructionError::BackgroundMismatch { .. })));
}

#[test]
fn singular_end_map_is_rejected() {
    let p = point(Spinor::zeros());
    let set = forward_measurements(&Nonlinearity::soler(1.0), &MeasurementSetup::default(), &p, &ConstantBackground(p.z)).unwrap();
    let mut em = set.configurations[0].end_map.clone();
    em.kernel = nalgebra::Matrix4::zeros();
    assert!(matches!(
        recover_projection(&em, &Spinor::zeros(), 1.0),
        Err(ReconstructionError::SingularEndMap { .. })
    ));
    let zero = recover_projection(&set.configurations[0].end_map, &Spinor::zeros(), 1.0).unwrap();
    assert_eq!(zero, Spinor::zeros());
}

#[test]
fn json_round_trip() {
    let p = point(Spinor::new(c(0.1, 0.0), c(0.0, 0.2), c(0.0, 0.0), c(0.0, 0.0)));
    let set = forward_measurements(&Nonlinearity::cubic(1.0), &MeasurementSetup::default(), &p, &ConstantBackground(p.z)).unwrap();
    let back = MeasurementSet::from_json(&set.to_json().unwrap()).unwrap();
    let a = assemble_trilinear(&set).unwrap().standard();
    let b = assemble_trilinear(&back).unwrap().standard();
    assert!(a.max_distance(&b) < 1e-14);
}

#[test]
fn uniqueness_verdicts() {
    let setup = MeasurementSetup::default();
    let soler = Nonlinearity::soler(1.0);
    let with_quintic = Nonlinearity::soler(1.0).plus(&Nonlinearity::quintic(1.0)).unwrap();
    let z_half = Spinor::new(c(0.3, 0.1), c(0.0, 0.2), c(0.25, 0.0), c(0.1, -0.2));
    let z_half = z_half * c(0.5 / z_half.norm(), 0.0);
    let at_zero = [point(Spinor::zeros())];
    let at_half = [point(z_half)];
    let same = uniqueness_compare(&soler, &soler, &at_half, &setup).unwrap();
    assert_eq!(same.verdict, Verdict::Same);
    assert!(same.max_discrepancy < 1e-8);
    assert_eq!(uniqueness_compare(&soler, &with_quintic, &at_zero, &setup).unwrap().verdict, Verdict::Same);
    assert_eq!(uniqueness_compare(&soler, &with_quintic, &at_half, &setup).unwrap().verdict, Verdict::Different);
    let vs_zero = uniqueness_compare(&soler, &Nonlinearity::zero(), &at_half, &setup).unwrap();
    assert_eq!(vs_zero.verdict, Verdict::Different);
    let mut buf = Vec::new();
    vs_zero.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x1,x2,x3,z,discrepancy,verdict\n"));
    assert!(text.trim_end().ends_with(",different"));
}

#[test]
fn pde_background_round_trip() {
    // the background is read from a solved trajectory; its value at (0, x₀) is z
    let grid = Grid::new(16, 8.0 * std::f64::consts::PI).unwrap();
    let z = Spinor::new(c(0.4, 0.0), c(0.0, 0.2), c(0.1, 0.0), c(0.0, -0.1));
    let x0 = [0.0; 3];
    let phi = SpinorField::from_fn(grid, |x| {
        let r2: f64 = (0..3).map(|a| (x[a] - x0[a]).powi(2)).sum();
        z * c((-r2 / 40.0).exp(), 0.0)
    });
    let model = Nonlinearity::soler(1.0);
    let traj = solve_nonlinear(&model, &phi, 1.0, &SolveOptions::desk(1.0)).unwrap();
    let bg = TrajectoryBackground { trajectory: &traj };
    let p = SamplePoint { x: x0, z: phi.values[grid.index(8, 8, 8)] };
    let set = forward_measurements(&model, &MeasurementSetup::default(), &p, &bg).unwrap();
    let form = assemble_trilinear(&set).unwrap().standard();
    let exact = StandardTrilinear::exact(&model, &p.x, &p.z);
    assert!(form.max_distance(&exact) < 1e-5 * exact.max_abs());
}
