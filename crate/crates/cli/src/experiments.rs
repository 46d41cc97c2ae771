//! The six experiments. Each returns its checks and in-memory artifacts;
//! writing files and the manifest is left to the runner.

use crate::config::{spinor_of, BackgroundKind, ExperimentConfig, Experiment};
use diraclab::algebra::{alpha, beta, kernel_basis, principal_symbol, expm};
use diraclab::cascade::{
    perturbed_solutions, residual_from_parts, run_cascade, stencil_derivative, CascadeCoefficients, CascadeError,
    MultiIndex, PerturbationFamily,
};
use diraclab::nonlinearity::{builtin_zoo, Nonlinearity};
use diraclab::numerics::loglog_slope;
use diraclab::reconstruction::{
    assemble_trilinear, forward_measurements, round_trip, uniqueness_compare, MeasurementSetup, ReconstructionError,
    SamplePoint, StandardTrilinear, Verdict,
};
use diraclab::solver::{solve_nonlinear, Grid, SolverError, SpinorField, Trajectory};
use diraclab::transport::{
    collision_limit_run, end_map, fundamental_matrix, transport_matrix, AdmissibleDirection, AnalyticBackground,
    Background, ConstantBackground, LightRay, TrajectoryBackground, TransportError,
};
use diraclab::{Covector, Matrix4C, Spinor};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(file: &str, s: String) -> Self {
        Self {
            file: file.into(),
            bytes: s.into_bytes(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Set when a solve was stopped by the blow-up guard.
    pub divergence: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.divergence.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Divergence { .. } => RunError::Divergence(e.to_string()),
            SolverError::InvalidGrid { .. } | SolverError::InvalidTimeGrid { .. } | SolverError::Support(_) => {
                RunError::Config(e.to_string())
            }
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<CascadeError> for RunError {
    fn from(e: CascadeError) -> Self {
        match e {
            CascadeError::Solver(s) => s.into(),
            CascadeError::InvalidFamily(_) | CascadeError::InvalidIndex(_) => RunError::Config(e.to_string()),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<TransportError> for RunError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Solver(s) => s.into(),
            TransportError::InvalidScenario(_) | TransportError::NotAdmissible { .. } => RunError::Config(e.to_string()),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<ReconstructionError> for RunError {
    fn from(e: ReconstructionError) -> Self {
        match e {
            ReconstructionError::Transport(t) => t.into(),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match exp {
        Experiment::VerifyAlgebra => verify_algebra(cfg, &mut rng),
        Experiment::Expand => expand(cfg, &mut rng),
        Experiment::Transport => transport(cfg, &mut rng),
        Experiment::Collide => collide(cfg),
        Experiment::Reconstruct => reconstruct(cfg, &mut rng),
        Experiment::Compare => compare(cfg),
    }
}

fn model(cfg: &crate::config::ModelConfig) -> Result<Nonlinearity, RunError> {
    cfg.build().map_err(RunError::Config)
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|a| a / n);
        }
    }
}

fn random_spinor(rng: &mut ChaCha8Rng) -> Spinor {
    Spinor::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn grid(cfg: &ExperimentConfig) -> Result<Grid, RunError> {
    Grid::new(cfg.grid.n, cfg.grid.length).map_err(|e| RunError::Config(e.to_string()))
}

fn gaussian(grid: Grid, amplitude: f64, width: f64, center: [f64; 3], v: Spinor) -> SpinorField {
    SpinorField::from_fn(grid, |x| {
        let r2: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum();
        v * re(amplitude * (-0.5 * r2 / (width * width)).exp())
    })
}

// ---------------------------------------------------------------- algebra

fn verify_algebra(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome, RunError> {
    let a = &cfg.algebra;
    let mut checks = Vec::new();
    let id = Matrix4C::identity();
    let mut exact = true;
    for j in 1..=3 {
        for k in 1..=3 {
            let expect = if j == k { id * re(2.0) } else { Matrix4C::zeros() };
            exact &= alpha(j) * alpha(k) + alpha(k) * alpha(j) == expect;
        }
        exact &= alpha(j) * beta() + beta() * alpha(j) == Matrix4C::zeros();
    }
    exact &= beta() * beta() == id;
    checks.push(Check::new("anticommutation", exact, "α_jα_k + α_kα_j = 2δ_jk, α_jβ + βα_j = 0, β² = 1"));

    let mut det_csv = String::from("tau,xi1,xi2,xi3,det_re,det_im,expected,rel_error\n");
    let mut worst: f64 = 0.0;
    for _ in 0..a.samples {
        let eta = Covector::new(rng.gen_range(-3.0..3.0), std::array::from_fn(|_| rng.gen_range(-3.0..3.0)));
        let det = principal_symbol(&eta).determinant();
        let q = eta.wave_symbol();
        let expect = q * q;
        let err = (det - re(expect)).norm() / expect.abs().max(1.0);
        worst = worst.max(err);
        let _ = writeln!(
            det_csv,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.6e}",
            eta.tau, eta.xi[0], eta.xi[1], eta.xi[2], det.re, det.im, expect, err
        );
    }
    checks.push(Check::new(
        "determinant",
        worst <= a.tolerance,
        format!("max relative error {worst:.3e} over {} covectors (tol {:e})", a.samples, a.tolerance),
    ));

    let c = Complex64::new;
    let published = [
        (
            AdmissibleDirection::reference(),
            [
                Spinor::new(re(2.0), c(-1.0, 2.0), re(3.0), re(0.0)),
                Spinor::new(c(1.0, 2.0), re(2.0), re(0.0), re(-3.0)),
            ],
        ),
        (
            AdmissibleDirection::reference_alt(),
            [
                Spinor::new(re(2.0), c(2.0, -1.0), re(3.0), re(0.0)),
                Spinor::new(c(-2.0, -1.0), re(2.0), re(0.0), re(-3.0)),
            ],
        ),
    ];
    let mut spans = Vec::new();
    for (label, (xi0, expect)) in ["xi0", "xi0'"].iter().zip(&published) {
        let kb = kernel_basis(&Covector::new(-1.0, *xi0)).map_err(|e| RunError::Numerical(e.to_string()))?;
        let err = (kb.a * re(3.0) - expect[0]).norm().max((kb.b * re(3.0) - expect[1]).norm());
        let residual = ((id - diraclab::algebra::alpha_dot(xi0)) * kb.a).norm() + ((id - diraclab::algebra::alpha_dot(xi0)) * kb.b).norm();
        checks.push(Check::new(
            format!("kernel basis {label}"),
            err < 1e-14 && residual < 1e-14,
            format!("ξ₀ = {xi0:?}: deviation from the reference vectors {err:.1e}, residual {residual:.1e}"),
        ));
        spans.extend([kb.a, kb.b]);
    }
    let m = Matrix4C::from_columns(&spans);
    let sv = m.singular_values();
    let ratio = sv.min() / sv.max();
    checks.push(Check::new(
        "trivial intersection",
        ratio > 1e-8,
        format!("smallest relative singular value of the joint span {ratio:.3e}"),
    ));
    let mut kernel_worst: f64 = 0.0;
    for _ in 0..a.samples {
        let eta = Covector::future_lightlike(random_unit(rng));
        let kb = kernel_basis(&eta).map_err(|e| RunError::Numerical(e.to_string()))?;
        let p = principal_symbol(&eta);
        kernel_worst = kernel_worst.max((p * kb.a).norm()).max((p * kb.b).norm());
    }
    checks.push(Check::new(
        "kernel formula",
        kernel_worst <= a.tolerance,
        format!("max |p(η)v| {kernel_worst:.3e} over {} future lightlike covectors", a.samples),
    ));
    let admissible = [AdmissibleDirection::reference(), AdmissibleDirection::reference_alt()]
        .iter()
        .all(|d| AdmissibleDirection::new(*d, [1.0; 3]).is_ok());
    checks.push(Check::new("admissible set", admissible, "reference directions lie in M"));

    let mut checks_csv = String::from("check,passed,detail\n");
    for c in &checks {
        let _ = writeln!(checks_csv, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"));
    }
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::text("checks.csv", checks_csv), Artifact::text("determinant.csv", det_csv)],
        divergence: None,
    })
}

// ---------------------------------------------------------------- expand

const DIRECTION_CENTERS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, -0.5], [-0.5, 0.0, 1.0]];
const DIRECTION_WIDTHS: [f64; 3] = [2.5, 2.5, 3.0];

/// Gaussian base and perturbations; direction polarizations are drawn from
/// the seed.
pub fn expansion_family(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<PerturbationFamily, RunError> {
    let x = &cfg.expand;
    let g = grid(cfg)?;
    let c = Complex64::new;
    let pol = Spinor::new(c(1.0, 0.0), c(0.0, 0.5), c(0.3, 0.0), c(0.0, -0.2)).normalize();
    let base = gaussian(g, x.base_amplitude, x.base_width, [0.0; 3], pol);
    let directions = (0..x.directions)
        .map(|j| gaussian(g, 1.0, DIRECTION_WIDTHS[j], DIRECTION_CENTERS[j], random_spinor(rng).normalize()))
        .collect();
    let fam = PerturbationFamily::new(base, directions, x.weights[..x.directions].to_vec(), x.amplitude_bound)?;
    fam.validate(cfg.solver.t_final, x.eps_max, x.support_tol)?;
    Ok(fam)
}

pub fn eps_sweep(cfg: &ExperimentConfig) -> Vec<f64> {
    let x = &cfg.expand;
    let n = x.eps_count;
    (0..n)
        .map(|k| x.eps_max * (x.eps_min / x.eps_max).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn expand(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome, RunError> {
    let x = &cfg.expand;
    let fam = expansion_family(cfg, rng)?;
    let m = model(&cfg.model)?;
    let t = cfg.solver.t_final;
    let opts = cfg.solve_options();
    let run = run_cascade(&m, &fam, 3, t, &opts)?;
    let sols = perturbed_solutions(&m, &fam, &eps_sweep(cfg), t, &opts);
    let mut out = Outcome::default();
    for (eps, s) in &sols {
        if let Err(e @ SolverError::Divergence { .. }) = s {
            out.divergence.get_or_insert(format!("ε = {eps}: {e}"));
        }
    }
    let default = CascadeCoefficients::default();
    let residual = residual_from_parts(&run, &fam, &sols, &default)?;
    let mut csv = Vec::new();
    residual.write_csv(&mut csv).expect("in-memory write");
    out.artifacts.push(Artifact {
        file: "residual.csv".into(),
        bytes: csv,
    });
    let slope = residual.slope;
    out.checks.push(Check::new(
        "expansion slope",
        slope.is_some_and(|s| s >= x.slope_min),
        format!("log-log slope {} (need ≥ {})", fmt_opt(slope), x.slope_min),
    ));

    if x.mutations {
        let mut csv = String::from("mutation,slope,breaks_order\n");
        for (name, coeffs) in CascadeCoefficients::mutations(x.mutation_delta) {
            let s = residual_from_parts(&run, &fam, &sols, &coeffs)?.slope;
            let breaks = s.map_or(true, |s| s < x.slope_min);
            let _ = writeln!(csv, "{name},{},{breaks}", fmt_opt(s));
            out.checks.push(Check::new(
                format!("mutation {name}"),
                breaks,
                format!("slope {} with the coefficient shifted by {}", fmt_opt(s), x.mutation_delta),
            ));
        }
        out.artifacts.push(Artifact::text("mutations.csv", csv));
    }

    if x.stencil {
        let mut csv = String::from("index,eps,error\n");
        for idx in &x.stencil_indices {
            let mi = MultiIndex::new(idx)?;
            let w = run.term(&mi, &default)?;
            let mut errs = Vec::with_capacity(x.stencil_eps.len());
            for &e in &x.stencil_eps {
                let est = stencil_derivative(&m, &fam, &mi, e, t, &opts)?;
                let err = est.distance(&w);
                let label: Vec<String> = mi.indices().iter().map(|i| (i + 1).to_string()).collect();
                let _ = writeln!(csv, "w{},{:.6e},{:.17e}", label.join(""), e, err);
                errs.push(err);
            }
            let s = loglog_slope(&x.stencil_eps, &errs);
            let [lo, hi] = x.stencil_slope;
            out.checks.push(Check::new(
                format!("stencil {:?}", mi.indices()),
                s.is_some_and(|s| (lo..=hi).contains(&s)),
                format!("ε-slope {} (need [{lo}, {hi}]), |w| = {:.3e}", fmt_opt(s), w.l2_norm()),
            ));
        }
        out.artifacts.push(Artifact::text("stencil.csv", csv));
    }
    Ok(out)
}

fn fmt_opt(s: Option<f64>) -> String {
    s.map_or_else(|| "NaN".into(), |s| format!("{s:.6}"))
}

// ---------------------------------------------------------------- transport

/// `z·(1 + a sin(k·x − ωt)) + i(a/2) z cos(k·x − ωt)`.
fn wavy(z: Spinor, a: f64, k: [f64; 3], omega: f64) -> AnalyticBackground<impl Fn(f64, &[f64; 3]) -> Spinor + Sync> {
    AnalyticBackground {
        name: format!("wave a = {a}, k = {k:?}, omega = {omega}"),
        field: move |t: f64, x: &[f64; 3]| {
            let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2] - omega * t;
            z * Complex64::new(1.0 + a * ph.sin(), 0.5 * a * ph.cos())
        },
    }
}

fn transport(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome, RunError> {
    let t = &cfg.transport;
    let opts = t.integrator.options();
    let zoo = builtin_zoo();
    let mut csv = String::from("trial,model,tau,xi1,xi2,xi3,kernel_leak,det_modulus,det_lower_bound,max_norm\n");
    let (mut leak, mut det_min, mut bound_ok) = (0.0f64, f64::INFINITY, true);
    for trial in 0..t.rays {
        let xi = random_unit(rng);
        let tau = rng.gen_range(0.5..2.0);
        let eta = Covector::new(tau, xi.map(|a| a * tau));
        let ray = LightRay::new(rng.gen_range(0.0..0.5), std::array::from_fn(|_| rng.gen_range(-1.0..1.0)), eta)
            .map_err(|e| RunError::Numerical(e.to_string()))?;
        let z = random_spinor(rng) * re(t.background_amplitude);
        let bg = wavy(z, t.modulation, random_unit(rng), 1.3);
        let m = &zoo[trial % zoo.len()];
        let em = end_map(&ray, &bg, m, 0.0, t.s_length, &opts)?;
        leak = leak.max(em.kernel_leak());
        det_min = det_min.min(em.det_modulus);
        bound_ok &= em.det_modulus >= em.det_lower_bound * (1.0 - 1e-9);
        let _ = writeln!(
            csv,
            "{trial},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.6e},{:.17e},{:.17e},{:.17e}",
            m.name(),
            eta.tau,
            eta.xi[0],
            eta.xi[1],
            eta.xi[2],
            em.kernel_leak(),
            em.det_modulus,
            em.det_lower_bound,
            em.max_norm
        );
    }
    let mut checks = vec![
        Check::new(
            "kernel invariance",
            leak <= t.leak_tol,
            format!("max leak {leak:.3e} over {} rays (tol {:e})", t.rays, t.leak_tol),
        ),
        Check::new("end map determinant", det_min > t.det_min, format!("min |det| {det_min:.6e} (need > {:e})", t.det_min)),
        Check::new("determinant lower bound", bound_ok, "|det| ≥ exp(−2NΔs) on every ray"),
    ];

    let mut oracle = String::from("model,error\n");
    let mut worst: f64 = 0.0;
    for m in &zoo {
        // along a ray x varies, so modulated models are checked through their
        // unmodulated core
        let frozen = if m.name().contains("modulated") { Nonlinearity::cubic(1.0) } else { m.clone() };
        let eta = Covector::future_lightlike(random_unit(rng));
        let ray = LightRay::new(0.0, [0.0; 3], eta).map_err(|e| RunError::Numerical(e.to_string()))?;
        let z = random_spinor(rng) * re(t.background_amplitude);
        let a = transport_matrix(&eta, &[0.0; 3], &z, &frozen, true);
        let (phi, _) = fundamental_matrix(&ray, &ConstantBackground(z), &frozen, 0.0, t.s_length, &opts)?;
        let err = (phi - expm(&a, t.s_length)).norm();
        worst = worst.max(err);
        let _ = writeln!(oracle, "{},{err:.6e}", frozen.name());
    }
    checks.push(Check::new(
        "exponential oracle",
        worst <= t.oracle_tol,
        format!("max deviation {worst:.3e} from exp(ΔsA) (tol {:e})", t.oracle_tol),
    ));
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::text("rays.csv", csv), Artifact::text("oracle.csv", oracle)],
        divergence: None,
    })
}

// ---------------------------------------------------------------- collide

fn pde_background(cfg: &ExperimentConfig, m: &Nonlinearity, x0: [f64; 3], z: Spinor, width: f64) -> Result<Trajectory, RunError> {
    let g = grid(cfg)?;
    let phi = gaussian(g, 1.0, width, x0, z);
    Ok(solve_nonlinear(m, &phi, cfg.solver.t_final, &cfg.solve_options())?)
}

fn collide(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let c = &cfg.collide;
    let scenario = c.scenario().map_err(RunError::Config)?;
    let m = model(&cfg.model)?;
    let z = spinor_of(&c.z);
    let opts = c.integrator.options();
    let c_list = c.c_list();
    let series = match c.background {
        BackgroundKind::Constant => collision_limit_run(&scenario, &c_list, &ConstantBackground(z), &m, &opts)?,
        BackgroundKind::Wavy => collision_limit_run(
            &scenario,
            &c_list,
            &wavy(z, c.wave_amplitude, c.wave_vector, c.wave_frequency),
            &m,
            &opts,
        )?,
        BackgroundKind::Pde => {
            let traj = pde_background(cfg, &m, c.x0, z, c.pde_width)?;
            collision_limit_run(&scenario, &c_list, &TrajectoryBackground { trajectory: &traj }, &m, &opts)?
        }
    };
    let mut csv = Vec::new();
    series.write_csv(&mut csv).expect("in-memory write");
    let mut incoming = String::from("c,j,deviation,bound,holds\n");
    for e in &series.entries {
        for j in 0..3 {
            let _ = writeln!(
                incoming,
                "{:.17e},{},{:.17e},{:.17e},{}",
                e.c,
                j + 1,
                e.incoming_deviation[j],
                e.incoming_bound[j],
                e.incoming_deviation[j] <= e.incoming_bound[j] * (1.0 + 1e-9) + 1e-14
            );
        }
    }
    let slope = series.slope;
    let decreasing = series.entries.windows(2).all(|w| w[1].error < w[0].error);
    let p = principal_symbol(&scenario.eta0());
    let w0 = series.limit_initial;
    let in_kernel = (p * w0).norm() <= 1e-10 * w0.norm().max(1.0);
    let checks = vec![
        Check::new(
            "collision slope",
            slope.is_some_and(|s| (s - c.slope_target).abs() <= c.slope_tol),
            format!("fitted slope {} (target {} ± {})", fmt_opt(slope), c.slope_target, c.slope_tol),
        ),
        Check::new("monotone error", decreasing, "|w^c(T/2) − w(T/2)| decreases with c"),
        Check::new(
            "incoming bound",
            series.entries.iter().all(|e| e.bound_holds),
            "|σ(w_j^c) − v_j| ≤ (e^{Nc} − 1)|v_j| for every c and j",
        ),
        Check::new("outgoing kernel", in_kernel, "w(0) ∈ ker p(η₀)"),
    ];
    let summary = serde_json::to_vec_pretty(&series).expect("series serializes");
    Ok(Outcome {
        checks,
        artifacts: vec![
            Artifact { file: "collision.csv".into(), bytes: csv },
            Artifact::text("incoming.csv", incoming),
            Artifact { file: "collision.json".into(), bytes: summary },
        ],
        divergence: None,
    })
}

// ---------------------------------------------------------------- reconstruct

fn setup(t_final: f64, c_prime: f64, directions: [[f64; 3]; 2], integrator: &crate::config::IntegratorConfig) -> MeasurementSetup {
    MeasurementSetup {
        t_final,
        c_prime,
        directions,
        transport: integrator.options(),
    }
}

/// `samples` points with `x` uniform in the cube of half-width `x_range`
/// and `|z|` uniform in `[0, z_max]`.
pub fn sample_points(samples: usize, x_range: f64, z_max: f64, rng: &mut ChaCha8Rng) -> Vec<SamplePoint> {
    (0..samples)
        .map(|_| {
            let x = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0) * x_range);
            let dir = random_spinor(rng).normalize();
            let r = rng.gen_range(0.0..=1.0) * z_max;
            SamplePoint { x, z: dir * re(r) }
        })
        .collect()
}

fn reconstruct(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Outcome, RunError> {
    let r = &cfg.reconstruct;
    let setup = setup(r.t_final, r.c_prime, r.directions, &r.integrator);
    let points = sample_points(r.samples, r.x_range, r.z_max, rng);
    let mut csv = String::from("model,sample,x1,x2,x3,z_norm,abs_error,rel_error\n");
    let mut out = Outcome::default();
    for mc in &r.models {
        let m = model(mc)?;
        let mut worst: f64 = 0.0;
        for (k, p) in points.iter().enumerate() {
            let (point, abs, rel, set) = match r.background {
                BackgroundKind::Pde => {
                    let traj = pde_background(cfg, &m, p.x, p.z, r.pde_width)?;
                    let bg = TrajectoryBackground { trajectory: &traj };
                    let probe = LightRay {
                        t0: 0.0,
                        x0: p.x,
                        eta: Covector::future_lightlike(r.directions[0]),
                    };
                    let z = bg.sample(&probe, &[0.0])?[0];
                    let point = SamplePoint { x: p.x, z };
                    let set = forward_measurements(&m, &setup, &point, &bg)?;
                    let form = assemble_trilinear(&set)?.standard();
                    let exact = StandardTrilinear::exact(&m, &point.x, &point.z);
                    let abs = form.max_distance(&exact);
                    let scale = exact.max_abs();
                    (point, abs, if scale > 0.0 { abs / scale } else { abs }, Some(set))
                }
                _ => {
                    let rt = round_trip(&m, &setup, p)?;
                    let set = if r.save_measurements && k == 0 {
                        Some(forward_measurements(&m, &setup, p, &ConstantBackground(p.z))?)
                    } else {
                        None
                    };
                    (*p, rt.abs_error, rt.rel_error, set)
                }
            };
            worst = worst.max(rel);
            let _ = writeln!(
                csv,
                "{},{k},{:.17e},{:.17e},{:.17e},{:.17e},{:.6e},{:.6e}",
                m.name(),
                point.x[0],
                point.x[1],
                point.x[2],
                point.z.norm(),
                abs,
                rel
            );
            if let (true, 0, Some(set)) = (r.save_measurements, k, set) {
                out.artifacts.push(Artifact::text(
                    &format!("measurements-{}.json", m.name()),
                    set.to_json().expect("measurements serialize"),
                ));
            }
        }
        out.checks.push(Check::new(
            format!("round trip {}", m.name()),
            worst < r.rel_tol,
            format!("max relative error {worst:.3e} over {} points (tol {:e})", points.len(), r.rel_tol),
        ));
    }
    out.artifacts.insert(0, Artifact::text("roundtrip.csv", csv));
    Ok(out)
}

// ---------------------------------------------------------------- compare

fn compare(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let c = &cfg.compare;
    let m1 = model(&c.model_1)?;
    let m2 = model(&c.model_2)?;
    let points: Vec<SamplePoint> = c.points.iter().map(|p| SamplePoint { x: p.x, z: spinor_of(&p.z) }).collect();
    let report = uniqueness_compare(&m1, &m2, &points, &setup(c.t_final, 1.0, c.directions, &c.integrator))?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).expect("in-memory write");
    let mut checks = Vec::new();
    for (k, (row, want)) in report.rows.iter().zip(&c.expect).enumerate() {
        let want = if want == "same" { Verdict::Same } else { Verdict::Different };
        checks.push(Check::new(
            format!("verdict point {k}"),
            row.verdict == want,
            format!("|z| = {:.3}: {} (expected {want}), discrepancy {:.3e}", row.point.z.norm(), row.verdict, row.discrepancy),
        ));
    }
    Ok(Outcome {
        checks,
        artifacts: vec![
            Artifact { file: "compare.csv".into(), bytes: csv },
            Artifact {
                file: "report.json".into(),
                bytes: serde_json::to_vec_pretty(&report).expect("report serializes"),
            },
        ],
        divergence: None,
    })
}
