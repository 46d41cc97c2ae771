//! Experiment configuration files (TOML).
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Unknown keys are collected and rejected together with all range
//! violations.

use diraclab::nonlinearity::{build_sum, ModelSpec, Nonlinearity, BUILTIN_MODELS};
use diraclab::transport::{AdmissibleDirection, CollisionScenario, TransportOptions};
use diraclab::{Covector, Spinor};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyAlgebra,
    Expand,
    Transport,
    Collide,
    Reconstruct,
    Compare,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::VerifyAlgebra,
        Experiment::Expand,
        Experiment::Transport,
        Experiment::Collide,
        Experiment::Reconstruct,
        Experiment::Compare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::VerifyAlgebra => "verify-algebra",
            Experiment::Expand => "expand",
            Experiment::Transport => "transport",
            Experiment::Collide => "collide",
            Experiment::Reconstruct => "reconstruct",
            Experiment::Compare => "compare",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single model table or a list of tables that are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Single(ModelSpec),
    Sum(Vec<ModelSpec>),
}

impl ModelConfig {
    pub fn named(name: &str) -> Self {
        ModelConfig::Single(ModelSpec::named(name))
    }

    pub fn specs(&self) -> &[ModelSpec] {
        match self {
            ModelConfig::Single(s) => std::slice::from_ref(s),
            ModelConfig::Sum(v) => v,
        }
    }

    pub fn build(&self) -> Result<Nonlinearity, String> {
        build_sum(self.specs()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub n: usize,
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 32, length: 16.0 * PI }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub t_final: f64,
    /// Time steps per unit of `t_final`; `dt = t_final / steps`.
    pub steps: usize,
    pub blowup_guard: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            steps: 256,
            blowup_guard: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgebraConfig {
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for AlgebraConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandConfig {
    pub base_amplitude: f64,
    pub base_width: f64,
    /// Number of perturbation directions (1 to 3).
    pub directions: usize,
    pub weights: Vec<f64>,
    /// Largest admissible `max |φ_ε − φ|` over the sweep.
    pub amplitude_bound: f64,
    pub support_tol: f64,
    pub eps_max: f64,
    pub eps_min: f64,
    pub eps_count: usize,
    pub slope_min: f64,
    pub mutations: bool,
    pub mutation_delta: f64,
    pub stencil: bool,
    pub stencil_eps: Vec<f64>,
    pub stencil_indices: Vec<Vec<usize>>,
    pub stencil_slope: [f64; 2],
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self {
            base_amplitude: 1.0,
            base_width: 3.0,
            directions: 3,
            weights: vec![1.0, 0.8, 0.6],
            amplitude_bound: 10.0,
            support_tol: 1e-6,
            eps_max: 0.2,
            eps_min: 0.02,
            eps_count: 6,
            slope_min: 3.7,
            mutations: true,
            mutation_delta: 1.0,
            stencil: true,
            stencil_eps: vec![0.1, 0.05, 0.025, 0.0125],
            stencil_indices: vec![vec![0], vec![0, 1], vec![0, 1, 2]],
            stencil_slope: [1.8, 2.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub max_step: f64,
    pub min_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let d = TransportOptions::default();
        Self {
            max_step: d.max_step,
            min_steps: d.min_steps,
        }
    }
}

impl IntegratorConfig {
    pub fn options(&self) -> TransportOptions {
        TransportOptions {
            max_step: self.max_step,
            min_steps: self.min_steps,
            include_mass: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    pub rays: usize,
    pub s_length: f64,
    pub background_amplitude: f64,
    pub modulation: f64,
    pub leak_tol: f64,
    pub det_min: f64,
    pub oracle_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            rays: 50,
            s_length: 0.5,
            background_amplitude: 0.5,
            modulation: 0.3,
            leak_tol: 1e-8,
            det_min: 1e-6,
            oracle_tol: 1e-9,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    /// `ξ_j = s_j e_j`, `k_j = s_j ξ₀_j`, with `s⊙ξ₀` in the admissible set.
    Admissible,
    /// `ξ_j` and `k_j` given directly.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundKind {
    Constant,
    Wavy,
    Pde,
}

/// Spinor as four `[re, im]` pairs.
pub type SpinorPairs = [[f64; 2]; 4];

pub fn spinor_of(p: &SpinorPairs) -> Spinor {
    Spinor::from_fn(|j, _| Complex64::new(p[j][0], p[j][1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollideConfig {
    pub scenario: ScenarioMode,
    pub xi0: [f64; 3],
    pub signs: [f64; 3],
    pub xi: [[f64; 3]; 3],
    pub k: [f64; 3],
    pub x0: [f64; 3],
    pub t_final: f64,
    /// `v_j = (a_re + i a_im) a_j + (b_re + i b_im) b_j` in the kernel basis
    /// of `η_j`, given as `[a_re, a_im, b_re, b_im]`.
    pub v: [[f64; 4]; 3],
    pub c_prime: f64,
    pub background: BackgroundKind,
    pub z: SpinorPairs,
    pub wave_amplitude: f64,
    pub wave_vector: [f64; 3],
    pub wave_frequency: f64,
    pub pde_width: f64,
    /// `c = 2^{-m} T` for `m` in this inclusive range.
    pub c_exponents: [u32; 2],
    pub slope_target: f64,
    pub slope_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for CollideConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioMode::Admissible,
            xi0: AdmissibleDirection::reference(),
            signs: [1.0; 3],
            xi: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            k: AdmissibleDirection::reference(),
            x0: [0.1, -0.2, 0.3],
            t_final: 1.0,
            v: [[0.8, 0.0, 0.0, 0.5], [0.8, 0.1, 0.0, 0.5], [0.8, 0.2, 0.0, 0.5]],
            c_prime: 1.0,
            background: BackgroundKind::Constant,
            z: [[0.5, 0.1], [0.0, 0.2], [0.3, 0.0], [0.1, -0.1]],
            wave_amplitude: 0.3,
            wave_vector: [0.5, -1.0, 0.5],
            wave_frequency: 1.0,
            pde_width: 5.0,
            c_exponents: [3, 10],
            slope_target: 1.0,
            slope_tol: 0.2,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl CollideConfig {
    /// The collision scenario, validated.
    pub fn scenario(&self) -> Result<CollisionScenario, String> {
        let (xi, k) = match self.scenario {
            ScenarioMode::Admissible => {
                let d = AdmissibleDirection::new(self.xi0, self.signs).map_err(|e| e.to_string())?;
                (d.incoming(), d.coefficients())
            }
            ScenarioMode::Explicit => (self.xi, self.k),
        };
        let mut v = [Spinor::zeros(); 3];
        for j in 0..3 {
            let basis = diraclab::algebra::kernel_basis(&Covector::new(1.0, xi[j]))
                .map_err(|e| format!("collide.xi[{j}]: {e}"))?;
            let [ar, ai, br, bi] = self.v[j];
            v[j] = basis.a * Complex64::new(ar, ai) + basis.b * Complex64::new(br, bi);
        }
        let s = CollisionScenario {
            xi,
            k,
            x0: self.x0,
            t_final: self.t_final,
            v,
            c_prime: self.c_prime,
        };
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }

    pub fn c_list(&self) -> Vec<f64> {
        (self.c_exponents[0]..=self.c_exponents[1])
            .map(|m| self.t_final * 0.5f64.powi(m as i32))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructConfig {
    pub models: Vec<ModelConfig>,
    pub samples: usize,
    pub z_max: f64,
    pub x_range: f64,
    pub t_final: f64,
    pub c_prime: f64,
    /// The two outgoing directions for the all-plus sign pattern.
    pub directions: [[f64; 3]; 2],
    pub background: BackgroundKind,
    pub pde_width: f64,
    pub rel_tol: f64,
    pub save_measurements: bool,
    pub integrator: IntegratorConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            models: BUILTIN_MODELS.iter().map(|n| ModelConfig::named(n)).collect(),
            samples: 10,
            z_max: 1.0,
            x_range: 2.0,
            t_final: 1.0,
            c_prime: 1.0,
            directions: [AdmissibleDirection::reference(), AdmissibleDirection::reference_alt()],
            background: BackgroundKind::Constant,
            pde_width: 6.0,
            rel_tol: 1e-5,
            save_measurements: false,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub x: [f64; 3],
    pub z: SpinorPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub model_1: ModelConfig,
    pub model_2: ModelConfig,
    pub points: Vec<PointConfig>,
    /// Expected verdict per point ("same" or "different"); empty skips the
    /// check.
    pub expect: Vec<String>,
    pub t_final: f64,
    pub directions: [[f64; 3]; 2],
    pub integrator: IntegratorConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        // |z| = 0.5
        let r = 0.5 / (0.3f64 * 0.3 + 0.1 * 0.1 + 0.2 * 0.2 + 0.25 * 0.25 + 0.1 * 0.1 + 0.2 * 0.2).sqrt();
        Self {
            model_1: ModelConfig::named("soler"),
            model_2: ModelConfig::Sum(vec![ModelSpec::named("soler"), ModelSpec::named("quintic")]),
            points: vec![
                PointConfig {
                    x: [0.2, -0.1, 0.4],
                    z: [[0.0; 2]; 4],
                },
                PointConfig {
                    x: [0.2, -0.1, 0.4],
                    z: [[0.3 * r, 0.1 * r], [0.0, 0.2 * r], [0.25 * r, 0.0], [0.1 * r, -0.2 * r]],
                },
            ],
            expect: vec!["same".into(), "different".into()],
            t_final: 1.0,
            directions: [AdmissibleDirection::reference(), AdmissibleDirection::reference_alt()],
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub algebra: AlgebraConfig,
    pub expand: ExpandConfig,
    pub transport: TransportConfig,
    pub collide: CollideConfig,
    pub reconstruct: ReconstructConfig,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            out: None,
            model: ModelConfig::named("soler"),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            algebra: AlgebraConfig::default(),
            expand: ExpandConfig::default(),
            transport: TransportConfig::default(),
            collide: CollideConfig::default(),
            reconstruct: ReconstructConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Table paths whose keys are model parameters rather than fixed fields.
fn is_model_path(path: &str) -> bool {
    path == "model" || path.starts_with("model.") || path.contains(".model_") || path.starts_with("reconstruct.models")
}

/// Parses and validates a configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let parsed: Result<ExperimentConfig, _> = serde_ignored::deserialize(de, |path| {
        let p = path.to_string();
        if !is_model_path(&p) {
            unknown.push(format!("unknown key `{p}`"));
        }
    });
    let mut errors = unknown;
    match parsed {
        Ok(cfg) => {
            errors.extend(cfg.validate());
            if errors.is_empty() {
                Ok(cfg)
            } else {
                Err(ConfigErrors(errors))
            }
        }
        Err(e) => {
            errors.push(e.to_string().trim().to_string());
            Err(ConfigErrors(errors))
        }
    }
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn solve_options(&self) -> diraclab::solver::SolveOptions {
        diraclab::solver::SolveOptions {
            dt: self.solver.t_final / self.solver.steps as f64,
            record_stride: 1,
            blowup_guard: self.solver.blowup_guard,
        }
    }

    /// Every range violation, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                e.push(msg);
            }
        };
        let positive = |x: f64| x > 0.0 && x.is_finite();

        let model = |m: &ModelConfig, at: &str, e: &mut Vec<String>| {
            if let Err(err) = m.build() {
                e.push(format!("{at}: {err}"));
            }
        };
        let mut model_errors = Vec::new();
        model(&self.model, "model", &mut model_errors);
        for (i, m) in self.reconstruct.models.iter().enumerate() {
            model(m, &format!("reconstruct.models[{i}]"), &mut model_errors);
        }
        model(&self.compare.model_1, "compare.model_1", &mut model_errors);
        model(&self.compare.model_2, "compare.model_2", &mut model_errors);

        let g = &self.grid;
        check(
            g.n >= 8 && g.n <= 256 && g.n.is_power_of_two(),
            format!("grid.n = {} must be a power of two in [8, 256]", g.n),
        );
        check(positive(g.length), format!("grid.length = {} must be positive", g.length));
        let s = &self.solver;
        check(positive(s.t_final), format!("solver.t_final = {} must be positive", s.t_final));
        check(
            s.t_final <= 0.25 * g.length,
            format!("solver.t_final = {} exceeds grid.length/4 = {}", s.t_final, 0.25 * g.length),
        );
        check(s.steps >= 1 && s.steps <= 1 << 20, format!("solver.steps = {} must be in [1, 2^20]", s.steps));
        check(positive(s.blowup_guard), format!("solver.blowup_guard = {} must be positive", s.blowup_guard));

        let a = &self.algebra;
        check(a.samples >= 1, "algebra.samples must be at least 1".into());
        check(positive(a.tolerance), format!("algebra.tolerance = {} must be positive", a.tolerance));

        let x = &self.expand;
        check(
            (1..=3).contains(&x.directions),
            format!("expand.directions = {} must be 1, 2 or 3", x.directions),
        );
        check(
            x.weights.len() >= x.directions,
            format!("expand.weights has {} entries, need {}", x.weights.len(), x.directions),
        );
        check(positive(x.base_width), format!("expand.base_width = {} must be positive", x.base_width));
        check(x.base_amplitude.is_finite(), "expand.base_amplitude must be finite".into());
        check(positive(x.amplitude_bound), format!("expand.amplitude_bound = {} must be positive", x.amplitude_bound));
        check(positive(x.support_tol), format!("expand.support_tol = {} must be positive", x.support_tol));
        check(
            positive(x.eps_min) && x.eps_min < x.eps_max && x.eps_max <= 1.0,
            format!("expand.eps_min = {}, eps_max = {} must satisfy 0 < eps_min < eps_max ≤ 1", x.eps_min, x.eps_max),
        );
        check(x.eps_count >= 2, format!("expand.eps_count = {} must be at least 2", x.eps_count));
        check(
            x.stencil_eps.len() >= 2 && x.stencil_eps.iter().all(|&e| positive(e) && e <= 1.0),
            "expand.stencil_eps needs at least two values in (0, 1]".into(),
        );
        for idx in &x.stencil_indices {
            check(
                !idx.is_empty() && idx.len() <= 3 && idx.iter().all(|&i| i < x.directions),
                format!("expand.stencil_indices entry {idx:?} must have 1 to 3 labels below {}", x.directions),
            );
        }
        check(
            x.stencil_slope[0] < x.stencil_slope[1],
            "expand.stencil_slope must be an increasing pair".into(),
        );
        check(positive(x.mutation_delta), "expand.mutation_delta must be positive".into());

        let t = &self.transport;
        check(t.rays >= 1, "transport.rays must be at least 1".into());
        check(positive(t.s_length), format!("transport.s_length = {} must be positive", t.s_length));
        for (name, v) in [("leak_tol", t.leak_tol), ("det_min", t.det_min), ("oracle_tol", t.oracle_tol)] {
            check(positive(v), format!("transport.{name} = {v} must be positive"));
        }
        check_integrator(&t.integrator, "transport.integrator", &mut check);

        let c = &self.collide;
        if let Err(err) = c.scenario() {
            check(false, format!("collide: {err}"));
        }
        check(
            c.c_exponents[0] >= 2 && c.c_exponents[0] < c.c_exponents[1] && c.c_exponents[1] <= 30,
            format!("collide.c_exponents = {:?} must be an increasing pair in [2, 30]", c.c_exponents),
        );
        check(positive(c.slope_tol), "collide.slope_tol must be positive".into());
        check(positive(c.pde_width), "collide.pde_width must be positive".into());
        if c.background == BackgroundKind::Pde {
            check(
                (c.t_final - s.t_final).abs() < 1e-12,
                format!("collide.t_final = {} must equal solver.t_final = {} for a PDE background", c.t_final, s.t_final),
            );
        }
        check_integrator(&c.integrator, "collide.integrator", &mut check);

        let r = &self.reconstruct;
        check(!r.models.is_empty(), "reconstruct.models must not be empty".into());
        check(r.samples >= 1, "reconstruct.samples must be at least 1".into());
        check(
            r.z_max >= 0.0 && r.z_max.is_finite(),
            format!("reconstruct.z_max = {} must be non-negative", r.z_max),
        );
        check(r.x_range >= 0.0, "reconstruct.x_range must be non-negative".into());
        check(positive(r.t_final), "reconstruct.t_final must be positive".into());
        check(r.c_prime != 0.0 && r.c_prime.is_finite(), "reconstruct.c_prime must be nonzero".into());
        check(positive(r.rel_tol), "reconstruct.rel_tol must be positive".into());
        check(positive(r.pde_width), "reconstruct.pde_width must be positive".into());
        check(r.background != BackgroundKind::Wavy, "reconstruct.background must be constant or pde".into());
        if r.background == BackgroundKind::Pde {
            check(
                (r.t_final - s.t_final).abs() < 1e-12,
                format!("reconstruct.t_final = {} must equal solver.t_final = {} for a PDE background", r.t_final, s.t_final),
            );
        }
        for (i, d) in r.directions.iter().enumerate() {
            if let Err(err) = AdmissibleDirection::new(*d, [1.0; 3]) {
                check(false, format!("reconstruct.directions[{i}]: {err}"));
            }
        }
        check_integrator(&r.integrator, "reconstruct.integrator", &mut check);

        let m = &self.compare;
        check(!m.points.is_empty(), "compare.points must not be empty".into());
        check(
            m.expect.is_empty() || m.expect.len() == m.points.len(),
            format!("compare.expect has {} entries for {} points", m.expect.len(), m.points.len()),
        );
        for v in &m.expect {
            check(v == "same" || v == "different", format!("compare.expect entry `{v}` must be same or different"));
        }
        check(positive(m.t_final), "compare.t_final must be positive".into());
        for (i, d) in m.directions.iter().enumerate() {
            if let Err(err) = AdmissibleDirection::new(*d, [1.0; 3]) {
                check(false, format!("compare.directions[{i}]: {err}"));
            }
        }
        check_integrator(&m.integrator, "compare.integrator", &mut check);

        e.extend(model_errors);
        e
    }
}

fn check_integrator(i: &IntegratorConfig, at: &str, check: &mut impl FnMut(bool, String)) {
    check(
        i.max_step > 0.0 && i.max_step <= 0.1,
        format!("{at}.max_step = {} must be in (0, 0.1]", i.max_step),
    );
    check(i.min_steps >= 1, format!("{at}.min_steps must be at least 1"));
}

fn section<T: Serialize>(t: &T) -> toml::Value {
    toml::Value::try_from(t).expect("defaults serialize")
}

/// Default values of one experiment's sections, as TOML.
pub fn default_section(exp: Experiment) -> String {
    let d = ExperimentConfig::default();
    let table: BTreeMap<&str, toml::Value> = match exp {
        Experiment::VerifyAlgebra => [("algebra", section(&d.algebra))].into(),
        Experiment::Expand => [
            ("model", section(&d.model)),
            ("grid", section(&d.grid)),
            ("solver", section(&d.solver)),
            ("expand", section(&d.expand)),
        ]
        .into(),
        Experiment::Transport => [("transport", section(&d.transport))].into(),
        Experiment::Collide => [("model", section(&d.model)), ("collide", section(&d.collide))].into(),
        Experiment::Reconstruct => [("reconstruct", section(&d.reconstruct))].into(),
        Experiment::Compare => [("compare", section(&d.compare))].into(),
    };
    toml::to_string(&table).expect("defaults serialize")
}
