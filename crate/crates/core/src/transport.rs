//! Bicharacteristics, principal-symbol transport and the collision-limit
//! scheme.
//!
//! Along a bicharacteristic `Γ(s) = (y₀, η) + 2s(τ, −ξ, 0, 0)` the principal
//! symbol of a linearized wave solves `dσ/ds = A(Γ(s)) σ` with
//!
//! ```text
//! A(y, η) = i(τ − α·ξ)(β + F′(u(y))).
//! ```
//!
//! `F′(u)` is only real-linear for models involving `z̄`, so `A` is handled
//! as a real 8×8 matrix acting on realified spinors.

use crate::algebra::{
    alpha_dot, beta, kernel_basis, operator_norm, principal_symbol, real_frame, realify, realify_matrix, complexify,
    AlgebraError, Covector, Matrix4C, RealMap, RealSpinor, Spinor,
};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{loglog_slope, running_slopes};
use crate::serial;
use crate::solver::{sample_along_ray, SolverError, Trajectory};
use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Relative tolerance for kernel membership of scenario spinors.
pub const KERNEL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("step size underflow on [{s0}, {s1}]")]
    StepUnderflow { s0: f64, s1: f64 },
    #[error("invalid parameter interval [{s0}, {s1}]")]
    InvalidInterval { s0: f64, s1: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("direction {xi0:?} is not in the admissible set: {reason}")]
    NotAdmissible { xi0: [f64; 3], reason: String },
}

/// The bicharacteristic `Γ(s) = (y₀, η) + 2s(τ, −ξ, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightRay {
    pub t0: f64,
    pub x0: [f64; 3],
    pub eta: Covector,
}

/// A point of a bicharacteristic together with its (constant) covector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPoint {
    pub t: f64,
    pub x: [f64; 3],
    pub eta: Covector,
}

impl LightRay {
    pub fn new(t0: f64, x0: [f64; 3], eta: Covector) -> Result<Self, AlgebraError> {
        if !eta.is_lightlike() {
            return Err(AlgebraError::NotLightlike { tau: eta.tau, xi: eta.xi });
        }
        Ok(Self { t0, x0, eta })
    }

    pub fn is_future(&self) -> bool {
        self.eta.is_future()
    }

    /// `bicharacteristic_point`: the affine formula at parameter `s`.
    pub fn point(&self, s: f64) -> RayPoint {
        let Covector { tau, xi } = self.eta;
        RayPoint {
            t: self.t0 + 2.0 * s * tau,
            x: [
                self.x0[0] - 2.0 * s * xi[0],
                self.x0[1] - 2.0 * s * xi[1],
                self.x0[2] - 2.0 * s * xi[2],
            ],
            eta: self.eta,
        }
    }

    /// Parameter at which the ray reaches time `t`.
    pub fn s_at_time(&self, t: f64) -> f64 {
        (t - self.t0) / (2.0 * self.eta.tau)
    }
}

/// Values of the background solution `u` along rays.
pub trait Background: Sync {
    fn describe(&self) -> String;

    /// `u(Γ(s))` for every `s`.
    fn sample(&self, ray: &LightRay, s: &[f64]) -> Result<Vec<Spinor>, TransportError>;
}

/// `u ≡ z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBackground(pub Spinor);

impl Background for ConstantBackground {
    fn describe(&self) -> String {
        format!("constant {:?}", serial::spinor_pairs(&self.0))
    }

    fn sample(&self, _ray: &LightRay, s: &[f64]) -> Result<Vec<Spinor>, TransportError> {
        Ok(vec![self.0; s.len()])
    }
}

/// A prescribed smooth field `u(t, x)`.
pub struct AnalyticBackground<F> {
    pub name: String,
    pub field: F,
}

impl<F: Fn(f64, &[f64; 3]) -> Spinor + Sync> Background for AnalyticBackground<F> {
    fn describe(&self) -> String {
        format!("analytic {}", self.name)
    }

    fn sample(&self, ray: &LightRay, s: &[f64]) -> Result<Vec<Spinor>, TransportError> {
        Ok(s.iter()
            .map(|&si| {
                let p = ray.point(si);
                (self.field)(p.t, &p.x)
            })
            .collect())
    }
}

/// Background read from a PDE trajectory by Fourier interpolation.
pub struct TrajectoryBackground<'a> {
    pub trajectory: &'a Trajectory,
}

impl Background for TrajectoryBackground<'_> {
    fn describe(&self) -> String {
        format!(
            "trajectory of `{}` on n = {}, L = {}",
            self.trajectory.model, self.trajectory.grid.n, self.trajectory.grid.length
        )
    }

    fn sample(&self, ray: &LightRay, s: &[f64]) -> Result<Vec<Spinor>, TransportError> {
        Ok(sample_along_ray(self.trajectory, ray, s)?)
    }
}

/// `A = i(τ − α·ξ)(β + F′(x, u))` on realified spinors. With
/// `include_mass = false` the `β` term is dropped.
pub fn transport_matrix(eta: &Covector, x: &[f64; 3], u: &Spinor, model: &Nonlinearity, include_mass: bool) -> RealMap {
    let i = Complex64::new(0.0, 1.0);
    let left = (Matrix4C::identity() * Complex64::new(eta.tau, 0.0) - alpha_dot(&eta.xi)) * i;
    let mut right = model.jacobian(x, u);
    if include_mass {
        right += realify_matrix(&beta());
    }
    realify_matrix(&left) * right
}

/// Step control of the transport integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    /// Upper bound on the RK4 step.
    pub max_step: f64,
    /// Lower bound on the number of steps over any interval.
    pub min_steps: usize,
    /// Keep the `β` term of `A` (switch off only in tests).
    pub include_mass: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            max_step: 1.0 / 1024.0,
            min_steps: 64,
            include_mass: true,
        }
    }
}

impl TransportOptions {
    pub fn halved(&self) -> Self {
        Self {
            max_step: 0.5 * self.max_step,
            min_steps: 2 * self.min_steps,
            ..*self
        }
    }
}

/// Transported symbol on the RK4 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub s_grid: Vec<f64>,
    pub values: Vec<Spinor>,
    /// Largest operator norm of `A` over the sampled nodes.
    pub max_norm: f64,
}

impl TransportSolution {
    pub fn terminal(&self) -> Spinor {
        *self.values.last().expect("at least one sample")
    }
}

/// The transport matrix sampled on an RK4 grid over `[s0, s1]`; reusable
/// for many initial values on the same ray.
pub struct RayCoefficients {
    ray: LightRay,
    s0: f64,
    s1: f64,
    h: f64,
    steps: usize,
    /// `A` at `s0 + k h/2`, `k = 0..=2·steps`.
    nodes: Vec<RealMap>,
    max_norm: f64,
}

impl RayCoefficients {
    /// Samples `A` with `max(min_steps, ⌈(s1−s0)/max_step⌉)` equal steps.
    pub fn new(
        ray: &LightRay,
        background: &dyn Background,
        model: &Nonlinearity,
        s0: f64,
        s1: f64,
        opts: &TransportOptions,
    ) -> Result<Self, TransportError> {
        if !(s1 >= s0) || !s0.is_finite() || !s1.is_finite() {
            return Err(TransportError::InvalidInterval { s0, s1 });
        }
        let len = s1 - s0;
        let steps = if len == 0.0 {
            0
        } else {
            opts.min_steps.max((len / opts.max_step).ceil() as usize).max(1)
        };
        let h = if steps == 0 { 0.0 } else { len / steps as f64 };
        if steps > 0 && h <= 1e-14 * s0.abs().max(s1.abs()).max(1.0) {
            return Err(TransportError::StepUnderflow { s0, s1 });
        }
        let s: Vec<f64> = (0..=2 * steps).map(|k| s0 + 0.5 * h * k as f64).collect();
        let u = background.sample(ray, &s)?;
        let nodes: Vec<RealMap> = s
            .iter()
            .zip(&u)
            .map(|(&si, ui)| transport_matrix(&ray.eta, &ray.point(si).x, ui, model, opts.include_mass))
            .collect();
        let max_norm = nodes.iter().map(operator_norm).fold(0.0, f64::max);
        Ok(Self {
            ray: *ray,
            s0,
            s1,
            h,
            steps,
            nodes,
            max_norm,
        })
    }

    /// Sampled `N = max |A|`.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    fn rk4<const C: usize>(&self, y0: SMatrix<f64, 8, C>, mut record: impl FnMut(f64, &SMatrix<f64, 8, C>)) -> SMatrix<f64, 8, C> {
        let mut y = y0;
        record(self.s0, &y);
        let h = self.h;
        for k in 0..self.steps {
            let (a0, am, a1) = (&self.nodes[2 * k], &self.nodes[2 * k + 1], &self.nodes[2 * k + 2]);
            let k1 = a0 * y;
            let k2 = am * (y + k1 * (0.5 * h));
            let k3 = am * (y + k2 * (0.5 * h));
            let k4 = a1 * (y + k3 * h);
            y += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            record(self.s0 + (k + 1) as f64 * h, &y);
        }
        y
    }

    /// Solution from `σ(s0) = v0`, recorded at every step.
    pub fn propagate(&self, v0: &Spinor) -> TransportSolution {
        let mut s_grid = Vec::with_capacity(self.steps + 1);
        let mut values = Vec::with_capacity(self.steps + 1);
        self.rk4(realify(v0), |s, y| {
            s_grid.push(s);
            values.push(complexify(y));
        });
        TransportSolution {
            s_grid,
            values,
            max_norm: self.max_norm,
        }
    }

    /// `σ(s1)` from `σ(s0) = v0`.
    pub fn terminal(&self, v0: &Spinor) -> Spinor {
        complexify(&self.rk4(realify(v0), |_, _| {}))
    }

    /// Real 8×8 fundamental matrix.
    pub fn fundamental(&self) -> RealMap {
        self.rk4(RealMap::identity(), |_, _| {})
    }

    /// Restriction of the fundamental matrix to `ker p(η)`.
    pub fn end_map(&self) -> Result<EndMap, TransportError> {
        let ambient = self.fundamental();
        let frame = real_frame(&kernel_basis(&self.ray.eta)?);
        let f = SMatrix::<f64, 8, 4>::from_columns(&frame);
        let kernel = f.transpose() * ambient * f;
        Ok(EndMap {
            ambient,
            frame,
            kernel,
            det_modulus: kernel.determinant().abs().sqrt(),
            max_norm: self.max_norm,
            det_lower_bound: (-2.0 * self.max_norm * (self.s1 - self.s0)).exp(),
        })
    }
}

/// Integrates `dσ/ds = A(Γ(s))σ` from `σ(s0) = v0` to `s1` by classical RK4.
pub fn propagate(
    ray: &LightRay,
    background: &dyn Background,
    model: &Nonlinearity,
    v0: &Spinor,
    s0: f64,
    s1: f64,
    opts: &TransportOptions,
) -> Result<TransportSolution, TransportError> {
    Ok(RayCoefficients::new(ray, background, model, s0, s1, opts)?.propagate(v0))
}

/// Real 8×8 fundamental matrix of the transport equation over `[s0, s1]`,
/// with the sampled bound `N = max |A|`.
pub fn fundamental_matrix(
    ray: &LightRay,
    background: &dyn Background,
    model: &Nonlinearity,
    s0: f64,
    s1: f64,
    opts: &TransportOptions,
) -> Result<(RealMap, f64), TransportError> {
    let co = RayCoefficients::new(ray, background, model, s0, s1, opts)?;
    Ok((co.fundamental(), co.max_norm))
}

/// End map of the transport equation on `ker(−τ − α·ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndMap {
    /// Full real 8×8 propagator.
    #[serde(with = "serial::real_map")]
    pub ambient: RealMap,
    /// Orthonormal real frame `{a, ia, b, ib}` of the kernel.
    pub frame: [RealSpinor; 4],
    /// Restriction to the kernel in that frame.
    pub kernel: Matrix4<f64>,
    /// `|det|^{1/2}` of the real 4×4 restriction; equals the modulus of the
    /// complex 2×2 determinant when the map is complex-linear.
    pub det_modulus: f64,
    /// Sampled `N = max |A|` along the ray.
    pub max_norm: f64,
    /// `e^{−2N(s1−s0)}`, a lower bound for `det_modulus`.
    pub det_lower_bound: f64,
}

impl EndMap {
    fn frame_matrix(&self) -> SMatrix<f64, 8, 4> {
        SMatrix::<f64, 8, 4>::from_columns(&self.frame)
    }

    /// Kernel coordinates of a spinor in the kernel.
    pub fn coordinates(&self, v: &Spinor) -> Matrix4x1 {
        self.frame_matrix().transpose() * realify(v)
    }

    pub fn from_coordinates(&self, c: &Matrix4x1) -> Spinor {
        complexify(&(self.frame_matrix() * c))
    }

    /// `‖(I − P)ΦP‖`: how far the propagator moves the kernel off itself.
    pub fn kernel_leak(&self) -> f64 {
        let f = self.frame_matrix();
        let image = self.ambient * f;
        (image - f * (f.transpose() * image)).norm()
    }

    /// The 2×2 complex matrix in the basis `{a, b}` when the restriction is
    /// complex-linear to `tol`.
    pub fn complex_matrix(&self, tol: f64) -> Option<nalgebra::Matrix2<Complex64>> {
        let k = &self.kernel;
        // real 2×2 blocks [[p, −q], [q, p]] encode p + iq
        let mut out = nalgebra::Matrix2::zeros();
        for r in 0..2 {
            for c in 0..2 {
                let b = k.fixed_view::<2, 2>(2 * r, 2 * c);
                if (b[(0, 0)] - b[(1, 1)]).abs() > tol || (b[(0, 1)] + b[(1, 0)]).abs() > tol {
                    return None;
                }
                out[(r, c)] = Complex64::new(b[(0, 0)], b[(1, 0)]);
            }
        }
        Some(out)
    }
}

pub type Matrix4x1 = nalgebra::Vector4<f64>;

/// Propagates the kernel of `p(η)` from `s0` to `s1` and reports the
/// restricted map and its determinant.
pub fn end_map(
    ray: &LightRay,
    background: &dyn Background,
    model: &Nonlinearity,
    s0: f64,
    s1: f64,
    opts: &TransportOptions,
) -> Result<EndMap, TransportError> {
    RayCoefficients::new(ray, background, model, s0, s1, opts)?.end_map()
}

/// A direction `ξ₀` reachable as `η₀ = Σ k_j (1, s_j e_j)` with all
/// `k_j ≠ 0`: `s⊙ξ₀` lies in `M = {(a,b,c): a+b+c = a²+b²+c² = 1, a,b,c ≠ 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleDirection {
    pub signs: [f64; 3],
    pub xi0: [f64; 3],
}

/// Tolerance of the two quadric conditions of `M`.
pub const ADMISSIBLE_TOL: f64 = 1e-10;

impl AdmissibleDirection {
    pub fn new(xi0: [f64; 3], signs: [f64; 3]) -> Result<Self, TransportError> {
        if signs.iter().any(|s| s.abs() != 1.0) {
            return Err(TransportError::NotAdmissible {
                xi0,
                reason: format!("signs {signs:?} must be ±1"),
            });
        }
        let m: [f64; 3] = std::array::from_fn(|j| signs[j] * xi0[j]);
        let lin = m.iter().sum::<f64>() - 1.0;
        let quad = m.iter().map(|a| a * a).sum::<f64>() - 1.0;
        let reason = if lin.abs() > ADMISSIBLE_TOL {
            Some(format!("a + b + c − 1 = {lin:e}"))
        } else if quad.abs() > ADMISSIBLE_TOL {
            Some(format!("a² + b² + c² − 1 = {quad:e}"))
        } else if m.iter().any(|a| (a - 1.0).abs() <= ADMISSIBLE_TOL) {
            Some("a component equals 1".into())
        } else {
            None
        };
        match reason {
            Some(reason) => Err(TransportError::NotAdmissible { xi0, reason }),
            None => Ok(Self { signs, xi0 }),
        }
    }

    /// `(−1/3, 2/3, 2/3)`.
    pub fn reference() -> [f64; 3] {
        [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]
    }

    /// `(2/3, −1/3, 2/3)`.
    pub fn reference_alt() -> [f64; 3] {
        [2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]
    }

    /// Coefficients `k_j = s_j ξ₀_j` of `η₀ = Σ k_j η_j`.
    pub fn coefficients(&self) -> [f64; 3] {
        std::array::from_fn(|j| self.signs[j] * self.xi0[j])
    }

    /// Incoming directions `ξ_j = s_j e_j`.
    pub fn incoming(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|j| {
            let mut e = [0.0; 3];
            e[j] = self.signs[j];
            e
        })
    }
}

/// Three incoming plane-wave directions colliding at `y^c` and the outgoing
/// direction `η₀ = Σ k_j η_j` (rescaled to `τ₀ = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionScenario {
    /// Unit directions `ξ_j`; `η_j = (1, ξ_j)`.
    pub xi: [[f64; 3]; 3],
    pub k: [f64; 3],
    pub x0: [f64; 3],
    pub t_final: f64,
    #[serde(with = "serial::spinor_array3")]
    pub v: [Spinor; 3],
    pub c_prime: f64,
}

impl CollisionScenario {
    /// Scenario for an admissible direction, with `C′ = 1`.
    pub fn from_direction(dir: &AdmissibleDirection, x0: [f64; 3], t_final: f64, v: [Spinor; 3]) -> Result<Self, TransportError> {
        let s = Self {
            xi: dir.incoming(),
            k: dir.coefficients(),
            x0,
            t_final,
            v,
            c_prime: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    fn eta0_raw(&self) -> Covector {
        let tau: f64 = self.k.iter().sum();
        Covector::new(tau, std::array::from_fn(|a| (0..3).map(|j| self.k[j] * self.xi[j][a]).sum()))
    }

    /// Outgoing covector normalized to `τ₀ = 1`.
    pub fn eta0(&self) -> Covector {
        let raw = self.eta0_raw();
        raw.scaled(1.0 / raw.tau)
    }

    pub fn xi0(&self) -> [f64; 3] {
        self.eta0().xi
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        let bad = |m: String| Err(TransportError::InvalidScenario(m));
        if !(self.t_final > 0.0) {
            return bad(format!("terminal time {} must be positive", self.t_final));
        }
        if self.c_prime == 0.0 || !self.c_prime.is_finite() {
            return bad("normalization C′ must be nonzero".into());
        }
        if let Some(j) = self.k.iter().position(|k| *k == 0.0 || !k.is_finite()) {
            return bad(format!("k_{} = {} violates the constraint k_j ≠ 0", j + 1, self.k[j]));
        }
        for (j, xi) in self.xi.iter().enumerate() {
            if !Covector::new(1.0, *xi).is_lightlike() {
                return bad(format!("η_{} = (1, {xi:?}) is not lightlike", j + 1));
            }
        }
        let m = nalgebra::Matrix3::from_fn(|r, c| self.xi[r][c]);
        if m.determinant().abs() < 1e-10 {
            return bad("incoming directions are linearly dependent".into());
        }
        let raw = self.eta0_raw();
        if !raw.is_future() {
            return bad(format!("η₀ = {raw:?} is not future-pointing"));
        }
        if !raw.is_lightlike() {
            return bad(format!("η₀ = {raw:?} is not lightlike"));
        }
        for (j, (v, xi)) in self.v.iter().zip(&self.xi).enumerate() {
            let r = (principal_symbol(&Covector::new(1.0, *xi)) * v).norm();
            if r > KERNEL_TOL * v.norm().max(1.0) {
                return bad(format!("v_{} is not in ker(−1 − α·ξ_{}) (residual {r:e})", j + 1, j + 1));
            }
        }
        Ok(())
    }

    /// `y^c = (2c, x₀ − 2cξ₀)`.
    pub fn collision_point(&self, c: f64) -> ([f64; 3], f64) {
        let p = self.outgoing_ray().point(c);
        (p.x, p.t)
    }

    /// `Γ₀(s) = (2s, x₀ − 2sξ₀, 1, ξ₀)`.
    pub fn outgoing_ray(&self) -> LightRay {
        LightRay {
            t0: 0.0,
            x0: self.x0,
            eta: self.eta0(),
        }
    }

    /// `Γ_j^c(s) = (2s, x_j^c − 2sξ_j, 1, ξ_j)` with `x_j^c = x₀ − 2c(ξ₀ − ξ_j)`.
    pub fn incoming_ray(&self, j: usize, c: f64) -> LightRay {
        let xi0 = self.xi0();
        LightRay {
            t0: 0.0,
            x0: std::array::from_fn(|a| self.x0[a] - 2.0 * c * (xi0[a] - self.xi[j][a])),
            eta: Covector::new(1.0, self.xi[j]),
        }
    }

    /// `1 − α·ξ₀`.
    pub fn outgoing_projector(&self) -> Matrix4C {
        Matrix4C::identity() - alpha_dot(&self.xi0())
    }
}

/// `C′(1 − α·ξ₀) F⁽³⁾(x, u, σ₁, σ₂, σ₃)`.
pub fn collision_initial(
    scenario: &CollisionScenario,
    incoming: &[Spinor; 3],
    x: &[f64; 3],
    u_at_collision: &Spinor,
    model: &Nonlinearity,
) -> Spinor {
    let f3 = model.at(x).third(u_at_collision, &incoming[0], &incoming[1], &incoming[2]);
    scenario.outgoing_projector() * f3 * Complex64::new(scenario.c_prime, 0.0)
}

/// One collision time of a collision-limit sweep.
#[derive(Debug, Clone, Serialize)]
pub struct CollisionEntry {
    pub c: f64,
    #[serde(with = "serial::spinor")]
    pub terminal: Spinor,
    /// `|w^c(T/2) − w(T/2)|`.
    pub error: f64,
    /// `|σ(w_j^c)(Γ_j^c(c)) − v_j|`.
    pub incoming_deviation: [f64; 3],
    /// `(e^{N_j c} − 1)|v_j|` with `N_j` the sampled max of `|A|` on `Γ_j^c`.
    pub incoming_bound: [f64; 3],
    pub bound_holds: bool,
}

/// Result of a collision-limit sweep.
#[derive(Debug, Clone, Serialize)]
pub struct CollisionSeries {
    pub background: String,
    pub entries: Vec<CollisionEntry>,
    /// `w(0) = C′(1 − α·ξ₀) F⁽³⁾(x₀, u(y₀), v₁, v₂, v₃)`.
    #[serde(with = "serial::spinor")]
    pub limit_initial: Spinor,
    /// `w(T/2)`.
    #[serde(with = "serial::spinor")]
    pub limit_terminal: Spinor,
    /// Log-log slope of the error against `c`.
    pub slope: Option<f64>,
}

impl CollisionSeries {
    /// CSV with columns `c,err_norm,slope_running`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "c,err_norm,slope_running")?;
        let cs: Vec<f64> = self.entries.iter().map(|e| e.c).collect();
        let es: Vec<f64> = self.entries.iter().map(|e| e.error).collect();
        let slopes = running_slopes(&cs, &es);
        for (k, e) in self.entries.iter().enumerate() {
            let s = if k == 0 { String::new() } else { format!("{:.6}", slopes[k]) };
            writeln!(out, "{:.17e},{:.17e},{}", e.c, e.error, s)?;
        }
        Ok(())
    }
}

/// Limit branch: `w(0)` from the collision at `y₀` and its transport along
/// `Γ₀` to `s = T/2`.
pub fn collision_limit_value(
    scenario: &CollisionScenario,
    background: &dyn Background,
    model: &Nonlinearity,
    opts: &TransportOptions,
) -> Result<(Spinor, TransportSolution), TransportError> {
    let ray = scenario.outgoing_ray();
    let u0 = background.sample(&ray, &[0.0])?[0];
    let w0 = collision_initial(scenario, &scenario.v, &scenario.x0, &u0, model);
    let sol = propagate(&ray, background, model, &w0, 0.0, 0.5 * scenario.t_final, opts)?;
    Ok((w0, sol))
}

/// For each `c`: transport `v_j` along `Γ_j^c` over `[0, c]`, collide at
/// `y^c`, transport along `Γ₀` over `[c, T/2]`; compare with the limit
/// solution started at `s = 0`.
pub fn collision_limit_run(
    scenario: &CollisionScenario,
    c_list: &[f64],
    background: &dyn Background,
    model: &Nonlinearity,
    opts: &TransportOptions,
) -> Result<CollisionSeries, TransportError> {
    scenario.validate()?;
    let half = 0.5 * scenario.t_final;
    if c_list.is_empty() || c_list.iter().any(|&c| !(c > 0.0 && c < half)) || c_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(TransportError::InvalidScenario(format!(
            "collision times must be decreasing in (0, T/2), got {c_list:?}"
        )));
    }
    let (limit_initial, limit) = collision_limit_value(scenario, background, model, opts)?;
    let limit_terminal = limit.terminal();
    let out_ray = scenario.outgoing_ray();
    let mut entries = Vec::with_capacity(c_list.len());
    for &c in c_list {
        let mut incoming = [Spinor::zeros(); 3];
        let mut dev = [0.0; 3];
        let mut bound = [0.0; 3];
        for j in 0..3 {
            let ray = scenario.incoming_ray(j, c);
            let sol = propagate(&ray, background, model, &scenario.v[j], 0.0, c, opts)?;
            incoming[j] = sol.terminal();
            dev[j] = (incoming[j] - scenario.v[j]).norm();
            bound[j] = (sol.max_norm * c).exp_m1() * scenario.v[j].norm();
        }
        let pc = out_ray.point(c);
        let u_c = background.sample(&out_ray, &[c])?[0];
        let wc = collision_initial(scenario, &incoming, &pc.x, &u_c, model);
        let terminal = propagate(&out_ray, background, model, &wc, c, half, opts)?.terminal();
        entries.push(CollisionEntry {
            c,
            terminal,
            error: (terminal - limit_terminal).norm(),
            incoming_deviation: dev,
            incoming_bound: bound,
            bound_holds: dev.iter().zip(&bound).all(|(d, b)| *d <= b * (1.0 + 1e-9) + 1e-14),
        });
    }
    let cs: Vec<f64> = entries.iter().map(|e| e.c).collect();
    let es: Vec<f64> = entries.iter().map(|e| e.error).collect();
    Ok(CollisionSeries {
        background: background.describe(),
        slope: loglog_slope(&cs, &es),
        entries,
        limit_initial,
        limit_terminal,
    })
}
