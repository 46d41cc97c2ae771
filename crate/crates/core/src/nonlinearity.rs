//! Model nonlinearities `F(x, z)` with exact derivative forms.
//!
//! Every built-in is a sum of terms
//!
//! ```text
//! c · g(x) · q(z)^p · M z,      q(z) = Re(z* G z),
//! ```
//!
//! with `G`, `M` diagonal real 4×4 matrices, `p ∈ {0, 1, 2}` and a smooth
//! modulation `g`. Conjugates enter through `q`, so derivatives are taken in
//! the real sense on ℂ⁴ ≅ ℝ⁸. The k-th derivative form follows the Taylor
//! normalization
//!
//! ```text
//! F(x, z + h) = F(x, z) + Σ_{k=1..3} F⁽ᵏ⁾(x, z; h, …, h) + O(|h|⁴),
//! ```
//!
//! i.e. `F⁽ᵏ⁾ = Dᵏ F / k!` as a symmetric real-multilinear map.

use crate::algebra::{realify, RealMap, Spinor, BETA_DIAG};
use crate::numerics::loglog_slope;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Upper bound on the number of terms in one model.
pub const MAX_TERMS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("derivative order {0} is not supported (expected 1, 2 or 3)")]
    UnsupportedOrder(usize),
    #[error("derivative of order {order} needs {order} directions, got {given}")]
    DirectionCount { order: usize, given: usize },
    #[error("finite-difference step {0} outside [1e-5, 1e-1]")]
    StepOutOfRange(f64),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{param}`")]
    UnknownParameter { model: String, param: String },
    #[error("model has {0} terms, at most {MAX_TERMS} are supported")]
    TooManyTerms(usize),
    #[error("invalid power {0} (expected 0, 1 or 2)")]
    InvalidPower(u8),
}

/// Spatial modulation `g(x)` of a term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Modulation {
    Constant,
    /// `g(x) = offset + amplitude · cos(k·x)`
    Cosine {
        offset: f64,
        amplitude: f64,
        wavevector: [f64; 3],
    },
}

impl Modulation {
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match *self {
            Modulation::Constant => 1.0,
            Modulation::Cosine {
                offset,
                amplitude,
                wavevector: k,
            } => offset + amplitude * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).cos(),
        }
    }
}

/// One term `c · g(x) · q(z)^p · M z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coefficient: f64,
    pub power: u8,
    /// Diagonal of the Hermitian form `G` in `q(z) = Re(z* G z)`.
    pub weight: [f64; 4],
    /// Diagonal of the output matrix `M`.
    pub output: [f64; 4],
    pub modulation: Modulation,
}

const ONES: [f64; 4] = [1.0; 4];

#[inline]
fn form(w: &[f64; 4], a: &Spinor, b: &Spinor) -> f64 {
    (0..4)
        .map(|j| w[j] * (a[j].re * b[j].re + a[j].im * b[j].im))
        .sum()
}

#[inline]
fn diag(m: &[f64; 4], v: &Spinor) -> Spinor {
    Spinor::new(v[0] * m[0], v[1] * m[1], v[2] * m[2], v[3] * m[3])
}

#[inline]
fn scale(v: Spinor, s: f64) -> Spinor {
    v.map(|e| e * s)
}

impl PolyTerm {
    fn value(&self, c: f64, z: &Spinor) -> Spinor {
        let q = form(&self.weight, z, z);
        scale(diag(&self.output, z), c * q.powi(self.power as i32))
    }

    fn first(&self, c: f64, z: &Spinor, a: &Spinor) -> Spinor {
        let (w, m) = (&self.weight, &self.output);
        match self.power {
            0 => scale(diag(m, a), c),
            1 => {
                let q = form(w, z, z);
                scale(diag(m, z), 2.0 * c * form(w, z, a)) + scale(diag(m, a), c * q)
            }
            _ => {
                let q = form(w, z, z);
                scale(diag(m, z), 4.0 * c * q * form(w, z, a)) + scale(diag(m, a), c * q * q)
            }
        }
    }

    fn second(&self, c: f64, z: &Spinor, a: &Spinor, b: &Spinor) -> Spinor {
        let (w, m) = (&self.weight, &self.output);
        match self.power {
            0 => Spinor::zeros(),
            1 => {
                scale(diag(m, z), c * form(w, a, b))
                    + scale(diag(m, b), c * form(w, z, a))
                    + scale(diag(m, a), c * form(w, z, b))
            }
            _ => {
                let q = form(w, z, z);
                let (za, zb) = (form(w, z, a), form(w, z, b));
                scale(diag(m, z), c * (2.0 * q * form(w, a, b) + 4.0 * za * zb))
                    + scale(diag(m, b), 2.0 * c * q * za)
                    + scale(diag(m, a), 2.0 * c * q * zb)
            }
        }
    }

    fn third(&self, c: f64, z: &Spinor, a: &Spinor, b: &Spinor, d: &Spinor) -> Spinor {
        let (w, m) = (&self.weight, &self.output);
        match self.power {
            0 => Spinor::zeros(),
            1 => {
                let k = c / 3.0;
                scale(diag(m, d), k * form(w, a, b))
                    + scale(diag(m, b), k * form(w, a, d))
                    + scale(diag(m, a), k * form(w, b, d))
            }
            _ => {
                let q = form(w, z, z);
                let (za, zb, zd) = (form(w, z, a), form(w, z, b), form(w, z, d));
                let (ab, ad, bd) = (form(w, a, b), form(w, a, d), form(w, b, d));
                let k = 4.0 * c / 3.0;
                let kq = 2.0 * c * q / 3.0;
                scale(diag(m, z), k * (za * bd + zb * ad + zd * ab))
                    + scale(diag(m, d), kq * ab + k * za * zb)
                    + scale(diag(m, b), kq * ad + k * za * zd)
                    + scale(diag(m, a), kq * bd + k * zb * zd)
            }
        }
    }
}

/// A nonlinearity `F(x, z)` with `F(x, 0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    name: String,
    terms: Vec<PolyTerm>,
}

impl Nonlinearity {
    pub fn new(name: impl Into<String>, terms: Vec<PolyTerm>) -> Result<Self, ModelError> {
        if terms.len() > MAX_TERMS {
            return Err(ModelError::TooManyTerms(terms.len()));
        }
        if let Some(t) = terms.iter().find(|t| t.power > 2) {
            return Err(ModelError::InvalidPower(t.power));
        }
        Ok(Self {
            name: name.into(),
            terms,
        })
    }

    /// `F ≡ 0`.
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            terms: Vec::new(),
        }
    }

    /// Mass shift `F(z) = c β z`.
    pub fn linear_mass(c: f64) -> Self {
        Self::single("linear", c, 0, ONES, BETA_DIAG, Modulation::Constant)
    }

    /// Soler cubic `F(z) = g (z*βz) β z`.
    pub fn soler(g: f64) -> Self {
        Self::single("soler", g, 1, BETA_DIAG, BETA_DIAG, Modulation::Constant)
    }

    /// Pointwise cubic `F(z) = g |z|² z`.
    pub fn cubic(g: f64) -> Self {
        Self::single("cubic", g, 1, ONES, ONES, Modulation::Constant)
    }

    /// `F(x, z) = g(x) |z|² z`, by default with `g(x) = 1 + cos(x₁)`.
    pub fn modulated_cubic(coupling: f64, modulation: Modulation) -> Self {
        Self::single("modulated-cubic", coupling, 1, ONES, ONES, modulation)
    }

    pub fn default_modulation() -> Modulation {
        Modulation::Cosine {
            offset: 1.0,
            amplitude: 1.0,
            wavevector: [1.0, 0.0, 0.0],
        }
    }

    /// Quintic `F(z) = g |z|⁴ z`.
    pub fn quintic(g: f64) -> Self {
        Self::single("quintic", g, 2, ONES, ONES, Modulation::Constant)
    }

    fn single(name: &str, c: f64, power: u8, weight: [f64; 4], output: [f64; 4], modulation: Modulation) -> Self {
        Self {
            name: name.into(),
            terms: vec![PolyTerm {
                coefficient: c,
                power,
                weight,
                output,
                modulation,
            }],
        }
    }

    /// Sum of two models; the name joins both with `+`.
    pub fn plus(&self, other: &Nonlinearity) -> Result<Self, ModelError> {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::new(format!("{}+{}", self.name, other.name), terms)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }

    /// True when `F` is complex-linear in `z`, so every derivative is a
    /// complex-multilinear form.
    pub fn is_holomorphic(&self) -> bool {
        self.terms.iter().all(|t| t.power == 0 || t.coefficient == 0.0)
    }

    /// Highest power of `z` among the terms (1, 3 or 5), 0 for `F ≡ 0`.
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| t.coefficient != 0.0)
            .map(|t| 2 * t.power as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// The model frozen at a spatial point; use this in inner loops so that
    /// modulations are evaluated once per point.
    pub fn at(&self, x: &[f64; 3]) -> LocalModel<'_> {
        let mut scale = [0.0; MAX_TERMS];
        for (s, t) in scale.iter_mut().zip(&self.terms) {
            *s = t.coefficient * t.modulation.eval(x);
        }
        LocalModel { model: self, scale }
    }

    pub fn evaluate(&self, x: &[f64; 3], z: &Spinor) -> Spinor {
        self.at(x).value(z)
    }

    /// `F⁽ᵏ⁾(x, z; v₁, …, v_k)` for `k = directions.len()`.
    pub fn derivative(&self, x: &[f64; 3], z: &Spinor, k: usize, directions: &[Spinor]) -> Result<Spinor, ModelError> {
        if !(1..=3).contains(&k) {
            return Err(ModelError::UnsupportedOrder(k));
        }
        if directions.len() != k {
            return Err(ModelError::DirectionCount {
                order: k,
                given: directions.len(),
            });
        }
        let local = self.at(x);
        Ok(match directions {
            [a] => local.first(z, a),
            [a, b] => local.second(z, a, b),
            [a, b, c] => local.third(z, a, b, c),
            _ => unreachable!(),
        })
    }

    /// Realified Jacobian `v ↦ F⁽¹⁾(x, z; v)` as an 8×8 real matrix.
    pub fn jacobian(&self, x: &[f64; 3], z: &Spinor) -> RealMap {
        let local = self.at(x);
        let mut j = RealMap::zeros();
        for r in 0..8 {
            let mut e = Spinor::zeros();
            e[r / 2] = if r % 2 == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 1.0)
            };
            j.set_column(r, &realify(&local.first(z, &e)));
        }
        j
    }
}

/// A [`Nonlinearity`] with its modulations evaluated at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalModel<'a> {
    model: &'a Nonlinearity,
    scale: [f64; MAX_TERMS],
}

impl LocalModel<'_> {
    fn each(&self, f: impl Fn(&PolyTerm, f64) -> Spinor) -> Spinor {
        let mut out = Spinor::zeros();
        for (t, &c) in self.model.terms.iter().zip(&self.scale) {
            if c != 0.0 {
                out += f(t, c);
            }
        }
        out
    }

    pub fn value(&self, z: &Spinor) -> Spinor {
        self.each(|t, c| t.value(c, z))
    }

    pub fn first(&self, z: &Spinor, a: &Spinor) -> Spinor {
        self.each(|t, c| t.first(c, z, a))
    }

    pub fn second(&self, z: &Spinor, a: &Spinor, b: &Spinor) -> Spinor {
        self.each(|t, c| t.second(c, z, a, b))
    }

    pub fn third(&self, z: &Spinor, a: &Spinor, b: &Spinor, d: &Spinor) -> Spinor {
        self.each(|t, c| t.third(c, z, a, b, d))
    }
}

/// Central-difference estimate of `F⁽ᵏ⁾(x, z; v₁, …, v_k)`.
///
/// Nests one symmetric difference per direction,
/// `Σ_{s ∈ {±1}ᵏ} (Π s) F(z + h Σ sᵢvᵢ) / (2h)ᵏ`, and divides by `k!`.
/// Only `F` itself is evaluated, so this is independent of the coded
/// derivative forms. Truncation error is `O(h²)`.
pub fn fd_derivative_oracle(
    model: &Nonlinearity,
    x: &[f64; 3],
    z: &Spinor,
    directions: &[Spinor],
    h: f64,
) -> Result<Spinor, ModelError> {
    let k = directions.len();
    if !(1..=3).contains(&k) {
        return Err(ModelError::UnsupportedOrder(k));
    }
    if !(1e-5..=1e-1).contains(&h) {
        return Err(ModelError::StepOutOfRange(h));
    }
    let mut acc = Spinor::zeros();
    for mask in 0..(1usize << k) {
        let mut point = *z;
        let mut sign = 1.0;
        for (i, d) in directions.iter().enumerate() {
            let s = if mask & (1 << i) != 0 { -1.0 } else { 1.0 };
            sign *= s;
            point += scale(*d, s * h);
        }
        acc += scale(model.evaluate(x, &point), sign);
    }
    let factorial = [1.0, 1.0, 2.0, 6.0][k];
    Ok(acc / Complex64::new((2.0 * h).powi(k as i32) * factorial, 0.0))
}

/// Norms of the cubic Taylor remainder along `h = s·direction`.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorRemainder {
    pub scales: Vec<f64>,
    pub norms: Vec<f64>,
    /// Log-log slope of `norms` against `scales`; `None` when the remainder
    /// vanishes to rounding.
    pub slope: Option<f64>,
}

pub fn taylor_remainder(
    model: &Nonlinearity,
    x: &[f64; 3],
    z: &Spinor,
    direction: &Spinor,
    scales: &[f64],
) -> TaylorRemainder {
    let local = model.at(x);
    let f0 = local.value(z);
    let norms: Vec<f64> = scales
        .iter()
        .map(|&s| {
            let h = direction * Complex64::new(s, 0.0);
            let taylor = f0 + local.first(z, &h) + local.second(z, &h, &h) + local.third(z, &h, &h, &h);
            (local.value(&(z + h)) - taylor).norm()
        })
        .collect();
    let scale_ref = scales
        .iter()
        .map(|&s| {
            let h = direction * Complex64::new(s, 0.0);
            local.value(&(z + h)).norm().max(f0.norm())
        })
        .fold(0.0_f64, f64::max);
    let negligible = norms.iter().all(|&n| n <= 64.0 * f64::EPSILON * scale_ref.max(f64::MIN_POSITIVE));
    let slope = if negligible {
        None
    } else {
        loglog_slope(scales, &norms)
    };
    TaylorRemainder {
        scales: scales.to_vec(),
        norms,
        slope,
    }
}

/// Model selection by name and parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, flatten)]
    pub params: BTreeMap<String, f64>,
}

/// Names accepted by [`ModelSpec::build`].
pub const BUILTIN_MODELS: [&str; 6] = ["zero", "linear", "soler", "cubic", "modulated-cubic", "quintic"];

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    fn allowed(&self) -> Result<&'static [&'static str], ModelError> {
        Ok(match self.name.as_str() {
            "zero" => &[],
            "linear" => &["c"],
            "soler" | "cubic" | "quintic" => &["coupling"],
            "modulated-cubic" => &["coupling", "offset", "amplitude", "kx", "ky", "kz"],
            other => return Err(ModelError::UnknownModel(other.into())),
        })
    }

    pub fn build(&self) -> Result<Nonlinearity, ModelError> {
        let allowed = self.allowed()?;
        if let Some(p) = self.params.keys().find(|p| !allowed.contains(&p.as_str())) {
            return Err(ModelError::UnknownParameter {
                model: self.name.clone(),
                param: p.clone(),
            });
        }
        let get = |k: &str, d: f64| self.params.get(k).copied().unwrap_or(d);
        Ok(match self.name.as_str() {
            "zero" => Nonlinearity::zero(),
            "linear" => Nonlinearity::linear_mass(get("c", 1.0)),
            "soler" => Nonlinearity::soler(get("coupling", 1.0)),
            "cubic" => Nonlinearity::cubic(get("coupling", 1.0)),
            "quintic" => Nonlinearity::quintic(get("coupling", 1.0)),
            "modulated-cubic" => Nonlinearity::modulated_cubic(
                get("coupling", 1.0),
                Modulation::Cosine {
                    offset: get("offset", 1.0),
                    amplitude: get("amplitude", 1.0),
                    wavevector: [get("kx", 1.0), get("ky", 0.0), get("kz", 0.0)],
                },
            ),
            _ => unreachable!(),
        })
    }
}

/// Builds the sum of several named models.
pub fn build_sum(specs: &[ModelSpec]) -> Result<Nonlinearity, ModelError> {
    let mut iter = specs.iter();
    let Some(first) = iter.next() else {
        return Ok(Nonlinearity::zero());
    };
    let mut model = first.build()?;
    for s in iter {
        model = model.plus(&s.build()?)?;
    }
    Ok(model)
}

/// One instance of every built-in, with default parameters.
pub fn builtin_zoo() -> Vec<Nonlinearity> {
    BUILTIN_MODELS
        .iter()
        .map(|n| ModelSpec::named(n).build().expect("built-in names resolve"))
        .collect()
}
