//! Recovery of `∂³_z F(x, z)` from simulated three-wave measurements.
//!
//! For each sign pattern `s ∈ {±}³` the incoming covectors are
//! `η_j = (1, s_j e_j)` and the outgoing one is `(1, s⊙k)` for the two
//! admissible directions `k`, `k′`. A measurement is the end map `W0` of the
//! outgoing transport on `ker(−1 − α·ξ₀)` and the transported symbol
//! `w_final = W0 · C′(1 − α·ξ₀)F⁽³⁾(x₀, z, v₁, v₂, v₃)`. Inverting `W0`
//! gives the projection `(1 − α·ξ₀)F⁽³⁾`; two outgoing directions with
//! transverse kernels pin down `F⁽³⁾` itself.

use crate::algebra::{
    alpha_dot, coset_intersect, kernel_basis, real_frame, realify, complexify, AlgebraError, Covector, Matrix4C,
    RealMap, RealSpinor, Spinor,
};
use crate::nonlinearity::Nonlinearity;
use crate::serial;
use crate::transport::{
    collision_initial, AdmissibleDirection, Background, CollisionScenario, ConstantBackground, EndMap, RayCoefficients,
    TransportError, TransportOptions,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

/// Smallest admissible `|det W0|` on the kernel.
pub const DET_TOL: f64 = 1e-8;
/// Relative tolerance for `w_final` lying in the outgoing kernel.
pub const RANGE_TOL: f64 = 1e-8;
/// Relative tolerance for a projection lying in the range of `1 − α·ξ₀`.
pub const CONSISTENCY_TOL: f64 = 1e-6;
/// Verdict threshold of [`uniqueness_compare`].
pub const SAME_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ReconstructionError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("end map is singular on the kernel (|det| = {det:e})")]
    SingularEndMap { det: f64 },
    #[error("terminal symbol leaves the outgoing kernel (residual {residual:e})")]
    OutOfRange { residual: f64 },
    #[error("inconsistent measurements: projection residual {residual:e}")]
    Inconsistent { residual: f64 },
    #[error("background value {found:?} at the sample point differs from z")]
    BackgroundMismatch { found: [[f64; 2]; 4] },
    #[error("measurements do not cover {} configurations: {}", .0.len(), .0.join(", "))]
    Incomplete(Vec<String>),
}

/// A sample point `(x, z)` of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: [f64; 3],
    #[serde(with = "serial::spinor")]
    pub z: Spinor,
}

/// Geometry and numerics shared by all measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetup {
    pub t_final: f64,
    pub c_prime: f64,
    /// The two admissible outgoing directions for the all-plus sign pattern.
    pub directions: [[f64; 3]; 2],
    pub transport: TransportOptions,
}

impl Default for MeasurementSetup {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            c_prime: 1.0,
            directions: [AdmissibleDirection::reference(), AdmissibleDirection::reference_alt()],
            transport: TransportOptions::default(),
        }
    }
}

/// Sign patterns in a fixed order: bit `j` set means `s_j = −1`.
pub fn sign_patterns() -> [[f64; 3]; 8] {
    std::array::from_fn(|m| std::array::from_fn(|j| if m & (1 << j) != 0 { -1.0 } else { 1.0 }))
}

/// Real basis `{a, ia, b, ib}` of `ker p(1, s e_j)`.
pub fn slot_frame(j: usize, sign: f64) -> [RealSpinor; 4] {
    let mut xi = [0.0; 3];
    xi[j] = sign;
    real_frame(&kernel_basis(&Covector::new(1.0, xi)).expect("lightlike"))
}

/// The 8-vector real basis of slot `j`: the `+e_j` kernel frame followed by
/// the `−e_j` one.
pub fn slot_basis(j: usize) -> RealMap {
    let plus = slot_frame(j, 1.0);
    let minus = slot_frame(j, -1.0);
    RealMap::from_fn(|r, c| if c < 4 { plus[c][r] } else { minus[c - 4][r] })
}

/// One outgoing transport problem: a sign pattern and a choice of `ξ₀`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Configuration {
    pub signs: [f64; 3],
    /// 0 for the first admissible direction, 1 for the second.
    pub choice: usize,
    pub xi0: [f64; 3],
    pub end_map: EndMap,
    pub entries: Vec<Measurement>,
}

impl Configuration {
    fn label(signs: &[f64; 3], choice: usize) -> String {
        let s: String = signs.iter().map(|s| if *s > 0.0 { '+' } else { '-' }).collect();
        format!("{s}/{}", if choice == 0 { "xi0" } else { "xi0'" })
    }
}

/// Terminal symbol for incoming spinors taken from the slot frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Index into the 4-vector kernel frame of each slot.
    pub frame_index: [usize; 3],
    #[serde(with = "serial::spinor")]
    pub w_final: Spinor,
}

/// Everything the inverse pipeline is allowed to read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub point: SamplePoint,
    pub setup: MeasurementSetup,
    pub background: String,
    pub model: String,
    pub configurations: Vec<Configuration>,
}

impl MeasurementSet {
    /// All terminal symbols multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for cfg in &mut out.configurations {
            for e in &mut cfg.entries {
                e.w_final *= Complex64::new(lambda, 0.0);
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Simulates the measurements at one sample point. The background must take
/// the value `z` at `(0, x)`.
pub fn forward_measurements(
    model: &Nonlinearity,
    setup: &MeasurementSetup,
    point: &SamplePoint,
    background: &dyn Background,
) -> Result<MeasurementSet, ReconstructionError> {
    let jobs: Vec<([f64; 3], usize)> = sign_patterns()
        .into_iter()
        .flat_map(|s| [(s, 0), (s, 1)])
        .collect();
    let configurations = jobs
        .par_iter()
        .map(|&(signs, choice)| forward_configuration(model, setup, point, background, signs, choice))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasurementSet {
        point: *point,
        setup: *setup,
        background: background.describe(),
        model: model.name().to_string(),
        configurations,
    })
}

fn forward_configuration(
    model: &Nonlinearity,
    setup: &MeasurementSetup,
    point: &SamplePoint,
    background: &dyn Background,
    signs: [f64; 3],
    choice: usize,
) -> Result<Configuration, ReconstructionError> {
    let base = setup.directions[choice];
    let dir = AdmissibleDirection::new(std::array::from_fn(|j| signs[j] * base[j]), signs)?;
    let frames: [[RealSpinor; 4]; 3] = std::array::from_fn(|j| slot_frame(j, signs[j]));
    let v_of = |idx: [usize; 3]| -> [Spinor; 3] { std::array::from_fn(|j| complexify(&frames[j][idx[j]])) };
    let mut scenario = CollisionScenario::from_direction(&dir, point.x, setup.t_final, v_of([0; 3]))?;
    scenario.c_prime = setup.c_prime;
    let ray = scenario.outgoing_ray();
    let u0 = background.sample(&ray, &[0.0])?[0];
    if (u0 - point.z).norm() > 1e-8 * point.z.norm().max(1.0) {
        return Err(ReconstructionError::BackgroundMismatch {
            found: serial::spinor_pairs(&u0),
        });
    }
    let co = RayCoefficients::new(&ray, background, model, 0.0, 0.5 * setup.t_final, &setup.transport)?;
    let end_map = co.end_map()?;
    let mut entries = Vec::with_capacity(64);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                let frame_index = [a, b, c];
                let w0 = collision_initial(&scenario, &v_of(frame_index), &point.x, &u0, model);
                entries.push(Measurement {
                    frame_index,
                    w_final: co.terminal(&w0),
                });
            }
        }
    }
    Ok(Configuration {
        signs,
        choice,
        xi0: dir.xi0,
        end_map,
        entries,
    })
}

/// `g0 = (1/C′) W0⁻¹ w_final`, the projection `(1 − α·ξ₀)F⁽³⁾(x, z, v₁, v₂, v₃)`.
pub fn recover_projection(end_map: &EndMap, w_final: &Spinor, c_prime: f64) -> Result<Spinor, ReconstructionError> {
    let det = end_map.kernel.determinant();
    if det.abs() <= DET_TOL {
        return Err(ReconstructionError::SingularEndMap { det });
    }
    let coords = end_map.coordinates(w_final);
    let residual = (end_map.from_coordinates(&coords) - w_final).norm();
    if residual > RANGE_TOL * w_final.norm().max(1.0) {
        return Err(ReconstructionError::OutOfRange { residual });
    }
    let inv = end_map
        .kernel
        .try_inverse()
        .ok_or(ReconstructionError::SingularEndMap { det })?;
    Ok(end_map.from_coordinates(&(inv * coords)) / Complex64::new(c_prime, 0.0))
}

fn outgoing_kernel_of_identity_minus(xi0: &[f64; 3]) -> Result<[Spinor; 2], AlgebraError> {
    // ker(1 − α·ξ₀) = ker p(−1, ξ₀)
    Ok(kernel_basis(&Covector::new(-1.0, *xi0))?.vectors())
}

/// The unique `F` with `(1 − α·ξ₀)F = g0` and `(1 − α·ξ₀′)F = g0′`.
pub fn combine_projections(
    xi0: &[f64; 3],
    g0: &Spinor,
    xi0_alt: &[f64; 3],
    g0_alt: &Spinor,
) -> Result<Spinor, ReconstructionError> {
    let scale = g0.norm().max(g0_alt.norm()).max(1.0);
    for (xi, g) in [(xi0, g0), (xi0_alt, g0_alt)] {
        // the range of 1 − α·ξ₀ is ker(1 + α·ξ₀)
        let residual = ((Matrix4C::identity() + alpha_dot(xi)) * g).norm();
        if residual > CONSISTENCY_TOL * scale {
            return Err(ReconstructionError::Inconsistent { residual });
        }
    }
    let half = Complex64::new(0.5, 0.0);
    Ok(coset_intersect(
        &(g0 * half),
        &outgoing_kernel_of_identity_minus(xi0)?,
        &(g0_alt * half),
        &outgoing_kernel_of_identity_minus(xi0_alt)?,
    )?)
}

/// Real-trilinear map `(ℂ⁴)³ → ℂ⁴` in the standard real basis of `ℝ⁸`
/// (`realify` order), stored as 512 spinor entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardTrilinear(pub Vec<Spinor>);

impl StandardTrilinear {
    fn idx(p: usize, q: usize, r: usize) -> usize {
        (p * 8 + q) * 8 + r
    }

    pub fn zeros() -> Self {
        Self(vec![Spinor::zeros(); 512])
    }

    pub fn get(&self, p: usize, q: usize, r: usize) -> Spinor {
        self.0[Self::idx(p, q, r)]
    }

    /// `B(v₁, v₂, v₃)`.
    pub fn evaluate(&self, v1: &Spinor, v2: &Spinor, v3: &Spinor) -> Spinor {
        let (a, b, c) = (realify(v1), realify(v2), realify(v3));
        let mut out = Spinor::zeros();
        for p in 0..8 {
            for q in 0..8 {
                let ab = a[p] * b[q];
                if ab == 0.0 {
                    continue;
                }
                for r in 0..8 {
                    out += self.get(p, q, r) * Complex64::new(ab * c[r], 0.0);
                }
            }
        }
        out
    }

    /// Average over the six slot permutations.
    pub fn symmetrized(&self) -> Self {
        let mut out = Self::zeros();
        let sixth = Complex64::new(1.0 / 6.0, 0.0);
        for p in 0..8 {
            for q in 0..8 {
                for r in 0..8 {
                    let s = self.get(p, q, r)
                        + self.get(p, r, q)
                        + self.get(q, p, r)
                        + self.get(q, r, p)
                        + self.get(r, p, q)
                        + self.get(r, q, p);
                    out.0[Self::idx(p, q, r)] = s * sixth;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// The coded `F⁽³⁾(x, z, ·, ·, ·)` on the standard real basis.
    pub fn exact(model: &Nonlinearity, x: &[f64; 3], z: &Spinor) -> Self {
        let local = model.at(x);
        let e: Vec<Spinor> = (0..8).map(|p| complexify(&RealSpinor::from_fn(|r, _| if r == p { 1.0 } else { 0.0 }))).collect();
        let mut out = Self::zeros();
        for p in 0..8 {
            for q in 0..8 {
                for r in 0..8 {
                    out.0[Self::idx(p, q, r)] = local.third(z, &e[p], &e[q], &e[r]);
                }
            }
        }
        out
    }
}

/// Recovered trilinear form, stored over the per-slot bases of
/// [`slot_basis`]: `coefficients[(a·8 + b)·8 + c] = F⁽³⁾(B₁a, B₂b, B₃c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrilinearForm {
    pub bases: [RealMap; 3],
    pub coefficients: Vec<Spinor>,
}

impl TrilinearForm {
    /// Change of basis to the standard real basis, symmetrized.
    pub fn standard(&self) -> StandardTrilinear {
        let inv: [RealMap; 3] = std::array::from_fn(|j| self.bases[j].try_inverse().expect("slot bases span ℝ⁸"));
        // contract one slot at a time
        let mut t1 = vec![Spinor::zeros(); 512];
        for p in 0..8 {
            for b in 0..8 {
                for c in 0..8 {
                    let mut s = Spinor::zeros();
                    for a in 0..8 {
                        s += self.coefficients[(a * 8 + b) * 8 + c] * Complex64::new(inv[0][(a, p)], 0.0);
                    }
                    t1[(p * 8 + b) * 8 + c] = s;
                }
            }
        }
        let mut t2 = vec![Spinor::zeros(); 512];
        for p in 0..8 {
            for q in 0..8 {
                for c in 0..8 {
                    let mut s = Spinor::zeros();
                    for b in 0..8 {
                        s += t1[(p * 8 + b) * 8 + c] * Complex64::new(inv[1][(b, q)], 0.0);
                    }
                    t2[(p * 8 + q) * 8 + c] = s;
                }
            }
        }
        let mut t3 = StandardTrilinear::zeros();
        for p in 0..8 {
            for q in 0..8 {
                for r in 0..8 {
                    let mut s = Spinor::zeros();
                    for c in 0..8 {
                        s += t2[(p * 8 + q) * 8 + c] * Complex64::new(inv[2][(c, r)], 0.0);
                    }
                    t3.0[(p * 8 + q) * 8 + r] = s;
                }
            }
        }
        t3.symmetrized()
    }
}

/// Runs recovery and combination on every measured triple and assembles the
/// trilinear form.
pub fn assemble_trilinear(set: &MeasurementSet) -> Result<TrilinearForm, ReconstructionError> {
    let mut by_key: BTreeMap<(i8, i8, i8, usize), &Configuration> = BTreeMap::new();
    for cfg in &set.configurations {
        by_key.insert((sgn(cfg.signs[0]), sgn(cfg.signs[1]), sgn(cfg.signs[2]), cfg.choice), cfg);
    }
    let mut missing = Vec::new();
    for signs in sign_patterns() {
        for choice in 0..2 {
            match by_key.get(&(sgn(signs[0]), sgn(signs[1]), sgn(signs[2]), choice)) {
                Some(cfg) if cfg.entries.len() == 64 => {}
                _ => missing.push(Configuration::label(&signs, choice)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(ReconstructionError::Incomplete(missing));
    }
    let mut coefficients = vec![Spinor::zeros(); 512];
    for signs in sign_patterns() {
        let key = |choice| (sgn(signs[0]), sgn(signs[1]), sgn(signs[2]), choice);
        let (c0, c1) = (by_key[&key(0)], by_key[&key(1)]);
        let lookup1: BTreeMap<[usize; 3], Spinor> = c1.entries.iter().map(|e| (e.frame_index, e.w_final)).collect();
        for e in &c0.entries {
            let Some(w_alt) = lookup1.get(&e.frame_index) else {
                return Err(ReconstructionError::Incomplete(vec![format!(
                    "{} {:?}",
                    Configuration::label(&signs, 1),
                    e.frame_index
                )]));
            };
            let g0 = recover_projection(&c0.end_map, &e.w_final, set.setup.c_prime)?;
            let g1 = recover_projection(&c1.end_map, w_alt, set.setup.c_prime)?;
            let f = combine_projections(&c0.xi0, &g0, &c1.xi0, &g1)?;
            let slot: [usize; 3] = std::array::from_fn(|j| e.frame_index[j] + if signs[j] < 0.0 { 4 } else { 0 });
            coefficients[(slot[0] * 8 + slot[1]) * 8 + slot[2]] = f;
        }
    }
    Ok(TrilinearForm {
        bases: std::array::from_fn(slot_basis),
        coefficients,
    })
}

fn sgn(s: f64) -> i8 {
    if s < 0.0 {
        -1
    } else {
        1
    }
}

/// Forward measurements with a constant background `u ≡ z` followed by
/// assembly.
pub fn reconstruct_at(
    model: &Nonlinearity,
    setup: &MeasurementSetup,
    point: &SamplePoint,
) -> Result<StandardTrilinear, ReconstructionError> {
    let set = forward_measurements(model, setup, point, &ConstantBackground(point.z))?;
    Ok(assemble_trilinear(&set)?.standard())
}

/// Round-trip accuracy at one sample point.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrip {
    pub point: SamplePoint,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Compares the assembled form with the coded `F⁽³⁾`.
pub fn round_trip(model: &Nonlinearity, setup: &MeasurementSetup, point: &SamplePoint) -> Result<RoundTrip, ReconstructionError> {
    let got = reconstruct_at(model, setup, point)?;
    let exact = StandardTrilinear::exact(model, &point.x, &point.z);
    let abs_error = got.max_distance(&exact);
    let scale = exact.max_abs();
    Ok(RoundTrip {
        point: *point,
        abs_error,
        rel_error: if scale > 0.0 { abs_error / scale } else { abs_error },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Same,
    Different,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Same => "same",
            Verdict::Different => "different",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub point: SamplePoint,
    pub discrepancy: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub model_1: String,
    pub model_2: String,
    pub rows: Vec<ComparisonRow>,
    pub max_discrepancy: f64,
    pub verdict: Verdict,
}

impl UniquenessReport {
    /// CSV with columns `x1,x2,x3,z,discrepancy,verdict`; `z` is written as
    /// space-separated `re:im` pairs.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x1,x2,x3,z,discrepancy,verdict")?;
        for r in &self.rows {
            let z: Vec<String> = serial::spinor_pairs(&r.point.z).iter().map(|p| format!("{}:{}", p[0], p[1])).collect();
            let x = r.point.x;
            writeln!(out, "{},{},{},{},{:.6e},{}", x[0], x[1], x[2], z.join(" "), r.discrepancy, r.verdict)?;
        }
        Ok(())
    }
}

fn verdict(d: f64) -> Verdict {
    if d < SAME_TOL {
        Verdict::Same
    } else {
        Verdict::Different
    }
}

/// Assembles both trilinear forms at each point and reports the largest
/// entrywise discrepancy, with verdict "same" below [`SAME_TOL`].
pub fn uniqueness_compare(
    model_1: &Nonlinearity,
    model_2: &Nonlinearity,
    points: &[SamplePoint],
    setup: &MeasurementSetup,
) -> Result<UniquenessReport, ReconstructionError> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let a = reconstruct_at(model_1, setup, p)?;
        let b = reconstruct_at(model_2, setup, p)?;
        let d = a.max_distance(&b);
        rows.push(ComparisonRow {
            point: *p,
            discrepancy: d,
            verdict: verdict(d),
        });
    }
    let max_discrepancy = rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
    Ok(UniquenessReport {
        model_1: model_1.name().to_string(),
        model_2: model_2.name().to_string(),
        rows,
        max_discrepancy,
        verdict: verdict(max_discrepancy),
    })
}
