//! Higher-order linearization of the solution map `S: φ ↦ u(T)`.
//!
//! For `φ_ε = φ + Σ ε_j φ_j` the solution expands as
//!
//! ```text
//! u_ε = u + Σ_j ε_j w_j + Σ_{i≤j} ε_iε_j w_ij + Σ_{i≤j≤k} ε_iε_jε_k w_ijk + O(|ε|⁴)
//! ```
//!
//! with `w_j` solving the linearized equation from `φ_j`, and the higher
//! terms obtained by applying the causal inverse `Q` to sources built from
//! `F⁽²⁾` and `F⁽³⁾` at the background `u`:
//!
//! ```text
//! w_ij  = Q(2F⁽²⁾(w_i, w_j)),   w_ii = Q(F⁽²⁾(w_i, w_i)),
//! w_ijk = Q(6F⁽³⁾(w_i, w_j, w_k) + 2F⁽²⁾(w_ij, w_k) + 2F⁽²⁾(w_ik, w_j) + 2F⁽²⁾(w_jk, w_i)),
//! w_iij = Q(3F⁽³⁾(w_i, w_i, w_j) + 2F⁽²⁾(w_ii, w_j) + 2F⁽²⁾(w_ij, w_i)),
//! w_iii = Q(F⁽³⁾(w_i, w_i, w_i) + 2F⁽²⁾(w_ii, w_i)).
//! ```
//!
//! [`run_cascade`] integrates the background and every term in one split-step
//! run. The pointwise RK4 stages then evaluate all sources at stage values,
//! which makes the computed terms the exact Taylor coefficients of the
//! *discrete* solution map; divided differences of the solver converge to
//! them with no time-step floor. Second and third order members are stored
//! with unit coefficients so that any coefficient set can be assembled
//! afterwards.

use crate::nonlinearity::{LocalModel, Nonlinearity};
use crate::numerics::{loglog_slope, running_slopes};
use crate::solver::{
    check_support, pack, solve_linearized, solve_nonlinear_final, unpack, LocalFlow, SolveOptions, SolverError,
    SpinorField, Stepper, Trajectory,
};
use crate::Spinor;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("inputs live on different grids or time grids: {0}")]
    GridMismatch(String),
    #[error("invalid perturbation family: {0}")]
    InvalidFamily(String),
    #[error("invalid multi-index {0:?}")]
    InvalidIndex(Vec<usize>),
}

/// `φ_ε = base + ε Σ_j weights_j · directions_j`.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    pub base: SpinorField,
    pub directions: Vec<SpinorField>,
    /// Relative amplitudes of the directions; the family is swept along
    /// `ε · weights`.
    pub weights: Vec<f64>,
    /// Largest admissible `max_x |φ_ε − φ|`.
    pub amplitude_bound: f64,
}

impl PerturbationFamily {
    pub fn new(base: SpinorField, directions: Vec<SpinorField>, weights: Vec<f64>, amplitude_bound: f64) -> Result<Self, CascadeError> {
        if directions.is_empty() || directions.len() > 3 {
            return Err(CascadeError::InvalidFamily(format!("{} directions (expected 1 to 3)", directions.len())));
        }
        if weights.len() != directions.len() {
            return Err(CascadeError::InvalidFamily("one weight per direction is required".into()));
        }
        if directions.iter().any(|d| d.grid != base.grid) {
            return Err(CascadeError::GridMismatch("direction on a different grid than the base".into()));
        }
        Ok(Self {
            base,
            directions,
            weights,
            amplitude_bound,
        })
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// `base + Σ_j amplitudes_j · directions_j`.
    pub fn perturbed(&self, amplitudes: &[f64]) -> SpinorField {
        let mut phi = self.base.clone();
        for (a, d) in amplitudes.iter().zip(&self.directions) {
            if *a != 0.0 {
                phi.axpy(*a, d);
            }
        }
        phi
    }

    /// Support preflight for every field and the amplitude bound at `eps_max`.
    pub fn validate(&self, t_final: f64, eps_max: f64, support_tol: f64) -> Result<(), CascadeError> {
        check_support(&self.base, t_final, support_tol)?;
        for d in &self.directions {
            check_support(d, t_final, support_tol)?;
        }
        let size: f64 = self.weights.iter().zip(&self.directions).map(|(w, d)| w.abs() * d.max_abs()).sum();
        if eps_max * size > self.amplitude_bound {
            return Err(CascadeError::InvalidFamily(format!(
                "perturbation size {:.3e} exceeds the amplitude bound {:.3e}",
                eps_max * size,
                self.amplitude_bound
            )));
        }
        Ok(())
    }
}

/// Sorted multi-index of order 1 to 3 over direction labels `0..d`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: &[usize]) -> Result<Self, CascadeError> {
        if indices.is_empty() || indices.len() > 3 {
            return Err(CascadeError::InvalidIndex(indices.to_vec()));
        }
        let mut v = indices.to_vec();
        v.sort_unstable();
        Ok(Self(v))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// `α! = Π (multiplicity)!`.
    pub fn factorial(&self) -> f64 {
        let mut f = 1.0;
        let mut run = 1;
        for w in self.0.windows(2) {
            if w[0] == w[1] {
                run += 1;
                f *= run as f64;
            } else {
                run = 1;
            }
        }
        f
    }

    /// All sorted multi-indices of the given order over `0..d`.
    pub fn all(d: usize, order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        match order {
            1 => (0..d).for_each(|i| out.push(MultiIndex(vec![i]))),
            2 => (0..d).for_each(|i| (i..d).for_each(|j| out.push(MultiIndex(vec![i, j])))),
            3 => (0..d).for_each(|i| {
                (i..d).for_each(|j| (j..d).for_each(|k| out.push(MultiIndex(vec![i, j, k]))))
            }),
            _ => {}
        }
        out
    }
}

/// Combinatorial coefficients of the second and third order sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeCoefficients {
    /// `w_ij`, `i ≠ j`: coefficient of `F⁽²⁾(w_i, w_j)`.
    pub second_mixed: f64,
    /// `w_ii`: coefficient of `F⁽²⁾(w_i, w_i)`.
    pub second_diag: f64,
    /// `w_ijk` distinct: `F⁽³⁾`, then `F⁽²⁾(w_ij, w_k)`, `F⁽²⁾(w_ik, w_j)`, `F⁽²⁾(w_jk, w_i)`.
    pub third_distinct: [f64; 4],
    /// `w_iij`: `F⁽³⁾`, `F⁽²⁾(w_ii, w_j)`, `F⁽²⁾(w_ij, w_i)`.
    pub third_pair: [f64; 3],
    /// `w_iii`: `F⁽³⁾`, `F⁽²⁾(w_ii, w_i)`.
    pub third_triple: [f64; 2],
}

impl Default for CascadeCoefficients {
    fn default() -> Self {
        Self {
            second_mixed: 2.0,
            second_diag: 1.0,
            third_distinct: [6.0, 2.0, 2.0, 2.0],
            third_pair: [3.0, 2.0, 2.0],
            third_triple: [1.0, 2.0],
        }
    }
}

impl CascadeCoefficients {
    fn slots(&mut self) -> Vec<(&'static str, &mut f64)> {
        let [d0, d1, d2, d3] = &mut self.third_distinct;
        let [p0, p1, p2] = &mut self.third_pair;
        let [t0, t1] = &mut self.third_triple;
        vec![
            ("second_mixed", &mut self.second_mixed),
            ("second_diag", &mut self.second_diag),
            ("third_distinct.f3", d0),
            ("third_distinct.f2_ij_k", d1),
            ("third_distinct.f2_ik_j", d2),
            ("third_distinct.f2_jk_i", d3),
            ("third_pair.f3", p0),
            ("third_pair.f2_ii_j", p1),
            ("third_pair.f2_ij_i", p2),
            ("third_triple.f3", t0),
            ("third_triple.f2_ii_i", t1),
        ]
    }

    /// Every single-coefficient perturbation `c ↦ c + delta`, labelled.
    pub fn mutations(delta: f64) -> Vec<(String, CascadeCoefficients)> {
        let n = Self::default().slots().len();
        (0..n)
            .map(|k| {
                let mut c = Self::default();
                let mut slots = c.slots();
                let (name, slot) = &mut slots[k];
                let name = name.to_string();
                **slot += delta;
                (name, c)
            })
            .collect()
    }

    fn second(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.second_diag
        } else {
            self.second_mixed
        }
    }
}

/// Members of a cascade run; second and third order ones carry unit
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Member {
    Base,
    First(usize),
    /// `Q(F⁽²⁾(w_a, w_b))`, `a ≤ b`.
    Pair(usize, usize),
    /// `Q(F⁽³⁾(w_i, w_j, w_k))`, `i ≤ j ≤ k`.
    Triple(usize, usize, usize),
    /// `Q(F⁽²⁾(Pair(a, b), w_c))`.
    Chain(usize, usize, usize),
}

#[derive(Debug, Clone, Copy)]
enum Source {
    None,
    Second(usize, usize),
    Third(usize, usize, usize),
}

struct CascadeFlow<'a> {
    model: &'a Nonlinearity,
    sources: Vec<Source>,
}

impl LocalFlow for CascadeFlow<'_> {
    fn members(&self) -> usize {
        self.sources.len()
    }

    fn rhs(&self, _p: usize, x: &[f64; 3], _t: f64, y: &[Spinor], dy: &mut [Spinor]) {
        let local: LocalModel<'_> = self.model.at(x);
        let u = &y[0];
        dy[0] = local.value(u) * MINUS_I;
        for (j, src) in self.sources.iter().enumerate().skip(1) {
            let s = match *src {
                Source::None => Spinor::zeros(),
                Source::Second(a, b) => local.second(u, &y[a], &y[b]),
                Source::Third(a, b, c) => local.third(u, &y[a], &y[b], &y[c]),
            };
            dy[j] = (local.first(u, &y[j]) + s) * MINUS_I;
        }
    }
}

/// Member list of a cascade of the given order over `d` directions.
pub fn cascade_members(d: usize, order: usize) -> Vec<Member> {
    let mut members = vec![Member::Base];
    members.extend((0..d).map(Member::First));
    if order >= 2 {
        members.extend(MultiIndex::all(d, 2).iter().map(|m| Member::Pair(m.0[0], m.0[1])));
    }
    if order >= 3 {
        members.extend(MultiIndex::all(d, 3).iter().map(|m| Member::Triple(m.0[0], m.0[1], m.0[2])));
        for m in MultiIndex::all(d, 2) {
            members.extend((0..d).map(|c| Member::Chain(m.0[0], m.0[1], c)));
        }
    }
    members
}

/// Final-time values of every cascade member.
#[derive(Debug, Clone)]
pub struct CascadeRun {
    pub order: usize,
    pub dimension: usize,
    pub t_final: f64,
    pub members: BTreeMap<Member, SpinorField>,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl CascadeRun {
    fn member(&self, m: Member) -> &SpinorField {
        &self.members[&m]
    }

    pub fn base(&self) -> &SpinorField {
        self.member(Member::Base)
    }

    pub fn first(&self, j: usize) -> &SpinorField {
        self.member(Member::First(j))
    }

    /// Cascade term `w_α(T)` assembled with the given coefficients.
    pub fn term(&self, index: &MultiIndex, c: &CascadeCoefficients) -> Result<SpinorField, CascadeError> {
        if index.order() > self.order || index.0.iter().any(|&i| i >= self.dimension) {
            return Err(CascadeError::InvalidIndex(index.0.clone()));
        }
        let mut out = SpinorField::zeros(self.base().grid);
        let mut add = |coef: f64, m: Member| out.axpy(coef, self.member(m));
        match index.0[..] {
            [j] => add(1.0, Member::First(j)),
            [a, b] => add(c.second(a, b), Member::Pair(a, b)),
            [i, j, k] => {
                let chain = |p: (usize, usize), o: usize| Member::Chain(p.0, p.1, o);
                if i == j && j == k {
                    add(c.third_triple[0], Member::Triple(i, i, i));
                    add(c.third_triple[1] * c.second_diag, chain((i, i), i));
                } else if i == j || j == k {
                    let (r, o) = if i == j { (i, k) } else { (j, i) };
                    add(c.third_pair[0], Member::Triple(i, j, k));
                    add(c.third_pair[1] * c.second_diag, chain((r, r), o));
                    add(c.third_pair[2] * c.second_mixed, chain(pair_key(r, o), r));
                } else {
                    add(c.third_distinct[0], Member::Triple(i, j, k));
                    add(c.third_distinct[1] * c.second_mixed, chain((i, j), k));
                    add(c.third_distinct[2] * c.second_mixed, chain((i, k), j));
                    add(c.third_distinct[3] * c.second_mixed, chain((j, k), i));
                }
            }
            _ => unreachable!(),
        }
        Ok(out)
    }

    /// Degree-`order` expansion `u + Σ ε w + …` at amplitudes `eps`.
    pub fn expansion(&self, eps: &[f64], c: &CascadeCoefficients) -> Result<SpinorField, CascadeError> {
        let mut out = self.base().clone();
        for order in 1..=self.order {
            for idx in MultiIndex::all(self.dimension, order) {
                let amp: f64 = idx.0.iter().map(|&i| eps[i]).product();
                if amp != 0.0 {
                    out.axpy(amp, &self.term(&idx, c)?);
                }
            }
        }
        Ok(out)
    }
}

/// Integrates the background and all cascade members of `order ≤ 3` to
/// `t_final` and returns their final values.
pub fn run_cascade(
    model: &Nonlinearity,
    family: &PerturbationFamily,
    order: usize,
    t_final: f64,
    opts: &SolveOptions,
) -> Result<CascadeRun, CascadeError> {
    if !(1..=3).contains(&order) {
        return Err(CascadeError::InvalidIndex(vec![order]));
    }
    let d = family.dimension();
    let members = cascade_members(d, order);
    let slot: BTreeMap<Member, usize> = members.iter().enumerate().map(|(k, m)| (*m, k)).collect();
    let sources = members
        .iter()
        .map(|m| match *m {
            Member::Base | Member::First(_) => Source::None,
            Member::Pair(a, b) => Source::Second(slot[&Member::First(a)], slot[&Member::First(b)]),
            Member::Triple(i, j, k) => {
                Source::Third(slot[&Member::First(i)], slot[&Member::First(j)], slot[&Member::First(k)])
            }
            Member::Chain(a, b, c) => Source::Second(slot[&Member::Pair(a, b)], slot[&Member::First(c)]),
        })
        .collect();
    let flow = CascadeFlow { model, sources };
    let grid = family.base.grid;
    let zero = SpinorField::zeros(grid);
    let initial: Vec<&SpinorField> = members
        .iter()
        .map(|m| match *m {
            Member::Base => &family.base,
            Member::First(j) => &family.directions[j],
            _ => &zero,
        })
        .collect();
    let mut state = pack(&initial);
    let steps = crate::solver::step_count(t_final, opts.dt)?;
    let mut stepper = Stepper::new(grid, opts.dt);
    stepper.evolve(&mut state, steps, &flow, opts.blowup_guard, |_, _, _| Ok(()))?;
    let m = members.len();
    Ok(CascadeRun {
        order,
        dimension: d,
        t_final,
        members: members
            .iter()
            .enumerate()
            .map(|(j, mem)| (*mem, unpack(grid, &state, m, j)))
            .collect(),
    })
}

fn require_same_times(background: &Trajectory, others: &[&Trajectory]) -> Result<(), CascadeError> {
    for t in others {
        if t.grid != background.grid || t.times.len() != background.times.len() {
            return Err(CascadeError::GridMismatch("trajectory does not match the background".into()));
        }
        let off = t.times.iter().zip(&background.times).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if off > 1e-12 * background.final_time().max(1.0) {
            return Err(CascadeError::GridMismatch("sample times differ from the background".into()));
        }
    }
    Ok(())
}

fn pointwise_source(
    model: &Nonlinearity,
    background: &Trajectory,
    f: impl Fn(&LocalModel<'_>, usize, usize, &Spinor) -> Spinor,
) -> Trajectory {
    let grid = background.grid;
    let points = grid.points();
    Trajectory {
        grid,
        model: format!("source[{}]", model.name()),
        times: background.times.clone(),
        fields: background
            .fields
            .iter()
            .enumerate()
            .map(|(k, u)| SpinorField {
                grid,
                values: (0..grid.len()).map(|p| f(&model.at(&points[p]), k, p, &u.values[p])).collect(),
            })
            .collect(),
    }
}

/// `w_j`: the linearized equation from `phi_j` with zero source.
pub fn first_order(model: &Nonlinearity, background: &Trajectory, phi_j: &SpinorField) -> Result<Trajectory, CascadeError> {
    Ok(solve_linearized(model, background, phi_j, None)?)
}

/// `w_ij = Q(c F⁽²⁾(u, w_i, w_j))` with `c` the mixed or diagonal coefficient.
pub fn second_order(
    model: &Nonlinearity,
    background: &Trajectory,
    w_i: &Trajectory,
    w_j: &Trajectory,
    same_index: bool,
    coeffs: &CascadeCoefficients,
) -> Result<Trajectory, CascadeError> {
    require_same_times(background, &[w_i, w_j])?;
    let c = Complex64::new(if same_index { coeffs.second_diag } else { coeffs.second_mixed }, 0.0);
    let source = pointwise_source(model, background, |l, k, p, u| {
        l.second(u, &w_i.fields[k].values[p], &w_j.fields[k].values[p]) * c
    });
    Ok(solve_linearized(model, background, &SpinorField::zeros(background.grid), Some(&source))?)
}

/// `w_α` for a third-order multi-index, from the first-order trajectories
/// `first[i]` and the second-order ones `second[(a, b)]` (`a ≤ b`).
pub fn third_order(
    model: &Nonlinearity,
    background: &Trajectory,
    index: &MultiIndex,
    first: &[Trajectory],
    second: &BTreeMap<(usize, usize), Trajectory>,
    coeffs: &CascadeCoefficients,
) -> Result<Trajectory, CascadeError> {
    let [i, j, k] = index.0[..] else {
        return Err(CascadeError::InvalidIndex(index.0.clone()));
    };
    if k >= first.len() {
        return Err(CascadeError::InvalidIndex(index.0.clone()));
    }
    // (coefficient of F⁽³⁾, [(coefficient, pair, other)])
    let (c3, chains): (f64, Vec<(f64, (usize, usize), usize)>) = if i == j && j == k {
        (coeffs.third_triple[0], vec![(coeffs.third_triple[1], (i, i), i)])
    } else if i == j || j == k {
        let (r, o) = if i == j { (i, k) } else { (j, i) };
        (
            coeffs.third_pair[0],
            vec![(coeffs.third_pair[1], (r, r), o), (coeffs.third_pair[2], pair_key(r, o), r)],
        )
    } else {
        let d = coeffs.third_distinct;
        (d[0], vec![(d[1], (i, j), k), (d[2], (i, k), j), (d[3], (j, k), i)])
    };
    let mut needed: Vec<&Trajectory> = first.iter().collect();
    for (_, pair, _) in &chains {
        needed.push(second.get(pair).ok_or_else(|| CascadeError::InvalidIndex(vec![pair.0, pair.1]))?);
    }
    require_same_times(background, &needed)?;
    let source = pointwise_source(model, background, |l, t, p, u| {
        let w = |a: usize| first[a].fields[t].values[p];
        let mut s = l.third(u, &w(i), &w(j), &w(k)) * Complex64::new(c3, 0.0);
        for (c, pair, o) in &chains {
            s += l.second(u, &second[pair].fields[t].values[p], &w(*o)) * Complex64::new(*c, 0.0);
        }
        s
    });
    Ok(solve_linearized(model, background, &SpinorField::zeros(background.grid), Some(&source))?)
}

/// Central-difference estimate of `∂^α S(φ) / α!` with step `eps`, using
/// `2^m` solves for a multi-index of order `m`.
pub fn stencil_derivative(
    model: &Nonlinearity,
    family: &PerturbationFamily,
    index: &MultiIndex,
    eps: f64,
    t_final: f64,
    opts: &SolveOptions,
) -> Result<SpinorField, CascadeError> {
    let m = index.order();
    if index.0.iter().any(|&i| i >= family.dimension()) {
        return Err(CascadeError::InvalidIndex(index.0.clone()));
    }
    let mut acc = SpinorField::zeros(family.base.grid);
    for mask in 0..(1usize << m) {
        let mut amps = vec![0.0; family.dimension()];
        let mut sign = 1.0;
        for (bit, &i) in index.0.iter().enumerate() {
            let s = if mask & (1 << bit) != 0 { -1.0 } else { 1.0 };
            sign *= s;
            amps[i] += s * eps;
        }
        let u = solve_nonlinear_final(model, &family.perturbed(&amps), t_final, opts)?;
        acc.axpy(sign, &u);
    }
    let scale = 1.0 / ((2.0 * eps).powi(m as i32) * index.factorial());
    let mut out = SpinorField::zeros(family.base.grid);
    out.axpy(scale, &acc);
    Ok(out)
}

/// Stencil estimates over a geometric list of steps with the step that
/// minimizes the estimated truncation plus cancellation error.
#[derive(Debug, Clone)]
pub struct StencilSweep {
    pub eps: Vec<f64>,
    pub estimates: Vec<SpinorField>,
    /// `‖D(ε_k) − D(ε_{k+1})‖ / (1 − r²)`, the O(ε²) truncation estimate.
    pub truncation: Vec<f64>,
    /// `2^m · u_round · ‖S(φ)‖ / ((2ε)^m α!)`.
    pub cancellation: Vec<f64>,
    pub chosen: usize,
}

pub fn stencil_sweep(
    model: &Nonlinearity,
    family: &PerturbationFamily,
    index: &MultiIndex,
    eps_list: &[f64],
    t_final: f64,
    opts: &SolveOptions,
) -> Result<StencilSweep, CascadeError> {
    if eps_list.len() < 2 || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CascadeError::InvalidFamily("step list must be decreasing with at least two entries".into()));
    }
    let estimates = eps_list
        .iter()
        .map(|&e| stencil_derivative(model, family, index, e, t_final, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let s0 = solve_nonlinear_final(model, &family.base, t_final, opts)?.l2_norm();
    let m = index.order() as i32;
    let cancellation: Vec<f64> = eps_list
        .iter()
        .map(|&e| 2f64.powi(m) * f64::EPSILON * s0 / ((2.0 * e).powi(m) * index.factorial()))
        .collect();
    let mut truncation: Vec<f64> = estimates
        .windows(2)
        .zip(eps_list.windows(2))
        .map(|(d, e)| {
            let r = e[1] / e[0];
            d[0].distance(&d[1]) / (1.0 - r * r)
        })
        .collect();
    let last = *truncation.last().expect("at least two steps");
    let r = eps_list[eps_list.len() - 1] / eps_list[eps_list.len() - 2];
    truncation.push(last * r * r);
    let chosen = (0..eps_list.len())
        .min_by(|&a, &b| {
            (truncation[a] + cancellation[a])
                .partial_cmp(&(truncation[b] + cancellation[b]))
                .expect("finite error estimates")
        })
        .expect("nonempty sweep");
    Ok(StencilSweep {
        eps: eps_list.to_vec(),
        estimates,
        truncation,
        cancellation,
        chosen,
    })
}

/// One row of an expansion-residual sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualEntry {
    pub eps: f64,
    pub residual_l2: Option<f64>,
    pub error: Option<String>,
}

/// Residual norms of the degree-3 expansion over an ε sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionResidual {
    pub entries: Vec<ResidualEntry>,
    pub slope: Option<f64>,
}

impl ExpansionResidual {
    fn from_entries(entries: Vec<ResidualEntry>) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = entries
            .iter()
            .filter_map(|e| e.residual_l2.map(|r| (e.eps, r)))
            .unzip();
        Self {
            slope: loglog_slope(&xs, &ys),
            entries,
        }
    }

    pub fn running_slopes(&self) -> Vec<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .entries
            .iter()
            .filter_map(|e| e.residual_l2.map(|r| (e.eps, r)))
            .unzip();
        running_slopes(&xs, &ys)
    }

    /// CSV with columns `eps,residual_l2,slope_running`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,residual_l2,slope_running")?;
        let slopes = self.running_slopes();
        let mut k = 0;
        for e in &self.entries {
            match e.residual_l2 {
                Some(r) => {
                    let s = if k == 0 { String::new() } else { format!("{:.6}", slopes[k]) };
                    k += 1;
                    writeln!(out, "{:.6e},{:.17e},{}", e.eps, r, s)?;
                }
                None => writeln!(out, "{:.6e},,", e.eps)?,
            }
        }
        Ok(())
    }
}

/// Perturbed final states `S(φ + ε·weights·φ_j)` for every `ε`, with
/// per-entry failures kept.
pub fn perturbed_solutions(
    model: &Nonlinearity,
    family: &PerturbationFamily,
    eps_list: &[f64],
    t_final: f64,
    opts: &SolveOptions,
) -> Vec<(f64, Result<SpinorField, SolverError>)> {
    eps_list
        .iter()
        .map(|&e| {
            let amps: Vec<f64> = family.weights.iter().map(|w| w * e).collect();
            (e, solve_nonlinear_final(model, &family.perturbed(&amps), t_final, opts))
        })
        .collect()
}

/// Residual `‖u_ε − (degree-3 expansion)‖_{L²}` at time `T` for each `ε`,
/// using precomputed perturbed solutions and a cascade run.
pub fn residual_from_parts(
    run: &CascadeRun,
    family: &PerturbationFamily,
    solutions: &[(f64, Result<SpinorField, SolverError>)],
    coeffs: &CascadeCoefficients,
) -> Result<ExpansionResidual, CascadeError> {
    let mut entries = Vec::with_capacity(solutions.len());
    for (eps, sol) in solutions {
        let amps: Vec<f64> = family.weights.iter().map(|w| w * eps).collect();
        entries.push(match sol {
            Ok(u) => ResidualEntry {
                eps: *eps,
                residual_l2: Some(u.distance(&run.expansion(&amps, coeffs)?)),
                error: None,
            },
            Err(e) => ResidualEntry {
                eps: *eps,
                residual_l2: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(ExpansionResidual::from_entries(entries))
}

/// Residual of the degree-3 expansion over `eps_list`, with the fitted
/// log-log slope.
pub fn expansion_residual(
    model: &Nonlinearity,
    family: &PerturbationFamily,
    eps_list: &[f64],
    t_final: f64,
    opts: &SolveOptions,
    coeffs: &CascadeCoefficients,
) -> Result<ExpansionResidual, CascadeError> {
    let run = run_cascade(model, family, 3, t_final, opts)?;
    let solutions = perturbed_solutions(model, family, eps_list, t_final, opts);
    residual_from_parts(&run, family, &solutions, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_sorting_and_factorial() {
        let m = MultiIndex::new(&[2, 0, 2]).unwrap();
        assert_eq!(m.indices(), &[0, 2, 2]);
        assert_eq!(m.factorial(), 2.0);
        assert_eq!(MultiIndex::new(&[1, 1, 1]).unwrap().factorial(), 6.0);
        assert_eq!(MultiIndex::new(&[0, 1, 2]).unwrap().factorial(), 1.0);
        assert!(MultiIndex::new(&[]).is_err());
        assert!(MultiIndex::new(&[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::all(3, 1).len(), 3);
        assert_eq!(MultiIndex::all(3, 2).len(), 6);
        assert_eq!(MultiIndex::all(3, 3).len(), 10);
        assert_eq!(MultiIndex::all(1, 3), vec![MultiIndex(vec![0, 0, 0])]);
    }

    #[test]
    fn member_counts() {
        assert_eq!(cascade_members(3, 3).len(), 38);
        assert_eq!(cascade_members(1, 3).len(), 5);
        assert_eq!(cascade_members(2, 2).len(), 6);
    }

    #[test]
    fn mutations_touch_one_coefficient_each() {
        let base = CascadeCoefficients::default();
        let muts = CascadeCoefficients::mutations(1.0);
        assert_eq!(muts.len(), 11);
        for (name, m) in &muts {
            let mut diff = 0;
            let a = serde_json::to_value(m).unwrap().to_string();
            let b = serde_json::to_value(base).unwrap().to_string();
            assert_ne!(a, b, "{name}");
            let (mut c, mut d) = (*m, base);
            for ((_, x), (_, y)) in c.slots().into_iter().zip(d.slots()) {
                if x != y {
                    diff += 1;
                }
            }
            assert_eq!(diff, 1, "{name}");
        }
    }
}
