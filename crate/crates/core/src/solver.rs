//! Split-step Fourier solver on the periodic box `[−L/2, L/2)³`.
//!
//! The equation `i ∂_t u + i α·∇u − β u = F(x, u)` is written as
//! `∂_t u = −i(α·ξ + β)û − i F(x, u)` in Fourier variables (forward transform
//! with `e^{−ix·ξ}`). One Strang step is a half step of the pointwise flow
//! `∂_t u = −i F(x, u)` by RK4, an exact free step `û ↦ exp(−i dt (α·ξ+β)) û`
//! per mode, and a second pointwise half step.
//!
//! The stepper advances a *stack* of `m` spinor fields at once. The
//! pointwise substep sees all members at a grid point, which lets linearized
//! and higher-order jet equations be integrated together with the background
//! they depend on.

use crate::algebra::{free_propagator, Matrix4C, Spinor};
use crate::nonlinearity::Nonlinearity;
use crate::transport::LightRay;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);
const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// Magic bytes opening a binary trajectory file.
pub const TRAJECTORY_MAGIC: &[u8; 8] = b"DIRTRAJ1";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("grid needs n a power of two with n >= 8 and L > 0 (got n = {n}, L = {length})")]
    InvalidGrid { n: usize, length: f64 },
    #[error("final time {t_final} is not a positive multiple of dt = {dt}")]
    InvalidTimeGrid { t_final: f64, dt: f64 },
    #[error("solution norm {norm:e} exceeded the blow-up guard at t = {time}")]
    Divergence { time: f64, norm: f64 },
    #[error("background mismatch: {0}")]
    BackgroundMismatch(String),
    #[error("point (t = {t}, x = {x:?}) is outside the sampling region")]
    Geometry { t: f64, x: [f64; 3] },
    #[error("support preflight failed: {0}")]
    Support(String),
    #[error("trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform periodic grid with `n` points per axis on a box of side `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self, SolverError> {
        if n < 8 || !n.is_power_of_two() || !(length > 0.0 && length.is_finite()) {
            return Err(SolverError::InvalidGrid { n, length });
        }
        Ok(Self { n, length })
    }

    /// `n = 32`, `L = 16π`.
    pub fn desk() -> Self {
        Self {
            n: 32,
            length: 16.0 * PI,
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Volume element `(L/n)³`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn point(&self, p: usize) -> [f64; 3] {
        let n = self.n;
        [self.coordinate(p / (n * n)), self.coordinate((p / n) % n), self.coordinate(p % n)]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    /// Signed integer mode of FFT slot `k`; the Nyquist slot maps to `−n/2`.
    pub fn mode(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }

    /// Per-axis frequencies `ξ = 2π·mode/L` in FFT order.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|k| 2.0 * PI * self.mode(k) as f64 / self.length).collect()
    }

    /// Frequency used to differentiate or propagate slot `k`. The Nyquist
    /// slot has no sign and is treated as the real mode `cos`, whose odd
    /// derivative vanishes on the grid, so it gets `0`.
    pub fn propagation_frequency(&self, k: usize) -> f64 {
        if self.is_nyquist(k) {
            0.0
        } else {
            2.0 * PI * self.mode(k) as f64 / self.length
        }
    }

    /// Frequency vector of the mode at flat slot `p`.
    pub fn propagation_covector(&self, p: usize) -> [f64; 3] {
        let n = self.n;
        [
            self.propagation_frequency(p / (n * n)),
            self.propagation_frequency((p / n) % n),
            self.propagation_frequency(p % n),
        ]
    }

    /// True when `x` is at least `margin` cells away from the box faces.
    pub fn inside(&self, x: &[f64; 3], margin: f64) -> bool {
        let lim = 0.5 * self.length - margin * self.spacing();
        x.iter().all(|c| c.abs() <= lim)
    }
}

/// Spinor values on a [`Grid`], stored in flat `(i, j, k)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub grid: Grid,
    pub values: Vec<Spinor>,
}

impl SpinorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![Spinor::zeros(); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64; 3]) -> Spinor) -> Self {
        Self {
            grid,
            values: (0..grid.len()).map(|p| f(&grid.point(p))).collect(),
        }
    }

    /// Discrete L² norm `(L/n)^{3/2} · ‖values‖₂`.
    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self.values.iter().map(|v| v.norm_squared()).sum();
        (sq * self.grid.cell_volume()).sqrt()
    }

    /// `(‖u‖² + Σ_a ‖D_a u‖²)^{1/2}` with forward differences `D_a`.
    pub fn h1_proxy(&self) -> f64 {
        let g = self.grid;
        let n = g.n;
        let h2 = g.spacing() * g.spacing();
        let mut grad = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.values[g.index(i, j, k)];
                    for q in [g.index((i + 1) % n, j, k), g.index(i, (j + 1) % n, k), g.index(i, j, (k + 1) % n)] {
                        grad += (self.values[q] - v).norm_squared() / h2;
                    }
                }
            }
        }
        (self.l2_norm().powi(2) + grad * g.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }

    /// L² norm of `self − other`.
    pub fn distance(&self, other: &SpinorField) -> f64 {
        let sq: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_squared()).sum();
        (sq * self.grid.cell_volume()).sqrt()
    }

    /// `self + a · other`, real `a`.
    pub fn axpy(&mut self, a: f64, other: &SpinorField) {
        let a = Complex64::new(a, 0.0);
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += y * a;
        }
    }
}

/// Time-indexed sequence of fields on a uniform time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub model: String,
    pub times: Vec<f64>,
    pub fields: Vec<SpinorField>,
}

impl Trajectory {
    pub fn final_field(&self) -> &SpinorField {
        self.fields.last().expect("trajectories hold at least one field")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories hold at least one time")
    }

    /// Spacing of the time samples (0 for a single sample).
    pub fn time_step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    fn check_uniform(&self) -> Result<f64, SolverError> {
        let dt = self.time_step();
        let ok = self.times.first() == Some(&0.0)
            && dt > 0.0
            && self
                .times
                .iter()
                .enumerate()
                .all(|(k, t)| (t - k as f64 * dt).abs() <= 1e-9 * dt.max(t.abs()));
        if ok && self.fields.len() == self.times.len() {
            Ok(dt)
        } else {
            Err(SolverError::BackgroundMismatch("time grid is not uniform from t = 0".into()))
        }
    }

    /// Scalar diagnostics per sample.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.times
            .iter()
            .zip(&self.fields)
            .map(|(&time, f)| Diagnostic {
                time,
                l2_norm: f.l2_norm(),
                h1_proxy: f.h1_proxy(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostic {
    pub time: f64,
    pub l2_norm: f64,
    pub h1_proxy: f64,
}

pub fn write_diagnostics_csv<W: Write>(rows: &[Diagnostic], mut out: W) -> std::io::Result<()> {
    writeln!(out, "time,l2_norm,h1_proxy")?;
    for r in rows {
        writeln!(out, "{:.17e},{:.17e},{:.17e}", r.time, r.l2_norm, r.h1_proxy)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryHeader {
    grid: Grid,
    model: String,
    times: Vec<f64>,
    layout: String,
}

const LAYOUT: &str = "time-major, then point (i,j,k), then component, [re, im] little-endian f64";

/// Writes `magic | u64 header length | JSON header | f64 data`.
pub fn write_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> Result<(), SolverError> {
    let header = serde_json::to_vec(&TrajectoryHeader {
        grid: traj.grid,
        model: traj.model.clone(),
        times: traj.times.clone(),
        layout: LAYOUT.into(),
    })
    .map_err(|e| SolverError::Format(e.to_string()))?;
    out.write_all(TRAJECTORY_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(traj.grid.len() * 64);
    for f in &traj.fields {
        buf.clear();
        for v in &f.values {
            for c in v.iter() {
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(mut input: R) -> Result<Trajectory, SolverError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(SolverError::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut header)?;
    let header: TrajectoryHeader = serde_json::from_slice(&header).map_err(|e| SolverError::Format(e.to_string()))?;
    let grid = Grid::new(header.grid.n, header.grid.length)?;
    let mut buf = vec![0u8; grid.len() * 64];
    let mut fields = Vec::with_capacity(header.times.len());
    for _ in &header.times {
        input.read_exact(&mut buf)?;
        let f = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().expect("8-byte slice"));
        let values = (0..grid.len())
            .map(|p| Spinor::from_fn(|c, _| Complex64::new(f(p * 64 + c * 16), f(p * 64 + c * 16 + 8))))
            .collect();
        fields.push(SpinorField { grid, values });
    }
    Ok(Trajectory {
        grid,
        model: header.model,
        times: header.times,
        fields,
    })
}

/// Checks that `field` is concentrated in the middle half of the box and
/// that the light cone over `[0, t_final]` stays inside the box.
pub fn check_support(field: &SpinorField, t_final: f64, tol: f64) -> Result<(), SolverError> {
    let g = field.grid;
    let quarter = 0.25 * g.length;
    if t_final > quarter {
        return Err(SolverError::Support(format!(
            "T = {t_final} exceeds L/4 = {quarter}; the light cone would wrap around"
        )));
    }
    let (mut outside, mut total) = (0.0, 0.0);
    for (p, v) in field.values.iter().enumerate() {
        let m = v.norm_squared();
        total += m;
        if g.point(p).iter().any(|c| c.abs() > quarter) {
            outside += m;
        }
    }
    if total > 0.0 && outside > tol * total {
        return Err(SolverError::Support(format!(
            "relative mass {:.3e} outside the middle half of the box",
            outside / total
        )));
    }
    Ok(())
}

/// 3-D FFT built from 1-D transforms along each axis.
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scratch: vec![Complex64::new(0.0, 0.0); n * n * n],
        }
    }

    /// Unnormalized forward transform `Σ_x u(x) e^{−2πi k·x/n}`.
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        let fft = self.forward.clone();
        self.apply(buf, &*fft);
    }

    /// Inverse transform including the `1/n³` factor.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        let fft = self.inverse.clone();
        self.apply(buf, &*fft);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    fn apply(&mut self, buf: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        let n2 = n * n;
        fft.process(buf);
        // axis j: transpose each (j, k) slab
        for i in 0..n {
            let slab = &mut buf[i * n2..(i + 1) * n2];
            let tmp = &mut self.scratch[..n2];
            for j in 0..n {
                for k in 0..n {
                    tmp[k * n + j] = slab[j * n + k];
                }
            }
            fft.process(tmp);
            for j in 0..n {
                for k in 0..n {
                    slab[j * n + k] = tmp[k * n + j];
                }
            }
        }
        // axis i
        let tmp = &mut self.scratch;
        for i in 0..n {
            for jk in 0..n2 {
                tmp[jk * n + i] = buf[i * n2 + jk];
            }
        }
        fft.process(tmp);
        for i in 0..n {
            for jk in 0..n2 {
                buf[i * n2 + jk] = tmp[jk * n + i];
            }
        }
    }
}

/// Pointwise right-hand side for a stack of `members()` spinor fields.
pub trait LocalFlow: Sync {
    fn members(&self) -> usize;

    /// Writes `dy/dt` for the member stack `y` at grid point `p`.
    fn rhs(&self, p: usize, x: &[f64; 3], t: f64, y: &[Spinor], dy: &mut [Spinor]);
}

/// Strang split-step integrator for member stacks stored point-major,
/// `state[p * m + j]`.
pub struct Stepper {
    pub grid: Grid,
    pub dt: f64,
    fft: Fft3,
    propagator: Vec<Matrix4C>,
    points: Vec<[f64; 3]>,
    comps: [Vec<Complex64>; 4],
}

impl Stepper {
    pub fn new(grid: Grid, dt: f64) -> Self {
        let propagator = (0..grid.len())
            .map(|p| free_propagator(&grid.propagation_covector(p), dt))
            .collect();
        let zeros = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            dt,
            fft: Fft3::new(grid.n),
            propagator,
            points: grid.points(),
            comps: [zeros.clone(), zeros.clone(), zeros.clone(), zeros],
        }
    }

    /// One Strang step from `t` to `t + dt`.
    pub fn step<F: LocalFlow>(&mut self, state: &mut [Spinor], t: f64, flow: &F) {
        let m = flow.members();
        let h = 0.5 * self.dt;
        self.local(state, t, h, flow);
        for j in 0..m {
            self.free(state, m, j);
        }
        self.local(state, t + h, h, flow);
    }

    fn local<F: LocalFlow>(&self, state: &mut [Spinor], t: f64, h: f64, flow: &F) {
        let m = flow.members();
        let points = &self.points;
        state.par_chunks_mut(m).enumerate().for_each_init(
            || vec![Spinor::zeros(); 5 * m],
            |scratch, (p, y)| {
                let (k1, rest) = scratch.split_at_mut(m);
                let (k2, rest) = rest.split_at_mut(m);
                let (k3, rest) = rest.split_at_mut(m);
                let (k4, tmp) = rest.split_at_mut(m);
                let x = &points[p];
                let hc = Complex64::new(h, 0.0);
                let half = Complex64::new(0.5 * h, 0.0);
                flow.rhs(p, x, t, y, k1);
                for j in 0..m {
                    tmp[j] = y[j] + k1[j] * half;
                }
                flow.rhs(p, x, t + 0.5 * h, tmp, k2);
                for j in 0..m {
                    tmp[j] = y[j] + k2[j] * half;
                }
                flow.rhs(p, x, t + 0.5 * h, tmp, k3);
                for j in 0..m {
                    tmp[j] = y[j] + k3[j] * hc;
                }
                flow.rhs(p, x, t + h, tmp, k4);
                let sixth = Complex64::new(h / 6.0, 0.0);
                let two = Complex64::new(2.0, 0.0);
                for j in 0..m {
                    y[j] += (k1[j] + (k2[j] + k3[j]) * two + k4[j]) * sixth;
                }
            },
        );
    }

    fn free(&mut self, state: &mut [Spinor], m: usize, j: usize) {
        for (p, v) in state.iter().skip(j).step_by(m).enumerate() {
            for c in 0..4 {
                self.comps[c][p] = v[c];
            }
        }
        for c in 0..4 {
            self.fft.forward(&mut self.comps[c]);
        }
        let [c0, c1, c2, c3] = &mut self.comps;
        for p in 0..self.grid.len() {
            let v = self.propagator[p] * Spinor::new(c0[p], c1[p], c2[p], c3[p]);
            c0[p] = v[0];
            c1[p] = v[1];
            c2[p] = v[2];
            c3[p] = v[3];
        }
        for c in 0..4 {
            self.fft.inverse(&mut self.comps[c]);
        }
        for (p, v) in state.iter_mut().skip(j).step_by(m).enumerate() {
            for c in 0..4 {
                v[c] = self.comps[c][p];
            }
        }
    }

    /// Advances `steps` steps from `t = 0`, calling `observer(step, t, state)`
    /// after every step. Fails when member 0 leaves `|u| ≤ guard`.
    pub fn evolve<F: LocalFlow>(
        &mut self,
        state: &mut [Spinor],
        steps: usize,
        flow: &F,
        guard: f64,
        mut observer: impl FnMut(usize, f64, &[Spinor]) -> Result<(), SolverError>,
    ) -> Result<(), SolverError> {
        let m = flow.members();
        for s in 0..steps {
            let t = s as f64 * self.dt;
            self.step(state, t, flow);
            let t1 = (s + 1) as f64 * self.dt;
            let peak = state.iter().step_by(m).map(|v| v.norm()).fold(0.0, |a: f64, b| {
                if b.is_nan() {
                    f64::INFINITY
                } else {
                    a.max(b)
                }
            });
            if !(peak <= guard) {
                return Err(SolverError::Divergence { time: t1, norm: peak });
            }
            observer(s + 1, t1, state)?;
        }
        Ok(())
    }
}

/// Interleaves fields into the point-major member stack.
pub fn pack(fields: &[&SpinorField]) -> Vec<Spinor> {
    let m = fields.len();
    let len = fields[0].values.len();
    let mut state = vec![Spinor::zeros(); len * m];
    for (j, f) in fields.iter().enumerate() {
        for (p, v) in f.values.iter().enumerate() {
            state[p * m + j] = *v;
        }
    }
    state
}

/// Extracts member `j` of an `m`-member stack.
pub fn unpack(grid: Grid, state: &[Spinor], m: usize, j: usize) -> SpinorField {
    SpinorField {
        grid,
        values: state.iter().skip(j).step_by(m).copied().collect(),
    }
}

/// Time step, recording stride and blow-up guard of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub dt: f64,
    /// Record every `record_stride`-th step (1 = every step).
    pub record_stride: usize,
    /// Largest admissible pointwise `|u|`.
    pub blowup_guard: f64,
}

impl SolveOptions {
    /// `dt = T/256`, every step recorded.
    pub fn desk(t_final: f64) -> Self {
        Self {
            dt: t_final / 256.0,
            record_stride: 1,
            blowup_guard: 1e6,
        }
    }
}

/// Number of steps of size `dt` covering `[0, t_final]`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize, SolverError> {
    let steps = (t_final / dt).round();
    if !(t_final > 0.0 && dt > 0.0) || steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(SolverError::InvalidTimeGrid { t_final, dt });
    }
    Ok(steps as usize)
}

struct NonlinearFlow<'a> {
    model: &'a Nonlinearity,
}

impl LocalFlow for NonlinearFlow<'_> {
    fn members(&self) -> usize {
        1
    }

    fn rhs(&self, _p: usize, x: &[f64; 3], _t: f64, y: &[Spinor], dy: &mut [Spinor]) {
        dy[0] = self.model.evaluate(x, &y[0]) * MINUS_I;
    }
}

/// Solves the nonlinear equation from `u(0) = phi` on `[0, t_final]`.
pub fn solve_nonlinear(
    model: &Nonlinearity,
    phi: &SpinorField,
    t_final: f64,
    opts: &SolveOptions,
) -> Result<Trajectory, SolverError> {
    let steps = step_count(t_final, opts.dt)?;
    let stride = opts.record_stride.max(1);
    let grid = phi.grid;
    let mut stepper = Stepper::new(grid, opts.dt);
    let mut state = phi.values.clone();
    let mut traj = Trajectory {
        grid,
        model: model.name().to_string(),
        times: vec![0.0],
        fields: vec![phi.clone()],
    };
    stepper.evolve(&mut state, steps, &NonlinearFlow { model }, opts.blowup_guard, |s, t, st| {
        if s % stride == 0 || s == steps {
            traj.times.push(t);
            traj.fields.push(SpinorField {
                grid,
                values: st.to_vec(),
            });
        }
        Ok(())
    })?;
    Ok(traj)
}

/// Final field of the nonlinear solve without storing the trajectory.
pub fn solve_nonlinear_final(
    model: &Nonlinearity,
    phi: &SpinorField,
    t_final: f64,
    opts: &SolveOptions,
) -> Result<SpinorField, SolverError> {
    let steps = step_count(t_final, opts.dt)?;
    let mut stepper = Stepper::new(phi.grid, opts.dt);
    let mut state = phi.values.clone();
    stepper.evolve(&mut state, steps, &NonlinearFlow { model }, opts.blowup_guard, |_, _, _| Ok(()))?;
    Ok(SpinorField {
        grid: phi.grid,
        values: state,
    })
}

struct LinearizedFlow<'a> {
    model: &'a Nonlinearity,
    source: Option<&'a Trajectory>,
    source_dt: f64,
}

impl LinearizedFlow<'_> {
    fn source_at(&self, p: usize, t: f64) -> Spinor {
        let Some(src) = self.source else {
            return Spinor::zeros();
        };
        let last = src.times.len() - 1;
        let pos = (t / self.source_dt).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last.saturating_sub(1));
        let theta = pos - k as f64;
        if last == 0 {
            return src.fields[0].values[p];
        }
        src.fields[k].values[p] * Complex64::new(1.0 - theta, 0.0)
            + src.fields[k + 1].values[p] * Complex64::new(theta, 0.0)
    }
}

impl LocalFlow for LinearizedFlow<'_> {
    fn members(&self) -> usize {
        2
    }

    fn rhs(&self, p: usize, x: &[f64; 3], t: f64, y: &[Spinor], dy: &mut [Spinor]) {
        let local = self.model.at(x);
        dy[0] = local.value(&y[0]) * MINUS_I;
        dy[1] = (local.first(&y[0], &y[1]) + self.source_at(p, t)) * MINUS_I;
    }
}

/// Tolerance for re-integrated backgrounds against the stored samples.
const BACKGROUND_TOL: f64 = 1e-9;

/// Solves `i ∂_t w + i α·∇w − β w − F′(u) w = f`, `w(0) = phi_init`, on the
/// time grid of `background`.
///
/// The background is advanced together with `w` by the same steps that
/// produced it, so the potential `F′(u)` is available at every RK4 stage;
/// each step is checked against the stored sample. The source is
/// interpolated linearly in time.
pub fn solve_linearized(
    model: &Nonlinearity,
    background: &Trajectory,
    phi_init: &SpinorField,
    source: Option<&Trajectory>,
) -> Result<Trajectory, SolverError> {
    let dt = background.check_uniform()?;
    if phi_init.grid != background.grid {
        return Err(SolverError::BackgroundMismatch("initial data on a different grid".into()));
    }
    if let Some(src) = source {
        let sdt = src.check_uniform()?;
        if src.grid != background.grid
            || src.times.len() != background.times.len()
            || (sdt - dt).abs() > 1e-12 * dt
        {
            return Err(SolverError::BackgroundMismatch("source and background time grids differ".into()));
        }
    }
    let grid = background.grid;
    let steps = background.times.len() - 1;
    let flow = LinearizedFlow {
        model,
        source,
        source_dt: dt,
    };
    let mut stepper = Stepper::new(grid, dt);
    let mut state = pack(&[&background.fields[0], phi_init]);
    let mut traj = Trajectory {
        grid,
        model: model.name().to_string(),
        times: vec![0.0],
        fields: vec![phi_init.clone()],
    };
    stepper.evolve(&mut state, steps, &flow, f64::INFINITY, |s, t, st| {
        let u = unpack(grid, st, 2, 0);
        let stored = &background.fields[s];
        let dev = u.distance(stored);
        if dev > BACKGROUND_TOL * (1.0 + stored.l2_norm()) {
            return Err(SolverError::BackgroundMismatch(format!(
                "background sample at t = {t} deviates by {dev:e} from the solution of model `{}`",
                model.name()
            )));
        }
        traj.times.push(t);
        traj.fields.push(unpack(grid, st, 2, 1));
        Ok(())
    })?;
    Ok(traj)
}

/// Fourier coefficients of the four components of a field.
fn spectrum(field: &SpinorField, fft: &mut Fft3) -> [Vec<Complex64>; 4] {
    std::array::from_fn(|c| {
        let mut buf: Vec<Complex64> = field.values.iter().map(|v| v[c]).collect();
        fft.forward(&mut buf);
        buf
    })
}

/// Per-axis interpolation weights `e^{iξ_k(x + L/2)}`; the Nyquist slot is
/// split symmetrically and contributes `cos`.
fn axis_weights(grid: &Grid, x: f64) -> Vec<Complex64> {
    let n = grid.n;
    let shift = x + 0.5 * grid.length;
    (0..n)
        .map(|k| {
            let xi = 2.0 * PI * grid.mode(k) as f64 / grid.length;
            if grid.is_nyquist(k) {
                Complex64::new((xi * shift).cos(), 0.0)
            } else {
                (I * xi * shift).exp()
            }
        })
        .collect()
}

fn interpolate(grid: &Grid, spec: &[Vec<Complex64>; 4], x: &[f64; 3]) -> Spinor {
    let n = grid.n;
    let w: [Vec<Complex64>; 3] = std::array::from_fn(|a| axis_weights(grid, x[a]));
    let scale = 1.0 / grid.len() as f64;
    Spinor::from_fn(|c, _| {
        let s = &spec[c];
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut acc_j = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let row = &s[(i * n + j) * n..(i * n + j + 1) * n];
                let acc_k: Complex64 = row.iter().zip(&w[2]).map(|(a, b)| a * b).sum();
                acc_j += acc_k * w[1][j];
            }
            acc += acc_j * w[0][i];
        }
        acc * scale
    })
}

/// Samples `traj` at `Γ(s)` for each `s`: trigonometric interpolation in
/// space, linear in time. Points closer than two cells to the box faces or
/// outside the recorded time span are rejected.
pub fn sample_along_ray(traj: &Trajectory, ray: &LightRay, s_grid: &[f64]) -> Result<Vec<Spinor>, SolverError> {
    let grid = traj.grid;
    let (t_first, t_last) = (traj.times[0], traj.final_time());
    let dt = traj.time_step();
    let mut fft = Fft3::new(grid.n);
    let mut cache: BTreeMap<usize, [Vec<Complex64>; 4]> = BTreeMap::new();
    let mut out = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let pt = ray.point(s);
        let slack = 1e-12 * t_last.abs().max(1.0);
        if !grid.inside(&pt.x, 2.0) || pt.t < t_first - slack || pt.t > t_last + slack {
            return Err(SolverError::Geometry { t: pt.t, x: pt.x });
        }
        let (k, theta) = if traj.times.len() == 1 {
            (0, 0.0)
        } else {
            let pos = ((pt.t - t_first) / dt).clamp(0.0, (traj.times.len() - 1) as f64);
            let k = (pos.floor() as usize).min(traj.times.len() - 2);
            (k, pos - k as f64)
        };
        let needed: &[usize] = if theta == 0.0 { &[k] } else { &[k, k + 1] };
        cache.retain(|idx, _| *idx + 1 >= k && *idx <= k + 1);
        let mut value = Spinor::zeros();
        for (&idx, weight) in needed.iter().zip([1.0 - theta, theta]) {
            let spec = cache.entry(idx).or_insert_with(|| spectrum(&traj.fields[idx], &mut fft));
            value += interpolate(&grid, spec, &pt.x) * Complex64::new(weight, 0.0);
        }
        out.push(value);
    }
    Ok(out)
}

/// Spectral derivative `∂_a` of a field (Nyquist slot dropped).
pub fn spectral_gradient(field: &SpinorField) -> [SpinorField; 3] {
    let grid = field.grid;
    let mut fft = Fft3::new(grid.n);
    let spec = spectrum(field, &mut fft);
    std::array::from_fn(|a| {
        let comps: [Vec<Complex64>; 4] = std::array::from_fn(|c| {
            let mut buf: Vec<Complex64> = (0..grid.len())
                .map(|p| spec[c][p] * I * grid.propagation_covector(p)[a])
                .collect();
            fft.inverse(&mut buf);
            buf
        });
        SpinorField {
            grid,
            values: (0..grid.len())
                .map(|p| Spinor::new(comps[0][p], comps[1][p], comps[2][p], comps[3][p]))
                .collect(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(8, 1.0).is_ok());
        assert!(Grid::new(12, 1.0).is_err());
        assert!(Grid::new(4, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
    }

    #[test]
    fn frequencies_in_fft_order() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        assert_eq!(g.frequencies(), vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
        assert_eq!(g.propagation_frequency(4), 0.0);
        assert_eq!(g.coordinate(0), -PI);
    }

    #[test]
    fn flat_indexing_round_trips() {
        let g = Grid::new(8, 4.0).unwrap();
        let p = g.index(3, 5, 1);
        assert_eq!(g.point(p), [g.coordinate(3), g.coordinate(5), g.coordinate(1)]);
    }

    #[test]
    fn fft_round_trip_and_single_mode() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        let mut fft = Fft3::new(8);
        let mut buf: Vec<Complex64> = (0..g.len())
            .map(|p| {
                let x = g.point(p);
                (I * (x[0] + 2.0 * x[1] - 3.0 * x[2])).exp()
            })
            .collect();
        let orig = buf.clone();
        fft.forward(&mut buf);
        let peak = buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!((peak - 512.0).abs() < 1e-9);
        let nonzero = buf.iter().filter(|c| c.norm() > 1e-9).count();
        assert_eq!(nonzero, 1);
        fft.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn step_count_rejects_incommensurate_dt() {
        assert_eq!(step_count(1.0, 0.25).unwrap(), 4);
        assert!(step_count(1.0, 0.3).is_err());
        assert!(step_count(0.0, 0.1).is_err());
    }

    #[test]
    fn support_preflight() {
        let g = Grid::new(16, 16.0).unwrap();
        let bump = SpinorField::from_fn(g, |x| {
            let r2 = x.iter().map(|c| c * c).sum::<f64>();
            Spinor::new(Complex64::new((-r2).exp(), 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        });
        assert!(check_support(&bump, 1.0, 1e-10).is_ok());
        assert!(check_support(&bump, 5.0, 1e-10).is_err());
        let flat = SpinorField::from_fn(g, |_| Spinor::from_element(Complex64::new(1.0, 0.0)));
        assert!(check_support(&flat, 1.0, 1e-10).is_err());
    }
}
