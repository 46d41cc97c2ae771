//! Dirac and Pauli matrix algebra on ℂ⁴.
//!
//! Conventions: α_j = [[0, σ_j], [σ_j, 0]], β = diag(1, 1, −1, −1). The
//! principal symbol of the Dirac operator is `p(τ, ξ) = −τ − α·ξ` and its
//! cofactor symbol is `p̃(τ, ξ) = τ − α·ξ`, so that `p̃ p = (τ² − |ξ|²) I`.
//! Both signs are exposed explicitly; nothing in the crate relies on an
//! implicit one.
//!
//! Real-linear maps on ℂ⁴ (needed whenever a nonlinearity involves complex
//! conjugates) are represented on the realified space ℝ⁸ with the
//! interleaved layout `[Re z₀, Im z₀, Re z₁, Im z₁, …]`.

use nalgebra::{ComplexField, DMatrix, DVector, Matrix2, Matrix4, SMatrix, SVector, Vector4};
use num_complex::Complex64;
use thiserror::Error;

/// A 4-component complex amplitude.
pub type Spinor = Vector4<Complex64>;
/// A 4×4 complex matrix.
pub type Matrix4C = Matrix4<Complex64>;
/// A spinor viewed as a vector of ℝ⁸.
pub type RealSpinor = SVector<f64, 8>;
/// A real-linear map of ℂ⁴ ≅ ℝ⁸.
pub type RealMap = SMatrix<f64, 8, 8>;

/// Tolerance on `τ² − |ξ|²` for a covector to count as lightlike.
pub const LIGHTLIKE_TOL: f64 = 1e-12;
/// Tolerance on `|ξ₀| − 1` accepted by [`light_projector`].
pub const UNIT_TOL: f64 = 1e-10;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("covector (tau = {tau}, xi = {xi:?}) is not lightlike")]
    NotLightlike { tau: f64, xi: [f64; 3] },
    #[error("direction {xi:?} is not a unit vector (|xi| = {norm})")]
    NotUnit { xi: [f64; 3], norm: f64 },
    #[error("subspaces intersect nontrivially (relative singular value {sigma:e})")]
    Degenerate { sigma: f64 },
    #[error("cosets do not intersect (residual {residual:e})")]
    NoIntersection { residual: f64 },
}

/// Frequency covector `(τ, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Covector {
    pub tau: f64,
    pub xi: [f64; 3],
}

impl Covector {
    pub const fn new(tau: f64, xi: [f64; 3]) -> Self {
        Self { tau, xi }
    }

    /// The future-pointing lightlike covector `(|ξ|, ξ)`.
    pub fn future_lightlike(xi: [f64; 3]) -> Self {
        Self { tau: norm3(&xi), xi }
    }

    pub fn xi_norm(&self) -> f64 {
        norm3(&self.xi)
    }

    /// `τ² − |ξ|²`, the scalar symbol of the wave operator.
    pub fn wave_symbol(&self) -> f64 {
        self.tau * self.tau - dot3(&self.xi, &self.xi)
    }

    pub fn is_lightlike(&self) -> bool {
        let scale = 1.0_f64.max(self.tau * self.tau);
        self.xi_norm() > 0.0 && self.wave_symbol().abs() <= LIGHTLIKE_TOL * scale
    }

    pub fn is_future(&self) -> bool {
        self.tau > 0.0
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            tau: k * self.tau,
            xi: [k * self.xi[0], k * self.xi[1], k * self.xi[2]],
        }
    }

    fn require_lightlike(&self) -> Result<(), AlgebraError> {
        if self.is_lightlike() {
            Ok(())
        } else {
            Err(AlgebraError::NotLightlike { tau: self.tau, xi: self.xi })
        }
    }
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Pauli matrix σ_j for `j ∈ {1, 2, 3}`.
pub fn pauli(j: usize) -> Matrix2<Complex64> {
    match j {
        1 => Matrix2::new(ZERO, ONE, ONE, ZERO),
        2 => Matrix2::new(ZERO, -I, I, ZERO),
        3 => Matrix2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("Pauli index must be 1, 2 or 3, got {j}"),
    }
}

/// Dirac matrix α_j for `j ∈ {1, 2, 3}`.
pub fn alpha(j: usize) -> Matrix4C {
    let s = pauli(j);
    let mut m = Matrix4C::zeros();
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&s);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&s);
    m
}

/// Mass matrix β = diag(I₂, −I₂).
pub fn beta() -> Matrix4C {
    Matrix4C::from_diagonal(&Vector4::new(ONE, ONE, -ONE, -ONE))
}

/// Diagonal of β, handy for pointwise kernels.
pub const BETA_DIAG: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

/// `α·ξ = Σ ξ_j α_j`, written out entrywise.
pub fn alpha_dot(xi: &[f64; 3]) -> Matrix4C {
    let [x1, x2, x3] = *xi;
    let a = re(x3);
    let b = Complex64::new(x1, -x2);
    let c = Complex64::new(x1, x2);
    let d = re(-x3);
    Matrix4C::new(
        ZERO, ZERO, a, b, //
        ZERO, ZERO, c, d, //
        a, b, ZERO, ZERO, //
        c, d, ZERO, ZERO,
    )
}

/// Principal symbol `p(τ, ξ) = −τ I − α·ξ`.
pub fn principal_symbol(eta: &Covector) -> Matrix4C {
    Matrix4C::identity() * re(-eta.tau) - alpha_dot(&eta.xi)
}

/// Cofactor symbol `p̃(τ, ξ) = τ I − α·ξ`.
pub fn cosymbol(eta: &Covector) -> Matrix4C {
    Matrix4C::identity() * re(eta.tau) - alpha_dot(&eta.xi)
}

/// Two spinors spanning `ker p(τ, ξ)` for lightlike `(τ, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBasis {
    pub a: Spinor,
    pub b: Spinor,
}

impl KernelBasis {
    pub fn vectors(&self) -> [Spinor; 2] {
        [self.a, self.b]
    }

    pub fn matrix(&self) -> SMatrix<Complex64, 4, 2> {
        SMatrix::<Complex64, 4, 2>::from_columns(&[self.a, self.b])
    }

    /// Gram–Schmidt orthonormalization of the pair.
    pub fn orthonormalized(&self) -> KernelBasis {
        let a = self.a / re(self.a.norm());
        let b = self.b - a * a.dotc(&self.b);
        KernelBasis { a, b: b / re(b.norm()) }
    }

    /// Smallest singular value of the 4×2 matrix of normalized columns.
    pub fn min_singular_value(&self) -> f64 {
        let m = SMatrix::<Complex64, 4, 2>::from_columns(&[
            self.a / re(self.a.norm()),
            self.b / re(self.b.norm()),
        ]);
        m.singular_values().min()
    }
}

/// Kernel of the principal symbol at a lightlike covector, returned exactly
/// as `{(ξ³, ξ¹+iξ², −τ, 0), (−ξ¹+iξ², ξ³, 0, τ)}` without normalization.
pub fn kernel_basis(eta: &Covector) -> Result<KernelBasis, AlgebraError> {
    eta.require_lightlike()?;
    let [x1, x2, x3] = eta.xi;
    let t = eta.tau;
    Ok(KernelBasis {
        a: Spinor::new(re(x3), Complex64::new(x1, x2), re(-t), ZERO),
        b: Spinor::new(Complex64::new(-x1, x2), re(x3), ZERO, re(t)),
    })
}

/// Orthogonal projector `½(1 − α·ξ₀)` onto `ker(1 + α·ξ₀)`.
pub fn light_projector(xi0: &[f64; 3]) -> Result<Matrix4C, AlgebraError> {
    let norm = norm3(xi0);
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(AlgebraError::NotUnit { xi: *xi0, norm });
    }
    Ok((Matrix4C::identity() - alpha_dot(xi0)) * re(0.5))
}

/// Relative singular-value threshold below which two spans are treated as
/// intersecting.
pub const COSET_RANK_TOL: f64 = 1e-10;

/// The unique point of `(v1 + span K1) ∩ (v2 + span K2)`.
///
/// Solves `K1 a − K2 b = v2 − v1` through an SVD of the stacked system, so a
/// nontrivial intersection of the spans shows up as a vanishing singular
/// value rather than as a blown-up inverse.
pub fn coset_intersect(
    v1: &Spinor,
    span1: &[Spinor],
    v2: &Spinor,
    span2: &[Spinor],
) -> Result<Spinor, AlgebraError> {
    let cols = span1.len() + span2.len();
    if cols == 0 {
        let residual = (v1 - v2).norm();
        return if residual <= COSET_RANK_TOL * (1.0 + v1.norm()) {
            Ok(*v1)
        } else {
            Err(AlgebraError::NoIntersection { residual })
        };
    }
    if cols > 4 {
        return Err(AlgebraError::Degenerate { sigma: 0.0 });
    }
    let mut m = DMatrix::<Complex64>::zeros(4, cols);
    for (j, k) in span1.iter().enumerate() {
        m.set_column(j, k);
    }
    for (j, k) in span2.iter().enumerate() {
        m.set_column(span1.len() + j, &(-k));
    }
    // Column scaling keeps the rank test independent of how the spans are
    // normalized.
    let scales: Vec<f64> = (0..cols).map(|j| m.column(j).norm()).collect();
    if scales.iter().any(|&s| s == 0.0) {
        return Err(AlgebraError::Degenerate { sigma: 0.0 });
    }
    for (j, s) in scales.iter().enumerate() {
        m.column_mut(j).unscale_mut(*s);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= COSET_RANK_TOL * smax {
        return Err(AlgebraError::Degenerate { sigma: smin / smax });
    }
    let rhs = DVector::from_column_slice((v2 - v1).as_slice());
    let coeffs = svd
        .solve(&rhs, 0.0)
        .map_err(|_| AlgebraError::Degenerate { sigma: smin / smax })?;
    let mut w = *v1;
    let mut w2 = *v2;
    for (j, k) in span1.iter().enumerate() {
        w += k * (coeffs[j] / re(scales[j]));
    }
    for (j, k) in span2.iter().enumerate() {
        let idx = span1.len() + j;
        w2 += k * (coeffs[idx] / re(scales[idx]));
    }
    let residual = (w - w2).norm();
    if residual > COSET_RANK_TOL * (1.0 + w.norm()) {
        return Err(AlgebraError::NoIntersection { residual });
    }
    Ok(w)
}

/// `exp(sA)` by scaling and squaring around a Taylor series.
///
/// The series is summed until a term drops below `1e-16` relative to the
/// partial sum, after scaling `sA` down to norm ≤ ½.
pub fn expm<T, const D: usize>(a: &SMatrix<T, D, D>, s: f64) -> SMatrix<T, D, D>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let scaled = a * T::from_real(s);
    let norm = scaled.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = scaled * T::from_real(0.5_f64.powi(squarings));
    let mut sum = SMatrix::<T, D, D>::identity();
    let mut term = SMatrix::<T, D, D>::identity();
    for k in 1..200 {
        term = term * b * T::from_real(1.0 / k as f64);
        sum += term;
        if term.norm() <= 1e-16 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// `exp(sA)` for a 4×4 complex matrix.
pub fn matrix_exponential(a: &Matrix4C, s: f64) -> Matrix4C {
    expm(a, s)
}

/// Free Dirac propagator `exp(−it(α·ξ + β))` in closed form.
///
/// Since `(α·ξ + β)² = (1 + |ξ|²) I`, the exponential is
/// `cos(tλ) I − i sin(tλ)/λ (α·ξ + β)` with `λ = √(1 + |ξ|²)`.
pub fn free_propagator(xi: &[f64; 3], t: f64) -> Matrix4C {
    let lambda = (1.0 + dot3(xi, xi)).sqrt();
    let h = alpha_dot(xi) + beta();
    let (sin, cos) = (t * lambda).sin_cos();
    Matrix4C::identity() * re(cos) - h * Complex64::new(0.0, sin / lambda)
}

/// Spinor as a vector of ℝ⁸, real and imaginary parts interleaved.
pub fn realify(v: &Spinor) -> RealSpinor {
    RealSpinor::from_fn(|r, _| {
        let z = v[r / 2];
        if r % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

pub fn complexify(r: &RealSpinor) -> Spinor {
    Spinor::from_fn(|j, _| Complex64::new(r[2 * j], r[2 * j + 1]))
}

/// Real 8×8 representation of a complex-linear map.
pub fn realify_matrix(m: &Matrix4C) -> RealMap {
    let mut r = RealMap::zeros();
    for j in 0..4 {
        for k in 0..4 {
            let z = m[(j, k)];
            r[(2 * j, 2 * k)] = z.re;
            r[(2 * j, 2 * k + 1)] = -z.im;
            r[(2 * j + 1, 2 * k)] = z.im;
            r[(2 * j + 1, 2 * k + 1)] = z.re;
        }
    }
    r
}

/// The complex matrix of a real-linear map, if the map commutes with
/// multiplication by `i` to within `tol` (relative to its norm).
pub fn complexify_map(r: &RealMap, tol: f64) -> Option<Matrix4C> {
    let j = realify_matrix(&(Matrix4C::identity() * I));
    let defect = (r * j - j * r).norm();
    if defect > tol * r.norm().max(1.0) {
        return None;
    }
    Some(Matrix4C::from_fn(|a, b| {
        Complex64::new(r[(2 * a, 2 * b)], r[(2 * a + 1, 2 * b)])
    }))
}

/// Spectral norm of a real map (largest singular value).
pub fn operator_norm(r: &RealMap) -> f64 {
    r.singular_values().max()
}

/// Real orthonormal basis `{a, ia, b, ib}` of a complex 2-plane given by an
/// orthonormal pair.
pub fn real_frame(basis: &KernelBasis) -> [RealSpinor; 4] {
    let on = basis.orthonormalized();
    [
        realify(&on.a),
        realify(&(on.a * I)),
        realify(&on.b),
        realify(&(on.b * I)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_spinor(rng: &mut ChaCha8Rng) -> Spinor {
        Spinor::from_fn(|_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = norm3(&v);
            if n > 0.1 && n < 1.0 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    #[test]
    fn anticommutation_is_exact() {
        let id = Matrix4C::identity();
        for j in 1..=3 {
            for k in 1..=3 {
                let ac = alpha(j) * alpha(k) + alpha(k) * alpha(j);
                let expect = if j == k { id * re(2.0) } else { Matrix4C::zeros() };
                assert_eq!(ac, expect, "alpha_{j} alpha_{k}");
            }
            assert_eq!(alpha(j) * beta() + beta() * alpha(j), Matrix4C::zeros());
            assert_eq!(alpha(j).adjoint(), alpha(j));
        }
        assert_eq!(beta() * beta(), id);
    }

    #[test]
    fn alpha_dot_matches_sum() {
        let xi = [0.3, -1.2, 2.5];
        let sum = alpha(1) * re(xi[0]) + alpha(2) * re(xi[1]) + alpha(3) * re(xi[2]);
        assert!((alpha_dot(&xi) - sum).norm() < 1e-15);
    }

    #[test]
    fn principal_symbol_at_zero_xi_is_identity() {
        let p = principal_symbol(&Covector::new(-1.0, [0.0; 3]));
        assert_eq!(p, Matrix4C::identity());
        assert_eq!(cosymbol(&Covector::new(1.0, [0.0; 3])), Matrix4C::identity());
    }

    #[test]
    fn principal_symbol_entries_match_display() {
        let (t, x1, x2, x3) = (0.7, 0.2, -0.4, 0.9);
        let p = principal_symbol(&Covector::new(t, [x1, x2, x3]));
        let expect = Matrix4C::new(
            re(-t), ZERO, re(-x3), c(-x1, x2), //
            ZERO, re(-t), c(-x1, -x2), re(x3), //
            re(-x3), c(-x1, x2), re(-t), ZERO, //
            c(-x1, -x2), re(x3), ZERO, re(-t),
        );
        assert_eq!(p, expect);
    }

    #[test]
    fn symbol_annihilates_reference_kernel_vectors() {
        let p = principal_symbol(&Covector::new(-1.0, [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]));
        let v1 = Spinor::new(re(2.0), c(-1.0, 2.0), re(3.0), ZERO);
        let v2 = Spinor::new(c(1.0, 2.0), re(2.0), ZERO, re(-3.0));
        assert!((p * v1).norm() < 1e-14);
        assert!((p * v2).norm() < 1e-14);
    }

    #[test]
    fn cosymbol_product_is_wave_symbol() {
        // (τ − α·ξ)(−τ − α·ξ) = |ξ|² − τ², i.e. −(τ² − |ξ|²) I
        let eta = Covector::new(2.0, [1.0, 0.0, 0.0]);
        let prod = cosymbol(&eta) * principal_symbol(&eta);
        assert_eq!(prod, Matrix4C::identity() * re(-3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let eta = Covector::new(
                rng.gen_range(-2.0..2.0),
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            );
            let prod = cosymbol(&eta) * principal_symbol(&eta);
            assert!((prod + Matrix4C::identity() * re(eta.wave_symbol())).norm() < 1e-13);
        }
    }

    #[test]
    fn cosymbol_kills_symbol_on_light_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let xi = random_unit(&mut rng);
            let eta = Covector::future_lightlike([2.0 * xi[0], 2.0 * xi[1], 2.0 * xi[2]]);
            let prod = cosymbol(&eta) * principal_symbol(&eta);
            assert!(prod.norm() < 1e-13);
        }
    }

    #[test]
    fn determinant_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let eta = Covector::new(
                rng.gen_range(-3.0..3.0),
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            );
            let det = principal_symbol(&eta).determinant();
            let q = eta.wave_symbol();
            let expect = q * q;
            assert!(det.im.abs() < 1e-10 * (1.0 + expect.abs()));
            assert!((det.re - expect).abs() <= 1e-10 * expect.abs().max(1e-3));
        }
    }

    #[test]
    fn lightlike_symbol_has_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let xi = random_unit(&mut rng);
            let eta = Covector::future_lightlike(xi);
            let sv = principal_symbol(&eta).singular_values();
            let big = sv.iter().filter(|s| **s > 1e-10).count();
            assert_eq!(big, 2);
            assert!(principal_symbol(&eta).determinant().norm() < 1e-12);
        }
    }

    #[test]
    fn kernel_basis_reference_values() {
        let kb = kernel_basis(&Covector::new(-1.0, [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0])).unwrap();
        let expect_a = Spinor::new(re(2.0), c(-1.0, 2.0), re(3.0), ZERO) / re(3.0);
        let expect_b = Spinor::new(c(1.0, 2.0), re(2.0), ZERO, re(-3.0)) / re(3.0);
        assert!((kb.a - expect_a).norm() < 1e-15);
        assert!((kb.b - expect_b).norm() < 1e-15);

        let kb = kernel_basis(&Covector::new(1.0, [0.0, 0.0, 1.0])).unwrap();
        assert_eq!(kb.a, Spinor::new(ONE, ZERO, -ONE, ZERO));
        assert_eq!(kb.b, Spinor::new(ZERO, ONE, ZERO, ONE));
    }

    #[test]
    fn kernel_basis_rejects_timelike() {
        let err = kernel_basis(&Covector::new(2.0, [1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, AlgebraError::NotLightlike { .. }));
        assert!(kernel_basis(&Covector::new(0.0, [0.0; 3])).is_err());
    }

    #[test]
    fn kernel_basis_is_kernel_and_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let xi = random_unit(&mut rng);
            let scale: f64 = rng.gen_range(0.2..3.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let eta = Covector::new(sign * scale, [scale * xi[0], scale * xi[1], scale * xi[2]]);
            let kb = kernel_basis(&eta).unwrap();
            let p = principal_symbol(&eta);
            assert!((p * kb.a).norm() < 1e-12 * scale.max(1.0));
            assert!((p * kb.b).norm() < 1e-12 * scale.max(1.0));
            assert!(kb.min_singular_value() > 1e-8);
        }
    }

    #[test]
    fn kernel_sums_span_c4() {
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            let plus = kernel_basis(&Covector::new(1.0, e)).unwrap();
            let minus = kernel_basis(&Covector::new(1.0, [-e[0], -e[1], -e[2]])).unwrap();
            let m = Matrix4C::from_columns(&[plus.a, plus.b, minus.a, minus.b]);
            let sv = m.singular_values();
            assert!(sv.min() > 1e-8 * sv.max(), "axis {j}");
        }
    }

    #[test]
    fn projector_properties() {
        let p = light_projector(&[0.0, 0.0, 1.0]).unwrap();
        let mut eig: Vec<f64> = p.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, expect) in eig.iter().zip([0.0, 0.0, 1.0, 1.0]) {
            assert!((e - expect).abs() < 1e-14);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let xi = random_unit(&mut rng);
            let p = light_projector(&xi).unwrap();
            assert!((p * p - p).norm() < 1e-14);
            assert!((p.adjoint() - p).norm() < 1e-15);
            assert!((p.trace() - re(2.0)).norm() < 1e-14);
            let q = light_projector(&[-xi[0], -xi[1], -xi[2]]).unwrap();
            assert!((p + q - Matrix4C::identity()).norm() < 1e-14);
        }

        let p = light_projector(&[-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let v = Spinor::new(re(2.0), c(-1.0, 2.0), re(3.0), ZERO);
        assert!((p * v).norm() < 1e-14);
    }

    #[test]
    fn projector_rejects_non_unit() {
        assert!(matches!(
            light_projector(&[0.0, 0.0, 1.1]),
            Err(AlgebraError::NotUnit { .. })
        ));
    }

    #[test]
    fn coset_trivial_example() {
        let e1 = Spinor::new(ONE, ZERO, ZERO, ZERO);
        let e2 = Spinor::new(ZERO, ONE, ZERO, ZERO);
        let w = coset_intersect(&Spinor::zeros(), &[e1], &e1, &[e2]).unwrap();
        assert!((w - e1).norm() < 1e-15);
    }

    #[test]
    fn coset_round_trip_on_reference_kernels() {
        let k1 = kernel_basis(&Covector::new(-1.0, [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0])).unwrap();
        let k2 = kernel_basis(&Covector::new(-1.0, [2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0])).unwrap();
        let stacked = Matrix4C::from_columns(&[k1.a, k1.b, k2.a, k2.b]);
        assert!(stacked.singular_values().min() > 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let w = random_spinor(&mut rng);
            let kk1 = k1.a * c(rng.gen(), rng.gen()) + k1.b * c(rng.gen(), rng.gen());
            let kk2 = k2.a * c(rng.gen(), rng.gen()) + k2.b * c(rng.gen(), rng.gen());
            let got = coset_intersect(&(w - kk1), &k1.vectors(), &(w - kk2), &k2.vectors()).unwrap();
            assert!((got - w).norm() < 1e-10);
        }
    }

    #[test]
    fn coset_rejects_equal_spans() {
        let k = kernel_basis(&Covector::new(1.0, [0.0, 1.0, 0.0])).unwrap();
        let v = Spinor::new(ONE, ONE, ZERO, ZERO);
        let err = coset_intersect(&v, &k.vectors(), &v, &k.vectors()).unwrap_err();
        assert!(matches!(err, AlgebraError::Degenerate { .. }));
    }

    #[test]
    fn coset_detects_missing_intersection() {
        let e1 = Spinor::new(ONE, ZERO, ZERO, ZERO);
        let e2 = Spinor::new(ZERO, ONE, ZERO, ZERO);
        let e3 = Spinor::new(ZERO, ZERO, ONE, ZERO);
        let err = coset_intersect(&Spinor::zeros(), &[e1], &e3, &[e2]).unwrap_err();
        assert!(matches!(err, AlgebraError::NoIntersection { .. }));
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        assert_eq!(matrix_exponential(&Matrix4C::zeros(), 3.0), Matrix4C::identity());
    }

    #[test]
    fn exponential_matches_diagonal_closed_form() {
        let d = Matrix4C::from_diagonal(&Vector4::new(c(0.5, 1.0), c(-2.0, 0.0), c(0.0, 3.0), c(1.5, -0.5)));
        let e = matrix_exponential(&d, 1.7);
        for j in 0..4 {
            let expect = (d[(j, j)] * re(1.7)).exp();
            assert!((e[(j, j)] - expect).norm() < 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn transport_generator_is_nilpotent_on_light_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let eta = Covector::future_lightlike(random_unit(&mut rng));
            let a0 = cosymbol(&eta) * beta() * I;
            let p = principal_symbol(&eta);
            assert!((a0 * a0).norm() < 1e-13);
            assert!((p * a0).norm() < 1e-13);
            let v = random_spinor(&mut rng);
            for s in [0.1, 1.0, 4.0] {
                let lhs = p * matrix_exponential(&a0, s) * v;
                assert!((lhs - p * v).norm() < 1e-12);
            }
            // columns of exp(sA₀) − I lie in the kernel of p
            let e = matrix_exponential(&a0, 0.8) - Matrix4C::identity();
            assert!((p * e).norm() < 1e-12);
        }
    }

    #[test]
    fn free_propagator_matches_exponential_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let xi = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let t = rng.gen_range(-2.0..2.0);
            let h = (alpha_dot(&xi) + beta()) * (-I);
            let u = free_propagator(&xi, t);
            assert!((u - matrix_exponential(&h, t)).norm() < 1e-12);
            assert!((u.adjoint() * u - Matrix4C::identity()).norm() < 1e-12);
        }
        assert_eq!(free_propagator(&[0.4, 0.1, 0.2], 0.0), Matrix4C::identity());
        let u = free_propagator(&[0.0; 3], std::f64::consts::PI);
        assert!((u + Matrix4C::identity()).norm() < 1e-15);
    }

    #[test]
    fn realification_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let v = random_spinor(&mut rng);
        assert_eq!(complexify(&realify(&v)), v);
        let m = Matrix4C::from_fn(|_, _| c(rng.gen(), rng.gen()));
        let r = realify_matrix(&m);
        assert!((realify(&(m * v)) - r * realify(&v)).norm() < 1e-14);
        let back = complexify_map(&r, 1e-12).unwrap();
        assert!((back - m).norm() < 1e-15);

        // complex conjugation is real-linear but not complex-linear
        let conj = RealMap::from_diagonal(&RealSpinor::from_fn(|r, _| if r % 2 == 0 { 1.0 } else { -1.0 }));
        assert!(complexify_map(&conj, 1e-12).is_none());
    }

    #[test]
    fn real_frame_is_orthonormal() {
        let kb = kernel_basis(&Covector::new(1.0, [0.6, 0.0, 0.8])).unwrap();
        let f = real_frame(&kb);
        for a in 0..4 {
            for b in 0..4 {
                let d = f[a].dot(&f[b]);
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
