//! Desk-scale numerical laboratory for the bounded-time inverse scattering
//! problem of the semilinear Dirac equation
//!
//! ```text
//! i ∂_t u + i α·∇u − β u = F(x, u),    u(0) = φ.
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`algebra`]: Dirac matrices, principal symbols, kernels, projectors and
//!   the coset-intersection solver.
//! * [`nonlinearity`]: model nonlinearities with exact symmetric derivative
//!   forms and finite-difference oracles.
//! * [`solver`]: split-step Fourier solver on a periodic box for the
//!   nonlinear, linearized and inhomogeneous problems.
//! * [`cascade`]: first, second and third order linearization terms and the
//!   checks of the cubic expansion of the solution map.
//! * [`transport`]: bicharacteristics, symbol transport, end maps and the
//!   collision-limit scheme.
//! * [`reconstruction`]: recovery of the third derivative of the
//!   nonlinearity from end-map and terminal-symbol measurements.

pub mod algebra;
pub mod cascade;
pub mod nonlinearity;
pub mod numerics;
pub mod reconstruction;
pub mod serial;
pub mod solver;
pub mod transport;

pub use algebra::{Covector, KernelBasis, Matrix4C, RealMap, RealSpinor, Spinor};
pub use nonlinearity::Nonlinearity;
