//! Spectral analysis toolkit for the linearized Euler equation on the flat
//! two-torus: Lyapunov exponents of steady flows, Fourier–Galerkin
//! truncations of the vorticity operator `L = -A + K`, and residual
//! certificates for approximate eigenfunctions built along streamlines.
//!
//! Conventions used throughout:
//!
//! * `w(x) = Σ w_k e^{i k·x}` on `[0, 2π)²`, with the normalized measure
//!   `(2π)^{-2} dx`, so that `‖w‖²_{L2} = Σ |w_k|²`.
//! * Sobolev weights are `‖k‖^m`; the origin mode is never stored.
//! * Approximate eigenvalues are reported as `z = -α` with
//!   `α = mλ + iξ`, i.e. residuals are `‖(L - z) g‖ = ‖L g + α g‖`.

pub mod acceptance;
pub mod approxeig;
pub mod error;
pub mod fields;
pub mod flow;
pub mod jet;
pub mod lyapunov;
pub mod mat2;
pub mod operators;
pub mod orbits;
pub mod par;
pub mod quad;

pub use error::{Error, Result};
pub use fields::{FourierField, Mode, ModeBox, TorusPoint, TrigVelocityField};
pub use num_complex::Complex64;

/// Crate version, echoed into run artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Round-trip float formatting used in every CSV/JSON artifact
/// (17 significant digits).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}
