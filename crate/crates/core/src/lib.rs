//! Fiberwise Fredholm theory for partial integral equations
//!
//! ```text
//! f(x, y) − ϰ ∫ q(x, s, y) f(s, y) ds = g₀(x, y),   (x, y) ∈ Ω², Ω = [a, b]^ν
//! ```
//!
//! Freezing `y = α` turns the partial integral operator into an ordinary
//! Fredholm operator `S_α` on `L₂(Ω)`. The crate discretizes every fiber by
//! the Nyström method and builds the global theory on top of it:
//!
//! - [`grid`]: box domains and tensor quadrature;
//! - [`kernel`]: kernel catalog, adjoint and deflated views, `b(t)` bound;
//! - [`fiber`]: per-fiber determinants, solves, nullspaces, resolvents;
//! - [`series`]: Fredholm determinant and first minor as truncated series;
//! - [`l0`]: `L⁰`-valued inner products, orthonormalization, independence;
//! - [`solver`]: classification of `ϰ`, characteristic numbers, the
//!   Fredholm alternative and solutions in both cases;
//! - [`oracles`]: closed-form and brute-force references for testing.
//!
//! Everything is generic over the real type (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which all default tolerances assume.

// `!(a <= b)` is used on purpose so that NaN fails validation checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fiber;
pub mod grid;
pub mod kernel;
pub mod l0;
pub mod oracles;
pub mod scalar;
pub mod series;
pub mod solver;

pub use error::{PieError, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type Domain = grid::Domain<f64>;
pub type QuadratureGrid = grid::QuadratureGrid<f64>;
pub type ProductGrid = grid::ProductGrid<f64>;
pub type SharedGrid = l0::SharedGrid<f64>;
pub type Kernel = kernel::Kernel<f64>;
pub type FiberFunction = l0::FiberFunction<f64>;
pub type L0Scalar = l0::L0Scalar<f64>;
pub type FiberOperator = fiber::FiberOperator<f64>;

pub type SolverConfig = solver::SolverConfig<f64>;
pub type Classification = solver::Classification<f64>;
pub type NullFamily = solver::NullFamily<f64>;
pub type SolveReport = solver::SolveReport<f64>;
