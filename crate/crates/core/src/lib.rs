//! Stochastic optimal control for SDEs with polynomial drift and quadratic
//! control cost.
//!
//! Under the noise/control proportionality `B Bᵀ = λ U R⁻¹ Uᵀ` the optimal
//! cost-to-go is `J = −λ log ψ`, where the desirability `ψ` solves a linear
//! backward equation. Three independent solvers compute `ψ`:
//!
//! - [`hjb`]: explicit finite differences on a 2-D grid,
//! - [`pathint`]: Feynman–Kac Monte Carlo over uncontrolled paths,
//! - [`koopman`]: coefficient ODEs of a polynomial expansion in `(x, z)`,
//!   with `z = exp(−φ/λ)` added to the state through Itô's lemma ([`ito`]).
//!
//! [`sim`] applies the resulting feedback law to a noisy plant in closed loop.

pub mod error;
pub mod hjb;
pub mod ito;
pub mod koopman;
pub mod operator;
pub mod pathint;
pub mod poly;
pub mod presets;
pub mod problem;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
pub use operator::{apply_operator, PolyOperator};
pub use poly::Polynomial;
pub use problem::{compute_lambda, ControlProblem, Plant, ProblemSpec};
