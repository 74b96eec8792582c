//! The noisy van der Pol oscillator
//!
//! ```text
//! dx1 = x2 dt + B11 dW1
//! dx2 = [ε (1 − x1²) x2 − x1 + U22 u2] dt + B22 dW2
//! ```
//!
//! with `φ = V = (x1 − x1ᶜ)²/(2σ1²) + (x2 − x2ᶜ)²/(2σ2²)`. Only `x2` is
//! actuated, so the control model drops `B11`; the plant used for
//! closed-loop runs keeps it.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::poly::Polynomial;
use crate::problem::{ControlProblem, Plant, ProblemSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct VanDerPol {
    pub epsilon: f64,
    /// Noise on `x1` in the true system only.
    pub b11: f64,
    pub b22: f64,
    pub u22: f64,
    pub r22: f64,
    pub centers: [f64; 2],
    pub widths: [f64; 2],
    pub t_initial: f64,
    pub t_final: f64,
}

impl Default for VanDerPol {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            b11: 0.1,
            b22: 1.0,
            u22: 1.0,
            r22: 0.25,
            centers: [1.0, 0.0],
            widths: [0.5, 0.5],
            t_initial: 0.0,
            t_final: 0.1,
        }
    }
}

/// Drift `(x2, ε(1 − x1²)x2 − x1)`.
pub fn van_der_pol_drift(epsilon: f64) -> Vec<Polynomial> {
    let a1 = Polynomial::monomial(vec![0, 1], 1.0);
    let a2 = Polynomial::from_terms(
        2,
        [
            (vec![0, 1], epsilon),
            (vec![2, 1], -epsilon),
            (vec![1, 0], -1.0),
        ],
    );
    vec![a1, a2]
}

impl VanDerPol {
    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    pub fn cost(&self) -> Polynomial {
        Polynomial::diagonal_quadratic(&self.centers, &self.widths)
    }

    /// The control model: `B11` removed, `φ = V`.
    pub fn control_problem(&self) -> Result<ControlProblem> {
        ControlProblem::new(ProblemSpec {
            drift: van_der_pol_drift(self.epsilon),
            diffusion: Self::diag(0.0, self.b22),
            control: Self::diag(0.0, self.u22),
            weight: Self::diag(0.0, self.r22),
            terminal_cost: self.cost(),
            running_cost: self.cost(),
            t_initial: self.t_initial,
            t_final: self.t_final,
            lambda: None,
        })
    }

    /// The system being controlled, with noise on both coordinates.
    pub fn true_plant(&self) -> Result<Plant> {
        Plant::new(
            van_der_pol_drift(self.epsilon),
            Self::diag(self.b11, self.b22),
            Self::diag(0.0, self.u22),
        )
    }
}
