//! Extension of the state by the observable `z = exp(−φ(x)/λ)`.
//!
//! Itô's lemma applied to `z` under the uncontrolled dynamics
//! `dx = a(x) dt + B dW` gives
//!
//! ```text
//! dz = ã(x, z) dt + b̃(x, z)ᵀ dW
//! ã  = Σ_i a_i ∂_i z + ½ Σ_ij [B Bᵀ]_ij ∂_i ∂_j z
//! b̃_k = Σ_i B_ik ∂_i z
//! ```
//!
//! with `∂_i z = −z φ_i / λ` and `∂_i ∂_j z = z (φ_i φ_j / λ² − φ_ij / λ)`.
//! For quadratic `φ` both are `z` times a polynomial in `x`, so the extended
//! SDE has polynomial coefficients. Its backward generator is
//!
//! ```text
//! L' = Σ_i a_i ∂_i + ã ∂_z + ½ Σ_ij [B Bᵀ]_ij ∂_i ∂_j
//!      + Σ_i [B b̃]_i ∂_i ∂_z + ½ |b̃|² ∂_z²
//! ```
//!
//! and the killing term is the multiplication operator `g = −V/λ`.
//!
//! For the noisy van der Pol problem this yields a `∂_z²` coefficient of
//! `½ B22² z² (x2 − x2ᶜ)² / (λ² σ2⁴)` and a mixed coefficient of
//! `−B22² z (x2 − x2ᶜ) / (λ σ2²)`. Both carry `B22²`. Printed forms of this
//! operator that show `¼ B22` or a single power of `B22` do not follow from
//! Itô's lemma. The coefficient equations derived from this generator match
//! the published coupled ODE system term by term.

use crate::error::{Error, Result};
use crate::operator::PolyOperator;
use crate::poly::Polynomial;
use crate::problem::ControlProblem;

/// Output of [`ito_extend`].
#[derive(Clone, Debug)]
pub struct ItoExtension {
    /// Backward generator `L'` of the extended SDE.
    pub generator: PolyOperator,
    /// Multiplication operator `g = −V/λ`.
    pub g_term: PolyOperator,
    /// Drift `ã(x, z)` of `z`.
    pub z_drift: Polynomial,
    /// Diffusion row `b̃(x, z)`, one entry per noise channel.
    pub z_diffusion: Vec<Polynomial>,
}

/// Builds `L'` and `g` for `problem`.
pub fn ito_extend(problem: &ControlProblem) -> Result<ItoExtension> {
    let n = problem.dim();
    let nv = n + 1;
    let lambda = problem.lambda();
    let phi = problem.terminal_cost();
    let v = problem.running_cost();
    if phi.degree().unwrap_or(0) > 2 {
        return Err(Error::NonQuadraticCost("terminal"));
    }
    if v.degree().unwrap_or(0) > 2 {
        return Err(Error::NonQuadraticCost("running"));
    }

    let z = Polynomial::var(nv, n);
    let grad_phi: Vec<Polynomial> = (0..n).map(|i| phi.derivative(i).extend_vars(nv)).collect();
    // ∂_i z as a polynomial in (x, z)
    let dz: Vec<Polynomial> = grad_phi.iter().map(|gi| (&z * gi).scale(-1.0 / lambda)).collect();
    let d2z = |i: usize, j: usize| -> Polynomial {
        let phi_ij = phi.derivative(i).derivative(j).extend_vars(nv);
        let quad = (&grad_phi[i] * &grad_phi[j]).scale(1.0 / (lambda * lambda));
        &z * &(&quad - &phi_ij.scale(1.0 / lambda))
    };

    let cov = problem.noise_covariance();
    let b = problem.diffusion();
    let drift: Vec<Polynomial> = problem.drift().iter().map(|a| a.extend_vars(nv)).collect();

    let mut z_drift = Polynomial::zero(nv);
    for i in 0..n {
        z_drift = &z_drift + &(&drift[i] * &dz[i]);
    }
    for i in 0..n {
        for j in 0..n {
            if cov[(i, j)] != 0.0 {
                z_drift = &z_drift + &d2z(i, j).scale(0.5 * cov[(i, j)]);
            }
        }
    }

    let z_diffusion: Vec<Polynomial> = (0..b.ncols())
        .map(|k| {
            (0..n).fold(Polynomial::zero(nv), |acc, i| &acc + &dz[i].scale(b[(i, k)]))
        })
        .collect();

    let unit = |i: usize| {
        let mut d = vec![0; nv];
        d[i] += 1;
        d
    };

    let mut gen = PolyOperator::zero(n);
    for (i, a) in drift.iter().enumerate() {
        gen.add_scaled_derivative(a, unit(i));
    }
    gen.add_scaled_derivative(&z_drift, unit(n));
    for i in 0..n {
        for j in 0..n {
            if cov[(i, j)] != 0.0 {
                let mut d = unit(i);
                d[j] += 1;
                gen.add_scaled_derivative(&Polynomial::constant(nv, 0.5 * cov[(i, j)]), d);
            }
        }
    }
    // Off-diagonal blocks [B b̃]_i appear twice in ½ Σ B'B'ᵀ ∂∂, hence no ½.
    for i in 0..n {
        let mixed = z_diffusion
            .iter()
            .enumerate()
            .fold(Polynomial::zero(nv), |acc, (k, bk)| &acc + &bk.scale(b[(i, k)]));
        let mut d = unit(i);
        d[n] += 1;
        gen.add_scaled_derivative(&mixed, d);
    }
    let bb = z_diffusion
        .iter()
        .fold(Polynomial::zero(nv), |acc, bk| &acc + &(bk * bk));
    let mut dzz = vec![0; nv];
    dzz[n] = 2;
    gen.add_scaled_derivative(&bb.scale(0.5), dzz);

    let g_term = PolyOperator::multiplication(&v.extend_vars(nv).scale(-1.0 / lambda));

    Ok(ItoExtension {
        generator: gen,
        g_term,
        z_drift,
        z_diffusion,
    })
}
