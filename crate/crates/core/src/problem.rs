//! Control problem definitions.
//!
//! A [`ControlProblem`] describes the controlled SDE
//!
//! ```text
//! dx = (a(x) + U u) dt + B dW
//! ```
//!
//! with trajectory cost `φ(x(t_f)) + ∫ (V(x) + ½ uᵀ R u) dt`. The linear
//! desirability equation only exists when the noise and the control cost
//! satisfy `B Bᵀ = λ U R⁻¹ Uᵀ` for a single positive `λ`; construction
//! enforces this and stores the resulting `λ`.
//!
//! A [`Plant`] is the bare SDE without costs. Closed-loop simulation runs on a
//! plant, which may carry noise the control model had to drop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// Entrywise tolerance of the noise/control proportionality check.
pub const LAMBDA_TOLERANCE: f64 = 1e-12;

/// Indices of inputs that act on at least one coordinate.
fn active_inputs(control: &DMatrix<f64>) -> Vec<usize> {
    (0..control.ncols())
        .filter(|&j| control.column(j).iter().any(|&v| v != 0.0))
        .collect()
}

/// `R⁻¹` restricted to the active inputs, zero-padded to full size.
///
/// The weight only has to be invertible on inputs that `U` actually uses,
/// which allows the singular `R = diag(0, R22)` form.
pub fn restricted_inverse(control: &DMatrix<f64>, weight: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ninp = control.ncols();
    if weight.nrows() != ninp || weight.ncols() != ninp {
        return Err(Error::InvalidProblem(format!(
            "R must be {ninp}×{ninp}, got {}×{}",
            weight.nrows(),
            weight.ncols()
        )));
    }
    let active = active_inputs(control);
    if active.is_empty() {
        return Err(Error::NoControlAuthority);
    }
    let k = active.len();
    let block = DMatrix::from_fn(k, k, |a, b| weight[(active[a], active[b])]);
    let chol = block.cholesky().ok_or(Error::SingularWeight)?;
    let inv = chol.inverse();
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularWeight);
    }
    let mut full = DMatrix::zeros(ninp, ninp);
    for a in 0..k {
        for b in 0..k {
            full[(active[a], active[b])] = inv[(a, b)];
        }
    }
    Ok(full)
}

/// Returns the `λ` for which `B Bᵀ = λ U R⁻¹ Uᵀ` holds entrywise.
pub fn compute_lambda(
    diffusion: &DMatrix<f64>,
    control: &DMatrix<f64>,
    weight: &DMatrix<f64>,
) -> Result<f64> {
    let n = diffusion.nrows();
    if control.nrows() != n {
        return Err(Error::InvalidProblem(format!(
            "U has {} rows but B has {n}",
            control.nrows()
        )));
    }
    let rinv = restricted_inverse(control, weight)?;
    let m = control * &rinv * control.transpose();
    let s = diffusion * diffusion.transpose();

    let m_scale = m.amax();
    if m_scale == 0.0 {
        return Err(Error::NoControlAuthority);
    }
    let negligible = |v: f64| v.abs() <= 1e-14 * m_scale;

    // Noise on a coordinate the controls cannot reach.
    for i in 0..n {
        let uncontrolled = (0..n).all(|j| negligible(m[(i, j)]));
        if uncontrolled && s.row(i).iter().any(|&v| v.abs() > LAMBDA_TOLERANCE) {
            return Err(Error::NoiseOnUncontrolled { coordinate: i });
        }
    }

    let (pi, pj) = m.iamax_full();
    let lambda = s[(pi, pj)] / m[(pi, pj)];
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::NotProportional(format!(
            "implied λ = {lambda} is not positive"
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let resid = (s[(i, j)] - lambda * m[(i, j)]).abs();
            if resid > LAMBDA_TOLERANCE * s[(i, j)].abs().max(1.0) {
                return Err(Error::NotProportional(format!(
                    "entry ({i},{j}): B Bᵀ = {}, λ U R⁻¹ Uᵀ = {}",
                    s[(i, j)],
                    lambda * m[(i, j)]
                )));
            }
        }
    }
    Ok(lambda)
}

/// Uncontrolled-drift SDE `dx = (a(x) + U u) dt + B dW` with constant `B` and `U`.
#[derive(Clone, Debug)]
pub struct Plant {
    pub drift: Vec<Polynomial>,
    pub diffusion: DMatrix<f64>,
    pub control: DMatrix<f64>,
}

impl Plant {
    pub fn new(drift: Vec<Polynomial>, diffusion: DMatrix<f64>, control: DMatrix<f64>) -> Result<Self> {
        let n = drift.len();
        if n == 0 {
            return Err(Error::InvalidProblem("state dimension must be positive".into()));
        }
        if let Some(bad) = drift.iter().position(|p| p.nvars() != n || !p.all_finite()) {
            return Err(Error::InvalidProblem(format!(
                "drift component {} must be a finite polynomial in {n} variables",
                bad + 1
            )));
        }
        if diffusion.nrows() != n || control.nrows() != n {
            return Err(Error::InvalidProblem(format!(
                "B and U must have {n} rows (got {} and {})",
                diffusion.nrows(),
                control.nrows()
            )));
        }
        if !diffusion.iter().chain(control.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidProblem("B and U must be finite".into()));
        }
        Ok(Self {
            drift,
            diffusion,
            control,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.control.ncols()
    }

    pub fn eval_drift(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.drift) {
            *o = p.eval(x);
        }
    }

    /// Same dynamics with a different noise matrix.
    pub fn with_diffusion(&self, diffusion: DMatrix<f64>) -> Result<Self> {
        Self::new(self.drift.clone(), diffusion, self.control.clone())
    }
}

/// Everything needed to build a [`ControlProblem`]. `lambda` may be left
/// out, in which case it is derived from `B`, `U` and `R`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub drift: Vec<Polynomial>,
    pub diffusion: DMatrix<f64>,
    pub control: DMatrix<f64>,
    pub weight: DMatrix<f64>,
    pub terminal_cost: Polynomial,
    pub running_cost: Polynomial,
    pub t_initial: f64,
    pub t_final: f64,
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ControlProblem {
    plant: Plant,
    weight: DMatrix<f64>,
    terminal_cost: Polynomial,
    running_cost: Polynomial,
    t_initial: f64,
    t_final: f64,
    lambda: f64,
    /// `λ R⁻¹ Uᵀ`, mapping `∇ψ/ψ` to the optimal input.
    gain: DMatrix<f64>,
}

impl ControlProblem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        let plant = Plant::new(spec.drift, spec.diffusion, spec.control)?;
        let n = plant.dim();
        for (name, cost) in [("terminal", &spec.terminal_cost), ("running", &spec.running_cost)] {
            if cost.nvars() != n || !cost.all_finite() {
                return Err(Error::InvalidProblem(format!(
                    "{name} cost must be a finite polynomial in {n} variables"
                )));
            }
        }
        if !(spec.t_initial.is_finite() && spec.t_final.is_finite() && spec.t_final > spec.t_initial) {
            return Err(Error::InvalidProblem(format!(
                "horizon [{}, {}] must satisfy t_f > t_i",
                spec.t_initial, spec.t_final
            )));
        }
        let computed = compute_lambda(&plant.diffusion, &plant.control, &spec.weight)?;
        let lambda = match spec.lambda {
            None => computed,
            Some(given) => {
                if (given - computed).abs() > LAMBDA_TOLERANCE * computed.max(1.0) {
                    return Err(Error::LambdaMismatch { given, computed });
                }
                given
            }
        };
        let rinv = restricted_inverse(&plant.control, &spec.weight)?;
        let gain = (&rinv * plant.control.transpose()) * lambda;
        Ok(Self {
            plant,
            weight: spec.weight,
            terminal_cost: spec.terminal_cost,
            running_cost: spec.running_cost,
            t_initial: spec.t_initial,
            t_final: spec.t_final,
            lambda,
            gain,
        })
    }

    pub fn dim(&self) -> usize {
        self.plant.dim()
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn drift(&self) -> &[Polynomial] {
        &self.plant.drift
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.plant.diffusion
    }

    pub fn control(&self) -> &DMatrix<f64> {
        &self.plant.control
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn terminal_cost(&self) -> &Polynomial {
        &self.terminal_cost
    }

    pub fn running_cost(&self) -> &Polynomial {
        &self.running_cost
    }

    pub fn t_initial(&self) -> f64 {
        self.t_initial
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn horizon(&self) -> f64 {
        self.t_final - self.t_initial
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `B Bᵀ`.
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        &self.plant.diffusion * self.plant.diffusion.transpose()
    }

    /// Optimal input `λ R⁻¹ Uᵀ ∇ψ/ψ` given the log-gradient `∇ψ/ψ`.
    pub fn control_from_log_gradient(&self, log_grad: &[f64]) -> Vec<f64> {
        let g = DVector::from_column_slice(log_grad);
        (&self.gain * g).iter().copied().collect()
    }

    /// Columns of `U` that are not identically zero.
    pub fn active_inputs(&self) -> Vec<usize> {
        active_inputs(&self.plant.control)
    }
}
