//! Koopman coefficient solver.
//!
//! The desirability of the extended system is expanded as
//! `ψ'(x, z, t) = Σ P(n, n_z, t) x^n z^{n_z}` with terminal condition
//! `P(t_f) = δ_{n,0} δ_{n_z,1}`. The backward equation
//! `∂ψ'/∂t = −(L' + g) ψ'` turns into a linear ODE system for the
//! coefficients ([`compile`]), which is integrated from `t_f` back to `t_i`
//! with classical fixed-step RK4 ([`integrate_backward`]). Substituting
//! `z = exp(−φ(x)/λ)` recovers `ψ(x, t_i)` and the feedback law.

mod ode;
mod tensor;

pub use ode::{compile, CoeffOde, StencilEntry};
pub use tensor::{CoeffTensor, Lattice, DENSE_LIMIT};

use crate::error::{Error, Result};
use crate::ito::ito_extend;
use crate::poly::Polynomial;
use crate::problem::ControlProblem;
use tensor::Storage;

/// `eval_control` refuses states whose normalized desirability
/// `ψ(x) · exp(φ(x)/λ)` is at or below this value.
pub const PSI_FLOOR: f64 = 1e-12;

/// Default per-axis cutoff for the `x` axes.
pub const DEFAULT_CUTOFF: usize = 60;

/// Splits `[t_i, t_f]` into full steps of size `dt` plus an optional final
/// partial step.
pub(crate) fn step_plan(horizon: f64, dt: f64) -> (usize, f64) {
    let ratio = horizon / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        (nearest as usize, 0.0)
    } else {
        let full = ratio.floor();
        (full as usize, horizon - full * dt)
    }
}

/// Integrates the coefficients from `t_f` (the time of `terminal`) down to
/// `t_i` with classical RK4.
pub fn integrate_backward(
    ode: &CoeffOde,
    terminal: &CoeffTensor,
    t_final: f64,
    t_initial: f64,
    dt: f64,
) -> Result<CoeffTensor> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= t_initial) {
        return Err(Error::InvalidArgument(format!(
            "t_f = {t_final} must not precede t_i = {t_initial}"
        )));
    }
    if (terminal.time() - t_final).abs() > 1e-12 * t_final.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "terminal coefficients are at t = {}, expected t_f = {t_final}",
            terminal.time()
        )));
    }
    if terminal.lattice() != ode.lattice() {
        return Err(Error::InvalidArgument("terminal and ODE lattices differ".into()));
    }
    let (steps, tail) = step_plan(t_final - t_initial, dt);
    let mut p = terminal.clone();
    if terminal.is_dense() && ode.has_dense_form() {
        let Storage::Dense(data) = &mut p.storage else { unreachable!() };
        let mut rk = DenseRk4::new(data.len());
        for k in 0..steps {
            rk.step(ode, data, dt);
            if !data.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "coefficients diverged after {} steps (t = {})",
                    k + 1,
                    t_final - (k + 1) as f64 * dt
                )));
            }
        }
        if tail > 0.0 {
            rk.step(ode, data, tail);
        }
    } else {
        for _ in 0..steps {
            p = rk4_generic(ode, &p, dt);
            if !p.all_finite() {
                return Err(Error::NonFinite("coefficients diverged".into()));
            }
        }
        if tail > 0.0 {
            p = rk4_generic(ode, &p, tail);
        }
    }
    if !p.all_finite() {
        return Err(Error::NonFinite("coefficients diverged".into()));
    }
    p.set_time(t_initial);
    Ok(p)
}

struct DenseRk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl DenseRk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, ode: &CoeffOde, y: &mut [f64], h: f64) {
        ode.apply_dense_into(y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        ode.apply_dense_into(&self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        ode.apply_dense_into(&self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        ode.apply_dense_into(&self.tmp, &mut self.k4);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn rk4_generic(ode: &CoeffOde, y: &CoeffTensor, h: f64) -> CoeffTensor {
    let k1 = ode.apply(y);
    let mut s = y.clone();
    s.axpy(0.5 * h, &k1);
    let k2 = ode.apply(&s);
    let mut s = y.clone();
    s.axpy(0.5 * h, &k2);
    let k3 = ode.apply(&s);
    let mut s = y.clone();
    s.axpy(h, &k3);
    let k4 = ode.apply(&s);
    let mut out = y.clone();
    out.axpy(h / 6.0, &k1);
    out.axpy(h / 3.0, &k2);
    out.axpy(h / 3.0, &k3);
    out.axpy(h / 6.0, &k4);
    out
}

/// Value of `ψ'` and its partial derivatives at `(x, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionValue {
    pub value: f64,
    /// `∂ψ'/∂x_i` at fixed `z`.
    pub grad_x: Vec<f64>,
    /// `∂ψ'/∂z`.
    pub d_z: f64,
}

impl CoeffTensor {
    /// `ψ'(x, z) = Σ P x^n z^{n_z}` and its first derivatives.
    pub fn expansion(&self, x: &[f64], z: f64) -> ExpansionValue {
        let nx = self.lattice().nx();
        assert_eq!(x.len(), nx, "state dimension mismatch");
        let mut point = x.to_vec();
        point.push(z);
        let (value, grad) = match &self.storage {
            Storage::Dense(data) => horner_dense(data, self.lattice().cutoffs(), &point),
            Storage::Sparse(_) => direct_sum(self, &point),
        };
        ExpansionValue {
            value,
            grad_x: grad[..nx].to_vec(),
            d_z: grad[nx],
        }
    }
}

/// Nested Horner evaluation of a dense row-major coefficient array,
/// reducing the fastest axis first. Returns the value and the gradient over
/// all axes.
fn horner_dense(data: &[f64], cutoffs: &[usize], point: &[f64]) -> (f64, Vec<f64>) {
    let dims = cutoffs.len();
    // derivs[k] tracks ∂/∂(axis dims−1−k) of the partially reduced array
    let mut val = data.to_vec();
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for axis in (0..dims).rev() {
        let c = cutoffs[axis];
        let x = point[axis];
        let blocks = val.len() / c;
        let mut new_val = vec![0.0; blocks];
        let mut new_d = vec![0.0; blocks];
        let mut new_derivs = vec![vec![0.0; blocks]; derivs.len()];
        for b in 0..blocks {
            let base = b * c;
            let (mut v, mut d) = (0.0, 0.0);
            for k in (0..c).rev() {
                d = d * x + v;
                v = v * x + val[base + k];
            }
            new_val[b] = v;
            new_d[b] = d;
            for (nd, od) in new_derivs.iter_mut().zip(&derivs) {
                let mut acc = 0.0;
                for k in (0..c).rev() {
                    acc = acc * x + od[base + k];
                }
                nd[b] = acc;
            }
        }
        new_derivs.push(new_d);
        val = new_val;
        derivs = new_derivs;
    }
    // derivs were pushed for axes dims−1, …, 0
    let grad: Vec<f64> = (0..dims).map(|a| derivs[dims - 1 - a][0]).collect();
    (val[0], grad)
}

fn direct_sum(t: &CoeffTensor, point: &[f64]) -> (f64, Vec<f64>) {
    let dims = point.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; dims];
    for (lin, c) in t.nonzeros() {
        let idx = t.lattice().multi(lin);
        let pows: Vec<f64> = idx.iter().zip(point).map(|(&n, &x)| x.powi(n as i32)).collect();
        value += c * pows.iter().product::<f64>();
        for a in 0..dims {
            if idx[a] == 0 {
                continue;
            }
            let mut term = c * f64::from(idx[a]) * point[a].powi(idx[a] as i32 - 1);
            for b in 0..dims {
                if b != a {
                    term *= pows[b];
                }
            }
            grad[a] += term;
        }
    }
    (value, grad)
}

/// `ψ(x) = ψ'(x, exp(−φ(x)/λ))`.
pub fn eval_psi(coeffs: &CoeffTensor, x: &[f64], terminal_cost: &Polynomial, lambda: f64) -> f64 {
    let z = (-terminal_cost.eval(x) / lambda).exp();
    coeffs.expansion(x, z).value
}

/// Feedback input `λ R⁻¹ Uᵀ ∇ψ / ψ`, where the gradient includes the
/// dependence of `z` on `x`:
/// `∂_i ψ = ∂_i ψ' − ∂_z ψ' · z φ_i / λ`.
pub fn eval_control(coeffs: &CoeffTensor, x: &[f64], problem: &ControlProblem) -> Result<Vec<f64>> {
    let phi = problem.terminal_cost();
    let grad_phi: Vec<f64> = (0..x.len()).map(|i| phi.derivative(i).eval(x)).collect();
    control_with_cost_gradient(coeffs, x, problem, &grad_phi)
}

fn control_with_cost_gradient(
    coeffs: &CoeffTensor,
    x: &[f64],
    problem: &ControlProblem,
    grad_phi: &[f64],
) -> Result<Vec<f64>> {
    let lambda = problem.lambda();
    let phi_x = problem.terminal_cost().eval(x);
    let z = (-phi_x / lambda).exp();
    let e = coeffs.expansion(x, z);
    // ψ is exp(−J/λ) and legitimately tiny far from the target; the floor
    // applies to ψ/z, which stays O(1) wherever the expansion is reliable.
    let normalized = e.value * (phi_x / lambda).exp();
    if !(normalized > PSI_FLOOR) || z == 0.0 {
        return Err(Error::DesirabilityUnderflow {
            state: x.to_vec(),
            psi: e.value,
        });
    }
    let log_grad: Vec<f64> = grad_phi
        .iter()
        .enumerate()
        .map(|(i, &phi_i)| (e.grad_x[i] - e.d_z * z * phi_i / lambda) / e.value)
        .collect();
    let u = problem.control_from_log_gradient(&log_grad);
    if u.iter().all(|v| v.is_finite()) {
        Ok(u)
    } else {
        Err(Error::NonFinite(format!("control at {x:?}")))
    }
}

/// Cached gradient of `φ` for repeated control evaluation.
#[derive(Clone, Debug)]
pub struct KoopmanPolicy {
    coeffs: CoeffTensor,
    problem: ControlProblem,
    grad_phi: Vec<Polynomial>,
}

impl KoopmanPolicy {
    pub fn new(coeffs: CoeffTensor, problem: ControlProblem) -> Self {
        let grad_phi = (0..problem.dim())
            .map(|i| problem.terminal_cost().derivative(i))
            .collect();
        Self {
            coeffs,
            problem,
            grad_phi,
        }
    }

    pub fn coeffs(&self) -> &CoeffTensor {
        &self.coeffs
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        eval_psi(&self.coeffs, x, self.problem.terminal_cost(), self.problem.lambda())
    }

    /// Same contract as [`eval_control`].
    pub fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        let grad_phi: Vec<f64> = self.grad_phi.iter().map(|p| p.eval(x)).collect();
        control_with_cost_gradient(&self.coeffs, x, &self.problem, &grad_phi)
    }
}

/// Builds `L'` and `g`, compiles them and integrates over the problem
/// horizon. `x_cutoffs` has one entry per state axis; `z_cutoff` bounds
/// `n_z` (2 keeps the levels 0 and 1).
pub fn solve(
    problem: &ControlProblem,
    x_cutoffs: &[usize],
    z_cutoff: usize,
    dt: f64,
) -> Result<CoeffTensor> {
    if x_cutoffs.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} cutoffs given for a {}-dimensional problem",
            x_cutoffs.len(),
            problem.dim()
        )));
    }
    let ext = ito_extend(problem)?;
    let mut cutoffs = x_cutoffs.to_vec();
    cutoffs.push(z_cutoff);
    let ode = compile(&ext.generator, &ext.g_term, &cutoffs)?;
    let terminal = CoeffTensor::terminal(ode.lattice().clone(), problem.t_final())?;
    integrate_backward(&ode, &terminal, problem.t_final(), problem.t_initial(), dt)
}
