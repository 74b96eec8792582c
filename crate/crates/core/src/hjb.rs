//! Finite-difference reference solver for the linear desirability equation
//!
//! ```text
//! ∂ψ/∂t = −(L + g) ψ,   L = Σ a_i ∂_i + ½ Σ [B Bᵀ]_ij ∂_i ∂_j,   g = −V/λ
//! ψ(x, t_f) = exp(−φ(x)/λ)
//! ```
//!
//! on a uniform 2-D grid. Each backward step is an explicit Euler update
//! with central differences in the interior. On the boundary ring, nodes
//! outside the grid are replaced by the nearest boundary node (zero-gradient
//! ghosts) and first derivatives normal to the boundary are upwinded along
//! the drift, which keeps the explicit update monotone there.

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::koopman::PSI_FLOOR;
use crate::poly::Polynomial;
use crate::problem::ControlProblem;

/// Default stability factor for [`solve_hjb`].
pub const DEFAULT_CFL: f64 = 1.0;

/// Values above this magnitude are treated as a numerical blow-up.
const BLOWUP: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    min: [f64; 2],
    max: [f64; 2],
    spacing: [f64; 2],
    counts: [usize; 2],
}

impl Grid2D {
    /// The extent of each axis must be an integer multiple of its spacing.
    pub fn new(min: [f64; 2], max: [f64; 2], spacing: [f64; 2]) -> Result<Self> {
        let mut counts = [0; 2];
        for a in 0..2 {
            if !(spacing[a] > 0.0 && max[a] > min[a] && min[a].is_finite() && max[a].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "axis {}: need max > min and spacing > 0 (got [{}, {}], {})",
                    a + 1,
                    min[a],
                    max[a],
                    spacing[a]
                )));
            }
            let cells = (max[a] - min[a]) / spacing[a];
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "axis {}: extent {} is not a multiple of spacing {}",
                    a + 1,
                    max[a] - min[a],
                    spacing[a]
                )));
            }
            counts[a] = rounded as usize + 1;
            if counts[a] < 4 {
                return Err(Error::InvalidArgument(format!(
                    "axis {} needs at least 4 nodes",
                    a + 1
                )));
            }
        }
        Ok(Self {
            min,
            max,
            spacing,
            counts,
        })
    }

    /// Square grid `[lo, hi]²` with equal spacing on both axes.
    pub fn square(lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        Self::new([lo, lo], [hi, hi], [spacing, spacing])
    }

    pub fn min(&self) -> [f64; 2] {
        self.min
    }

    pub fn max(&self) -> [f64; 2] {
        self.max
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major: `x1` index outer, `x2` index inner.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.counts[1] + j
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.min[0] + i as f64 * self.spacing[0],
            self.min[1] + j as f64 * self.spacing[1],
        ]
    }

    /// Node index nearest to `x`, if it lies on the grid within `tol`.
    pub fn node_index_of(&self, x: [f64; 2], tol: f64) -> Option<(usize, usize)> {
        let mut idx = [0usize; 2];
        for a in 0..2 {
            let r = (x[a] - self.min[a]) / self.spacing[a];
            let k = r.round();
            if k < 0.0 || k as usize >= self.counts[a] || (r - k).abs() * self.spacing[a] > tol {
                return None;
            }
            idx[a] = k as usize;
        }
        Some((idx[0], idx[1]))
    }
}

/// Grid-sampled desirability at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiField {
    grid: Grid2D,
    values: Vec<f64>,
    time: f64,
}

impl PsiField {
    /// `ψ(x, t_f) = exp(−φ(x)/λ)` on every node.
    pub fn terminal(problem: &ControlProblem, grid: &Grid2D) -> Self {
        let [n1, n2] = grid.counts();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n1 {
            for j in 0..n2 {
                let x = grid.node(i, j);
                values.push((-problem.terminal_cost().eval(&x) / problem.lambda()).exp());
            }
        }
        Self {
            grid: grid.clone(),
            values,
            time: problem.t_final(),
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ψ field values".into()));
        }
        Ok(Self { grid, values, time })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn at_node(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// `J = −λ log ψ` per node.
    pub fn cost_to_go(&self, lambda: f64) -> Vec<f64> {
        self.values.iter().map(|&p| -lambda * p.ln()).collect()
    }

    fn cell_of(&self, x: &[f64]) -> Result<(usize, usize, f64, f64)> {
        let g = &self.grid;
        for a in 0..2 {
            let lo = g.min[a] + g.spacing[a];
            let hi = g.max[a] - g.spacing[a];
            if !(x[a] >= lo - 1e-12 && x[a] <= hi + 1e-12) {
                return Err(Error::OutOfDomain { state: x.to_vec() });
            }
        }
        let locate = |a: usize| {
            let r = (x[a] - g.min[a]) / g.spacing[a];
            // keep both cell corners on interior nodes
            let k = (r.floor() as usize).clamp(1, g.counts[a] - 3);
            (k, r - k as f64)
        };
        let (i, tx) = locate(0);
        let (j, ty) = locate(1);
        Ok((i, j, tx, ty))
    }

    fn central_gradient(&self, i: usize, j: usize) -> [f64; 2] {
        let [h1, h2] = self.grid.spacing;
        [
            (self.at_node(i + 1, j) - self.at_node(i - 1, j)) / (2.0 * h1),
            (self.at_node(i, j + 1) - self.at_node(i, j - 1)) / (2.0 * h2),
        ]
    }

    /// Bilinear interpolation of `ψ` and of its central-difference gradient.
    pub fn interpolate(&self, x: &[f64]) -> Result<(f64, [f64; 2])> {
        if x.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "expected a 2-D state, got {}",
                x.len()
            )));
        }
        let (i, j, tx, ty) = self.cell_of(x)?;
        let w = [
            ((i, j), (1.0 - tx) * (1.0 - ty)),
            ((i + 1, j), tx * (1.0 - ty)),
            ((i, j + 1), (1.0 - tx) * ty),
            ((i + 1, j + 1), tx * ty),
        ];
        let mut psi = 0.0;
        let mut grad = [0.0; 2];
        for ((a, b), wt) in w {
            psi += wt * self.at_node(a, b);
            let g = self.central_gradient(a, b);
            grad[0] += wt * g[0];
            grad[1] += wt * g[1];
        }
        Ok((psi, grad))
    }

    /// Writes `x1,x2,psi` rows in row-major node order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x1,x2,psi")?;
        let [n1, n2] = self.grid.counts();
        for i in 0..n1 {
            for j in 0..n2 {
                let [x1, x2] = self.grid.node(i, j);
                writeln!(w, "{x1},{x2},{:e}", self.at_node(i, j))?;
            }
        }
        Ok(())
    }
}

/// Coefficients of `∂ψ/∂t = −(a·∇ + ½ S:∇∇ + g) ψ` with constant `S`.
#[derive(Clone, Copy, Debug)]
pub struct BackwardEquation<'a> {
    pub drift: &'a [Polynomial],
    pub covariance: &'a DMatrix<f64>,
    /// The killing rate `g`.
    pub rate: &'a Polynomial,
}

/// Largest stable explicit step, `cfl / Σ_ij |S_ij| / (Δx_i Δx_j)`.
/// Infinite when there is no diffusion.
pub fn stability_limit(covariance: &DMatrix<f64>, grid: &Grid2D, cfl: f64) -> f64 {
    let h = grid.spacing();
    let mut rate = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            rate += covariance[(i, j)].abs() / (h[i] * h[j]);
        }
    }
    if rate == 0.0 {
        f64::INFINITY
    } else {
        cfl / rate
    }
}

/// [`solve_hjb_with_cfl`] with [`DEFAULT_CFL`].
pub fn solve_hjb(problem: &ControlProblem, grid: &Grid2D, dt: f64) -> Result<PsiField> {
    solve_hjb_with_cfl(problem, grid, dt, DEFAULT_CFL)
}

/// Integrates `ψ` from `t_f` back to `t_i` with explicit steps of size `dt`.
pub fn solve_hjb_with_cfl(problem: &ControlProblem, grid: &Grid2D, dt: f64, cfl: f64) -> Result<PsiField> {
    if problem.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "the finite-difference solver is two-dimensional, problem has dimension {}",
            problem.dim()
        )));
    }
    let cov = problem.noise_covariance();
    let rate = problem.running_cost().scale(-1.0 / problem.lambda());
    let eq = BackwardEquation {
        drift: problem.drift(),
        covariance: &cov,
        rate: &rate,
    };
    evolve(&eq, PsiField::terminal(problem, grid), problem.t_initial(), dt, cfl)
}

/// Steps `field` backward from its own time down to `t_end`.
pub fn evolve(eq: &BackwardEquation, mut field: PsiField, t_end: f64, dt: f64, cfl: f64) -> Result<PsiField> {
    let grid = field.grid.clone();
    if eq.drift.len() != 2 || eq.covariance.shape() != (2, 2) || eq.rate.nvars() != 2 {
        return Err(Error::InvalidArgument(
            "the finite-difference solver is two-dimensional".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end <= field.time) {
        return Err(Error::InvalidArgument(format!(
            "cannot step backward from {} to {t_end}",
            field.time
        )));
    }
    let limit = stability_limit(eq.covariance, &grid, cfl);
    if dt > limit * (1.0 + 1e-9) {
        return Err(Error::StabilityViolation { dt, limit });
    }

    let [n1, n2] = grid.counts();
    let [h1, h2] = grid.spacing();
    let cov = eq.covariance;
    let (d11, d22, d12) = (0.5 * cov[(0, 0)], 0.5 * cov[(1, 1)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]));

    let npts = grid.len();
    let mut a1 = Vec::with_capacity(npts);
    let mut a2 = Vec::with_capacity(npts);
    let mut g = Vec::with_capacity(npts);
    for i in 0..n1 {
        for j in 0..n2 {
            let x = grid.node(i, j);
            a1.push(eq.drift[0].eval(&x));
            a2.push(eq.drift[1].eval(&x));
            g.push(eq.rate.eval(&x));
        }
    }

    let mut next = field.values.clone();
    let (steps, tail) = crate::koopman::step_plan(field.time - t_end, dt);
    let step_sizes = std::iter::repeat_n(dt, steps).chain((tail > 0.0).then_some(tail));

    let mut t = field.time;
    for h in step_sizes {
        let psi = &field.values;
        for i in 0..n1 {
            let (im, ip) = (i.saturating_sub(1), (i + 1).min(n1 - 1));
            let edge1 = i == 0 || i == n1 - 1;
            for j in 0..n2 {
                let (jm, jp) = (j.saturating_sub(1), (j + 1).min(n2 - 1));
                let edge2 = j == 0 || j == n2 - 1;
                let k = i * n2 + j;
                let c = psi[k];
                let (e, w) = (psi[ip * n2 + j], psi[im * n2 + j]);
                let (nn, s) = (psi[i * n2 + jp], psi[i * n2 + jm]);

                let d1 = if edge1 {
                    if a1[k] > 0.0 {
                        (e - c) / h1
                    } else {
                        (c - w) / h1
                    }
                } else {
                    (e - w) / (2.0 * h1)
                };
                let d2 = if edge2 {
                    if a2[k] > 0.0 {
                        (nn - c) / h2
                    } else {
                        (c - s) / h2
                    }
                } else {
                    (nn - s) / (2.0 * h2)
                };
                let mut rate = a1[k] * d1 + a2[k] * d2 + g[k] * c;
                if d11 != 0.0 {
                    rate += d11 * (e - 2.0 * c + w) / (h1 * h1);
                }
                if d22 != 0.0 {
                    rate += d22 * (nn - 2.0 * c + s) / (h2 * h2);
                }
                if d12 != 0.0 {
                    let cross = psi[ip * n2 + jp] - psi[ip * n2 + jm] - psi[im * n2 + jp] + psi[im * n2 + jm];
                    rate += d12 * cross / (4.0 * h1 * h2);
                }
                next[k] = c + h * rate;
            }
        }
        std::mem::swap(&mut field.values, &mut next);
        t -= h;
        if field.values.iter().any(|v| !(v.abs() <= BLOWUP)) {
            return Err(Error::Unstable { time: t });
        }
    }
    field.time = t_end;
    Ok(field)
}

/// Feedback input `λ R⁻¹ Uᵀ ∇ψ/ψ` from a grid field.
pub fn fd_control(field: &PsiField, x: &[f64], problem: &ControlProblem) -> Result<Vec<f64>> {
    let (psi, grad) = field.interpolate(x)?;
    let phi = problem.terminal_cost().eval(x);
    let normalized = psi * (phi / problem.lambda()).exp();
    if !(normalized > PSI_FLOOR) {
        return Err(Error::DesirabilityUnderflow {
            state: x.to_vec(),
            psi,
        });
    }
    let u = problem.control_from_log_gradient(&[grad[0] / psi, grad[1] / psi]);
    if u.iter().all(|v| v.is_finite()) {
        Ok(u)
    } else {
        Err(Error::NonFinite(format!("control at {x:?}")))
    }
}
