//! Feynman–Kac Monte Carlo estimates of the desirability
//!
//! ```text
//! ψ(x, t) = E[ exp(−φ(x(t_f))/λ) · exp(∫_t^{t_f} g dτ) ],   g = −V/λ
//! ```
//!
//! over paths of the uncontrolled SDE `dx = a(x) dt + B dW` started at `x`.
//! Paths use Euler–Maruyama steps and the integral of `g` is a left-endpoint
//! sum with the same step.

use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::koopman::step_plan;
use crate::poly::{FlatPolynomial, Polynomial};
use crate::problem::ControlProblem;

/// Seeded source of independent random streams.
///
/// Stream `k` depends only on `(seed, k)`, so path `k` of an ensemble is the
/// same however the ensemble is split or scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_paths`.
    pub stderr: f64,
    pub n_paths: usize,
}

impl FkEstimate {
    /// Mean and standard error of per-path samples, summed in order.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 paths, got {n}"
            )));
        }
        // deviations from the first sample, so identical samples give stderr 0
        let pivot = samples[0];
        let shift = samples.iter().map(|w| w - pivot).sum::<f64>() / n as f64;
        let mean = pivot + shift;
        let var = samples.iter().map(|w| (w - pivot - shift).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("Feynman–Kac mean".into()));
        }
        Ok(Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_paths: n,
        })
    }
}

/// Drift and noise prepared for repeated stepping.
pub(crate) struct Stepper {
    drift: Vec<FlatPolynomial>,
    /// Nonzero columns of `B`.
    noise: Vec<Vec<f64>>,
    dim: usize,
}

impl Stepper {
    pub(crate) fn new(drift: &[Polynomial], diffusion: &DMatrix<f64>) -> Result<Self> {
        let dim = drift.len();
        if diffusion.nrows() != dim {
            return Err(Error::InvalidArgument(format!(
                "B has {} rows for a {dim}-dimensional drift",
                diffusion.nrows()
            )));
        }
        let noise = (0..diffusion.ncols())
            .map(|c| diffusion.column(c).iter().copied().collect::<Vec<_>>())
            .filter(|col| col.iter().any(|&v| v != 0.0))
            .collect();
        Ok(Self {
            drift: drift.iter().map(FlatPolynomial::new).collect(),
            noise,
            dim,
        })
    }

    /// One Euler–Maruyama step in place. `buf` receives the drift values,
    /// to which `extra` is added when given.
    #[inline]
    pub(crate) fn step<R: Rng>(&self, x: &mut [f64], h: f64, rng: &mut R, buf: &mut [f64], extra: Option<&[f64]>) {
        for (b, a) in buf.iter_mut().zip(&self.drift) {
            *b = a.eval(x);
        }
        if let Some(extra) = extra {
            for (b, e) in buf.iter_mut().zip(extra) {
                *b += e;
            }
        }
        for (xi, b) in x.iter_mut().zip(buf.iter()) {
            *xi += b * h;
        }
        let sq = h.sqrt();
        for col in &self.noise {
            let xi: f64 = rng.sample(StandardNormal);
            let s = xi * sq;
            for (xk, &bk) in x.iter_mut().zip(col) {
                *xk += bk * s;
            }
        }
    }
}

pub(crate) fn step_sizes(span: f64, dt: f64) -> impl Iterator<Item = f64> {
    let (steps, tail) = step_plan(span, dt);
    std::iter::repeat_n(dt, steps)
        .chain((tail > 0.0).then_some(tail))
}

fn check_step(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")))
    }
}

/// Euler–Maruyama path of `dx = a(x) dt + B dW` from `t0` to `t1`, including
/// both endpoints. A final partial step lands exactly on `t1`.
pub fn euler_maruyama_path<R: Rng>(
    drift: &[Polynomial],
    diffusion: &DMatrix<f64>,
    x0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    check_step(dt)?;
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!("need t1 ≥ t0, got [{t0}, {t1}]")));
    }
    let stepper = Stepper::new(drift, diffusion)?;
    if x0.len() != stepper.dim {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} entries, expected {}",
            x0.len(),
            stepper.dim
        )));
    }
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; stepper.dim];
    let mut path = vec![x.clone()];
    for h in step_sizes(t1 - t0, dt) {
        stepper.step(&mut x, h, rng, &mut buf, None);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("path state after {} steps", path.len())));
        }
        path.push(x.clone());
    }
    Ok(path)
}

/// Per-path weights `exp(−φ(x(t_f))/λ + Σ g(x_k) h_k)` for paths started
/// at `(x, t)`. Path `k` uses stream `k` of `rng`.
pub fn feynman_kac_weights(
    problem: &ControlProblem,
    x: &[f64],
    t: f64,
    dt: f64,
    n_paths: usize,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    check_step(dt)?;
    if x.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, expected {}",
            x.len(),
            problem.dim()
        )));
    }
    if !(t <= problem.t_final()) {
        return Err(Error::InvalidArgument(format!(
            "start time {t} is after the horizon end {}",
            problem.t_final()
        )));
    }
    let stepper = Stepper::new(problem.drift(), problem.diffusion())?;
    let lambda = problem.lambda();
    let phi = FlatPolynomial::new(problem.terminal_cost());
    let v = FlatPolynomial::new(problem.running_cost());
    let running = !problem.running_cost().is_zero();
    let span = problem.t_final() - t;

    let mut weights = Vec::with_capacity(n_paths);
    let mut state = vec![0.0; x.len()];
    let mut buf = vec![0.0; x.len()];
    for k in 0..n_paths {
        let mut r = rng.stream(k as u64);
        state.copy_from_slice(x);
        let mut v_sum = 0.0;
        for h in step_sizes(span, dt) {
            if running {
                v_sum += v.eval(&state) * h;
            }
            stepper.step(&mut state, h, &mut r, &mut buf, None);
        }
        if !state.iter().all(|s| s.is_finite()) {
            return Err(Error::NonFinite(format!("path {k} from {x:?}")));
        }
        weights.push((-(phi.eval(&state) + v_sum) / lambda).exp());
    }
    Ok(weights)
}

/// Monte Carlo estimate of `ψ(x, t)` from `n_paths ≥ 2` paths.
pub fn feynman_kac_psi(
    problem: &ControlProblem,
    x: &[f64],
    t: f64,
    dt: f64,
    n_paths: usize,
    rng: &RngStream,
) -> Result<FkEstimate> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 paths, got {n_paths}"
        )));
    }
    FkEstimate::from_samples(&feynman_kac_weights(problem, x, t, dt, n_paths, rng)?)
}

/// Writes `x1,x2,…,t,mean,stderr,npaths` rows.
pub fn write_estimates_csv<W: Write>(mut w: W, rows: &[(Vec<f64>, f64, FkEstimate)]) -> io::Result<()> {
    let dim = rows.first().map_or(2, |r| r.0.len());
    let cols: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},t,mean,stderr,npaths", cols.join(","))?;
    for (x, t, e) in rows {
        for xi in x {
            write!(w, "{xi},")?;
        }
        writeln!(w, "{t},{:e},{:e},{}", e.mean, e.stderr, e.n_paths)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::VanDerPol;
    use crate::problem::ProblemSpec;

    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    fn problem(phi: Polynomial, v: Polynomial) -> ControlProblem {
        let vdp = VanDerPol::default();
        ControlProblem::new(ProblemSpec {
            drift: crate::presets::van_der_pol_drift(1.0),
            diffusion: diag(0.0, 1.0),
            control: diag(0.0, 1.0),
            weight: diag(0.0, 0.25),
            terminal_cost: phi,
            running_cost: v,
            t_initial: vdp.t_initial,
            t_final: vdp.t_final,
            lambda: None,
        })
        .unwrap()
    }

    #[test]
    fn zero_cost_gives_unit_weight() {
        let p = problem(Polynomial::zero(2), Polynomial::zero(2));
        let e = feynman_kac_psi(&p, &[0.2, -0.3], 0.0, 1e-3, 50, &RngStream::new(7)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn noiseless_path_is_constant_without_drift() {
        let drift = vec![Polynomial::zero(2), Polynomial::zero(2)];
        let mut rng = RngStream::new(1).stream(0);
        let path = euler_maruyama_path(&drift, &diag(0.0, 0.0), &[0.4, 0.5], 0.0, 0.1, 0.01, &mut rng).unwrap();
        assert_eq!(path.len(), 11);
        assert!(path.iter().all(|x| x == &vec![0.4, 0.5]));
    }

    #[test]
    fn partial_final_step_lands_on_t1() {
        let drift = vec![Polynomial::constant(1, 1.0)];
        let mut rng = RngStream::new(1).stream(0);
        let path = euler_maruyama_path(&drift, &DMatrix::zeros(1, 1), &[0.0], 0.0, 0.25, 0.1, &mut rng).unwrap();
        assert_eq!(path.len(), 4);
        assert!((path[3][0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(42);
        let a: f64 = s.stream(3).sample(StandardNormal);
        let b: f64 = s.stream(3).sample(StandardNormal);
        let c: f64 = s.stream(4).sample(StandardNormal);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn needs_two_paths() {
        let p = problem(Polynomial::zero(2), Polynomial::zero(2));
        assert!(feynman_kac_psi(&p, &[0.0, 0.0], 0.0, 1e-3, 1, &RngStream::new(0)).is_err());
        assert!(feynman_kac_psi(&p, &[0.0, 0.0], 0.2, 1e-3, 10, &RngStream::new(0)).is_err());
    }

    #[test]
    fn csv_rows() {
        let e = FkEstimate {
            mean: 0.5,
            stderr: 0.01,
            n_paths: 100,
        };
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[(vec![0.0, 1.0], 0.0, e)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x1,x2,t,mean,stderr,npaths\n0,1,0,5e-1,1e-2,100\n"
        );
    }
}
