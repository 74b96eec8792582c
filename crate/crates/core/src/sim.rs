//! Closed-loop runs of a precomputed feedback law.
//!
//! The controller is the time-`t_i` feedback `u(x)` of a short-horizon
//! problem and is reused at every step. The observed state is clamped to a
//! box before the law is evaluated, since the expansions are only reliable
//! near the region they were fitted on.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::hjb::{fd_control, PsiField};
use crate::koopman::KoopmanPolicy;
use crate::pathint::{step_sizes, RngStream, Stepper};
use crate::problem::{ControlProblem, Plant};

/// Per-axis `[lo, hi]` bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ClampBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ClampBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let ok = lo.len() == hi.len()
            && !lo.is_empty()
            && lo.iter().zip(&hi).all(|(l, h)| l.is_finite() && h.is_finite() && l <= h);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "clamp box needs finite bounds with lo ≤ hi: {lo:?} / {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[−bound, bound]` on every axis.
    pub fn symmetric(dim: usize, bound: f64) -> Result<Self> {
        Self::new(vec![-bound; dim], vec![bound; dim])
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Projection of `x` onto the box.
pub fn clamp_state(x: &[f64], bounds: &ClampBox) -> Vec<f64> {
    x.iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect()
}

#[derive(Clone, Debug)]
pub enum ControlSource {
    Koopman(KoopmanPolicy),
    Fd(PsiField),
    Zero,
}

#[derive(Clone, Debug)]
pub struct Controller {
    source: ControlSource,
    clamp: ClampBox,
    problem: ControlProblem,
}

impl Controller {
    pub fn new(source: ControlSource, clamp: ClampBox, problem: ControlProblem) -> Result<Self> {
        if clamp.dim() != problem.dim() {
            return Err(Error::InvalidArgument(format!(
                "clamp box has {} axes for a {}-dimensional problem",
                clamp.dim(),
                problem.dim()
            )));
        }
        Ok(Self {
            source,
            clamp,
            problem,
        })
    }

    pub fn koopman(policy: KoopmanPolicy, clamp: ClampBox) -> Result<Self> {
        let problem = policy.problem().clone();
        Self::new(ControlSource::Koopman(policy), clamp, problem)
    }

    pub fn source(&self) -> &ControlSource {
        &self.source
    }

    pub fn clamp(&self) -> &ClampBox {
        &self.clamp
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    /// Feedback input at the clamped version of `x`.
    pub fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xc = clamp_state(x, &self.clamp);
        match &self.source {
            ControlSource::Koopman(p) => p.control(&xc),
            ControlSource::Fd(field) => fd_control(field, &xc, &self.problem),
            ControlSource::Zero => Ok(vec![0.0; self.problem.control().ncols()]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `controls[k]` acts on `[times[k], times[k+1]]`.
    pub controls: Vec<Vec<f64>>,
    pub seed: u64,
    /// Steps where the desirability underflowed and `u = 0` was applied.
    pub underflow_steps: Vec<usize>,
    /// Inputs written to CSV (those the plant actually uses).
    pub active_inputs: Vec<usize>,
}

impl Trajectory {
    /// Writes `t,x1,…,xN,u…` for every `stride`-th sample. The final sample
    /// has no control and leaves those fields empty.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        let dim = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        header.extend(self.active_inputs.iter().map(|j| format!("u{}", j + 1)));
        writeln!(w, "{}", header.join(","))?;
        for k in (0..self.states.len()).step_by(stride) {
            write!(w, "{}", self.times[k])?;
            for v in &self.states[k] {
                write!(w, ",{v}")?;
            }
            for &j in &self.active_inputs {
                match self.controls.get(k) {
                    Some(u) => write!(w, ",{}", u[j])?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Mean of `|x_i − target_i|` per axis over samples with `t` in `[from, to]`.
    pub fn mean_abs_deviation(&self, targets: &[f64], from: f64, to: f64) -> Vec<f64> {
        let mut sum = vec![0.0; targets.len()];
        let mut count = 0usize;
        for (t, x) in self.times.iter().zip(&self.states) {
            if *t >= from && *t <= to {
                for (s, (xi, c)) in sum.iter_mut().zip(x.iter().zip(targets)) {
                    *s += (xi - c).abs();
                }
                count += 1;
            }
        }
        sum.iter().map(|s| s / count.max(1) as f64).collect()
    }
}

/// Euler–Maruyama run of `plant` under `controller` from `x0` over
/// `[0, duration]`. The run's noise comes from stream 0 of `seed`.
pub fn closed_loop_run(
    plant: &Plant,
    controller: &Controller,
    x0: &[f64],
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite() && duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and a finite duration ≥ 0 (dt = {dt}, duration = {duration})"
        )));
    }
    let n = plant.dim();
    if x0.len() != n || controller.problem().dim() != n {
        return Err(Error::InvalidArgument(format!(
            "initial state, controller and plant dimensions differ ({}, {}, {n})",
            x0.len(),
            controller.problem().dim()
        )));
    }
    if controller.problem().control().ncols() != plant.input_dim() {
        return Err(Error::InvalidArgument(
            "controller and plant have different numbers of inputs".into(),
        ));
    }
    let stepper = Stepper::new(&plant.drift, &plant.diffusion)?;
    let mut rng = RngStream::new(seed).stream(0);

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        controls: Vec::new(),
        seed,
        underflow_steps: Vec::new(),
        active_inputs: (0..plant.input_dim())
            .filter(|&j| plant.control.column(j).iter().any(|&v| v != 0.0))
            .collect(),
    };
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; n];
    let mut push = vec![0.0; n];
    let mut t = 0.0;
    for (k, h) in step_sizes(duration, dt).enumerate() {
        let u = match controller.control(&x) {
            Ok(u) => u,
            Err(Error::DesirabilityUnderflow { .. }) => {
                traj.underflow_steps.push(k);
                vec![0.0; plant.input_dim()]
            }
            Err(e) => return Err(e),
        };
        for (i, p) in push.iter_mut().enumerate() {
            *p = (0..u.len()).map(|j| plant.control[(i, j)] * u[j]).sum();
        }
        stepper.step(&mut x, h, &mut rng, &mut buf, Some(&push));
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("closed-loop state at step {}", k + 1)));
        }
        t = if h == dt { (k + 1) as f64 * dt } else { t + h };
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.controls.push(u);
    }
    Ok(traj)
}
