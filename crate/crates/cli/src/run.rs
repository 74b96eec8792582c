//! Subcommand implementations. Each writes one CSV whose first lines are the
//! resolved configuration as `#` comments.

use std::fs;
use std::io::Write;
use std::path::Path;

use stochctl_core::hjb::{solve_hjb_with_cfl, Grid2D, PsiField};
use stochctl_core::koopman::{self, KoopmanPolicy};
use stochctl_core::pathint::{feynman_kac_psi, write_estimates_csv, RngStream};
use stochctl_core::sim::{closed_loop_run, ClampBox, ControlSource, Controller};

use crate::config::{check_npaths, RunConfig};
use crate::error::CliError;

/// Joint Koopman/finite-difference table and its error summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<([f64; 2], f64, f64)>,
    pub max_rel: f64,
    pub max_at: [f64; 2],
    pub mean_rel: f64,
}

/// Relative error of `a` against the reference `b`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ensure_parent(out: &Path) -> Result<(), CliError> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(
            out.display(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ))
    }
}

fn write_artifact(out: &Path, config: &RunConfig, body: &[u8]) -> Result<(), CliError> {
    let mut bytes = config.comment_header().into_bytes();
    bytes.extend_from_slice(body);
    fs::write(out, bytes).map_err(|e| CliError::io(out.display(), e))
}

fn io_to_vec(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

pub fn koopman_policy(config: &RunConfig) -> Result<KoopmanPolicy, CliError> {
    let k = config.koopman()?;
    let problem = config.control_problem();
    let coeffs = koopman::solve(problem, &k.cutoffs, k.z_cutoff, k.dt)?;
    Ok(KoopmanPolicy::new(coeffs, problem.clone()))
}

pub fn fd_field(config: &RunConfig) -> Result<PsiField, CliError> {
    let f = config.fd()?;
    let grid = Grid2D::new(f.min, f.max, f.spacing)?;
    Ok(solve_hjb_with_cfl(config.control_problem(), &grid, f.dt, f.cfl)?)
}

pub fn solve_koopman(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    ensure_parent(out)?;
    let policy = koopman_policy(config)?;
    let body = io_to_vec(|w| policy.coeffs().write_csv(w));
    write_artifact(out, config, &body)
}

pub fn solve_hjb(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    ensure_parent(out)?;
    let field = fd_field(config)?;
    let body = io_to_vec(|w| field.write_csv(w));
    write_artifact(out, config, &body)
}

/// Point `k` of the `[fk]` table uses seed `seed + k`.
pub fn solve_fk(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let fk = config.fk()?;
    check_npaths(fk.npaths)?;
    ensure_parent(out)?;
    let problem = config.control_problem();
    let mut rows = Vec::with_capacity(fk.points.len());
    for (k, x) in fk.points.iter().enumerate() {
        let rng = RngStream::new(fk.seed.wrapping_add(k as u64));
        let est = feynman_kac_psi(problem, x, fk.t, fk.dt, fk.npaths, &rng)?;
        rows.push((x.clone(), fk.t, est));
    }
    let body = io_to_vec(|w| write_estimates_csv(w, &rows));
    write_artifact(out, config, &body)
}

/// Runs the closed loop and returns the step indices where `u = 0` was
/// substituted.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<Vec<usize>, CliError> {
    let s = config.simulate()?;
    s.validate(config.problem.drift.len())?;
    ensure_parent(out)?;
    let clamp = ClampBox::new(s.clamp_min.clone(), s.clamp_max.clone())?;
    let source = match s.controller.as_str() {
        "koopman" => ControlSource::Koopman(koopman_policy(config)?),
        "fd" => ControlSource::Fd(fd_field(config)?),
        _ => ControlSource::Zero,
    };
    let controller = Controller::new(source, clamp, config.control_problem().clone())?;
    let traj = closed_loop_run(config.plant(), &controller, &s.x0, s.duration, s.dt, s.seed)?;
    let body = io_to_vec(|w| traj.write_csv(w, s.stride));
    write_artifact(out, config, &body)?;
    Ok(traj.underflow_steps)
}

/// Koopman against finite differences at the grid nodes inside the
/// `[compare]` rectangle.
pub fn compare(config: &RunConfig) -> Result<Comparison, CliError> {
    let region = config.compare()?;
    let policy = koopman_policy(config)?;
    let field = fd_field(config)?;
    let grid = field.grid();
    let [n1, n2] = grid.counts();
    let tol = 1e-9;
    let mut rows = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let x = grid.node(i, j);
            let inside = (0..2).all(|a| x[a] >= region.min[a] - tol && x[a] <= region.max[a] + tol);
            if inside {
                rows.push((x, policy.psi(&x), field.at_node(i, j)));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Validation("[compare] region contains no grid nodes".into()));
    }
    let mut max_rel: f64 = 0.0;
    let mut max_at = rows[0].0;
    let mut sum = 0.0;
    for (x, k, f) in &rows {
        let e = rel_err(*k, *f);
        sum += e;
        if e > max_rel {
            max_rel = e;
            max_at = *x;
        }
    }
    let mean_rel = sum / rows.len() as f64;
    Ok(Comparison {
        rows,
        max_rel,
        max_at,
        mean_rel,
    })
}

pub fn compare_psi(config: &RunConfig, out: &Path) -> Result<Comparison, CliError> {
    ensure_parent(out)?;
    let cmp = compare(config)?;
    let body = io_to_vec(|w| {
        writeln!(w, "x1,x2,psi_koopman,psi_fd,rel_err")?;
        for (x, k, f) in &cmp.rows {
            writeln!(w, "{},{},{k:e},{f:e},{:e}", x[0], x[1], rel_err(*k, *f))?;
        }
        Ok(())
    });
    write_artifact(out, config, &body)?;
    Ok(cmp)
}
