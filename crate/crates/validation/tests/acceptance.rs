//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use stochctl::config::{RunConfig, VDP_CONFIG};
use stochctl::run;
use stochctl_core::hjb::{evolve, fd_control, solve_hjb, BackwardEquation, Grid2D, PsiField, DEFAULT_CFL};
use stochctl_core::ito::ito_extend;
use stochctl_core::koopman::{compile, integrate_backward, solve, CoeffTensor, KoopmanPolicy};
use stochctl_core::pathint::{feynman_kac_psi, RngStream};
use stochctl_core::presets::{van_der_pol_drift, VanDerPol};
use stochctl_core::sim::{closed_loop_run, ClampBox, ControlSource, Controller};
use stochctl_core::{ControlProblem, PolyOperator, Polynomial, ProblemSpec};
use stochctl_validation::{fk_seed, Verdict, PROBES};

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

fn preset() -> RunConfig {
    RunConfig::load(VDP_CONFIG).expect("preset loads")
}

fn timed(id: u32, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f();
    Verdict {
        id,
        title,
        pass,
        detail,
        elapsed: start.elapsed(),
    }
}

fn lambda_reproduction() -> Verdict {
    let config = preset();
    let start = Instant::now();
    let problem = VanDerPol::default().control_problem().unwrap();
    let elapsed = start.elapsed();
    let err = (problem.lambda() - 0.25).abs().max((config.problem.lambda - 0.25).abs());
    Verdict {
        id: 1,
        title: "lambda reproduction",
        pass: err <= 1e-12 && elapsed < Duration::from_millis(1),
        detail: format!("lambda = {}, |error| = {err:e}, {} us", problem.lambda(), elapsed.as_micros()),
        elapsed,
    }
}

fn compiler_oracle() -> Verdict {
    timed(2, "compiled stencil vs hand-coded coefficient equations", || {
        let vdp = VanDerPol::default();
        let problem = vdp.control_problem().unwrap();
        let ext = ito_extend(&problem).unwrap();
        let ode = compile(&ext.generator, &ext.g_term, &[60, 60, 2]).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let p = common::random_tensor(ode.lattice(), seed, 0.0);
            worst = worst.max(ode.apply(&p).max_abs_diff(&common::vdp_rhs(&vdp, problem.lambda(), &p)));
        }
        (worst < 1e-12, format!("100 random 60x60x2 tensors, max |difference| = {worst:e}"))
    })
}

fn koopman_vs_fd() -> Verdict {
    let v = timed(3, "Koopman vs finite-difference psi on [-1.5, 1.5]^2", || {
        let c = run::compare(&preset()).unwrap();
        (
            c.max_rel <= 0.05 && c.mean_rel <= 0.01,
            format!(
                "dx = 0.01, {} nodes: max rel {:.2}% at ({}, {}) (limit 5%), mean rel {:.3}% (limit 1%)",
                c.rows.len(),
                100.0 * c.max_rel,
                c.max_at[0],
                c.max_at[1],
                100.0 * c.mean_rel
            ),
        )
    });
    let mut fine = preset();
    if let Some(fd) = fine.fd.as_mut() {
        fd.spacing = [0.005, 0.005];
        fd.dt = 2.5e-5;
    }
    let c = run::compare(&fine).unwrap();
    println!(
        "  note: same comparison at dx = 0.005, dt = 2.5e-5: max rel {:.2}%, mean rel {:.3}%",
        100.0 * c.max_rel,
        100.0 * c.mean_rel
    );
    v
}

fn three_way() -> Verdict {
    timed(4, "Feynman-Kac vs Koopman and finite differences at 10 probes", || {
        let config = preset();
        let problem = config.control_problem();
        let policy = run::koopman_policy(&config).unwrap();
        let grid = Grid2D::new([-2.0, -2.0], [2.0, 2.0], [0.0025, 0.005]).unwrap();
        let field = solve_hjb(problem, &grid, 2.5e-5).unwrap();
        let mut pass = true;
        let mut worst: f64 = 0.0;
        for (k, x) in PROBES.iter().enumerate() {
            let est = feynman_kac_psi(problem, x, 0.0, 1e-4, 100_000, &RngStream::new(fk_seed(k))).unwrap();
            let (i, j) = grid.node_index_of(*x, 1e-9).unwrap();
            let zk = (est.mean - policy.psi(x)) / est.stderr;
            let zf = (est.mean - field.at_node(i, j)) / est.stderr;
            pass &= zk.abs() <= 3.0 && zf.abs() <= 3.0;
            worst = worst.max(zk.abs()).max(zf.abs());
            println!(
                "  probe ({:>4}, {:>4}): FK {:.6e} +- {:.1e}, Koopman z = {zk:+.2}, FD z = {zf:+.2}",
                x[0], x[1], est.mean, est.stderr
            );
        }
        (pass, format!("largest |deviation| = {worst:.2} standard errors (limit 3)"))
    })
}

fn regulation() -> Verdict {
    timed(5, "closed-loop regulation over t in [5, 10], 20 seeds", || {
        let config = preset();
        let problem = config.control_problem().clone();
        let clamp = ClampBox::symmetric(2, 1.5).unwrap();
        let sources = [
            ("koopman", ControlSource::Koopman(run::koopman_policy(&config).unwrap())),
            ("fd", ControlSource::Fd(run::fd_field(&config).unwrap())),
            ("zero", ControlSource::Zero),
        ];
        let mut metrics = Vec::new();
        let mut underflows = 0;
        for (_, source) in sources {
            let controller = Controller::new(source, clamp.clone(), problem.clone()).unwrap();
            let mut sum = [0.0; 2];
            for seed in 1..=20 {
                let traj = closed_loop_run(config.plant(), &controller, &[2.0, 0.0], 10.0, 1e-4, seed).unwrap();
                underflows += traj.underflow_steps.len();
                let d = traj.mean_abs_deviation(&[1.0, 0.0], 5.0, 10.0);
                sum[0] += d[0] / 20.0;
                sum[1] += d[1] / 20.0;
            }
            metrics.push(sum);
        }
        let [k, f, z] = [metrics[0], metrics[1], metrics[2]];
        let close = |a: f64, b: f64| (a - b).abs() <= 0.25 * b;
        let pass = k[0] < 0.5 && k[1] < 0.5 && z[0] > 1.0 && close(f[0], k[0]) && close(f[1], k[1]);
        (
            pass,
            format!(
                "mean|x1-1|, mean|x2|: Koopman {:.4}, {:.4}; FD {:.4}, {:.4}; uncontrolled {:.4}, {:.4}; {underflows} underflow steps",
                k[0], k[1], f[0], f[1], z[0], z[1]
            ),
        )
    })
}

fn check(results: &mut Vec<(bool, String)>, pass: bool, what: String) {
    results.push((pass, what));
}

fn analytic_suite() -> Verdict {
    let mut results = Vec::new();
    let v = timed(6, "analytic invariants", || {
        // constant killing rate, coefficient route
        let c = 2.5;
        let g = PolyOperator::multiplication(&Polynomial::constant(3, -c));
        let ode = compile(&PolyOperator::zero(2), &g, &[6, 6, 2]).unwrap();
        let terminal = CoeffTensor::terminal(ode.lattice().clone(), 0.1).unwrap();
        let out = integrate_backward(&ode, &terminal, 0.1, 0.0, 1e-4).unwrap();
        let e = (out.get(&[0, 0, 1]) - (-c * 0.1f64).exp()).abs();
        check(&mut results, e < 1e-10, format!("RK4 constant g: |error| = {e:e} (limit 1e-10)"));

        // constant killing rate, grid route
        let grid = Grid2D::square(-1.0, 1.0, 0.1).unwrap();
        let start = PsiField::from_values(grid.clone(), vec![1.0; grid.len()], 0.1).unwrap();
        let zero = [Polynomial::zero(2), Polynomial::zero(2)];
        let eq = BackwardEquation {
            drift: &zero,
            covariance: &DMatrix::zeros(2, 2),
            rate: &Polynomial::constant(2, -1.0),
        };
        let out = evolve(&eq, start, 0.0, 1e-5, DEFAULT_CFL).unwrap();
        let e = out.values().iter().fold(0.0f64, |m, v| m.max((v - (-0.1f64).exp()).abs()));
        check(&mut results, e < 1e-6, format!("FD constant g: |error| = {e:e} (limit 1e-6)"));

        // zero cost
        let free = ControlProblem::new(ProblemSpec {
            drift: van_der_pol_drift(1.0),
            diffusion: diag(0.0, 1.0),
            control: diag(0.0, 1.0),
            weight: diag(0.0, 0.25),
            terminal_cost: Polynomial::zero(2),
            running_cost: Polynomial::zero(2),
            t_initial: 0.0,
            t_final: 0.1,
            lambda: None,
        })
        .unwrap();
        let policy = KoopmanPolicy::new(solve(&free, &[20, 20], 2, 1e-3).unwrap(), free.clone());
        let grid = Grid2D::square(-2.0, 2.0, 0.04).unwrap();
        let field = solve_hjb(&free, &grid, 1e-3).unwrap();
        let mut dev: f64 = field.values().iter().fold(0.0, |m, v| m.max((v - 1.0).abs()));
        for (k, x) in PROBES.iter().enumerate() {
            dev = dev.max((policy.psi(x) - 1.0).abs());
            dev = dev.max(policy.control(x).unwrap().iter().fold(0.0, |m, u| m.max(u.abs())));
            dev = dev.max(fd_control(&field, x, &free).unwrap().iter().fold(0.0, |m, u| m.max(u.abs())));
            let est = feynman_kac_psi(&free, x, 0.0, 1e-3, 100, &RngStream::new(fk_seed(k))).unwrap();
            dev = dev.max((est.mean - 1.0).abs()).max(est.stderr);
        }
        check(&mut results, dev == 0.0, format!("zero cost: max |psi - 1|, |u|, FK stderr = {dev:e}"));

        // heat kernel
        let b22: f64 = 1.0;
        let h = 0.1;
        let heat = ControlProblem::new(ProblemSpec {
            drift: vec![Polynomial::zero(2), Polynomial::zero(2)],
            diffusion: diag(0.0, b22),
            control: diag(0.0, 1.0),
            weight: diag(0.0, 1.0),
            terminal_cost: Polynomial::monomial(vec![0, 2], 1.0 / (2.0 * 0.25)),
            running_cost: Polynomial::zero(2),
            t_initial: 0.0,
            t_final: h,
            lambda: None,
        })
        .unwrap();
        let grid = Grid2D::new([0.0, -3.0], [0.03, 3.0], [0.01, 0.01]).unwrap();
        let field = solve_hjb(&heat, &grid, 1e-4).unwrap();
        let (mut m0, mut m2) = (0.0, 0.0);
        for j in 0..grid.counts()[1] {
            let x2 = grid.node(1, j)[1];
            m0 += field.at_node(1, j);
            m2 += field.at_node(1, j) * x2 * x2;
        }
        let exact = 0.25 + b22 * b22 * h;
        let e = (m2 / m0 / exact - 1.0).abs();
        check(
            &mut results,
            e < 0.005,
            format!("heat kernel: variance {:.5} vs {exact}, rel error {:.3}% (limit 0.5%)", m2 / m0, 100.0 * e),
        );

        // generator against Monte Carlo
        let (worst, at) = common::generator_mc_worst(100_000);
        check(
            &mut results,
            worst <= 3.0,
            format!("generator vs MC: largest deviation {worst:.2} standard errors (limit 3; {at})"),
        );

        // RK4 refinement
        let vdp = VanDerPol::default().control_problem().unwrap();
        let psi = |dt: f64| {
            let p = KoopmanPolicy::new(solve(&vdp, &[60, 60], 2, dt).unwrap(), vdp.clone());
            PROBES.map(|x| p.psi(&x))
        };
        let [a, b, c] = [1e-3, 5e-4, 2.5e-4].map(psi);
        let ratios: Vec<f64> = (0..PROBES.len()).map(|k| (a[k] - b[k]) / (b[k] - c[k])).collect();
        let (lo, hi) = min_max(&ratios);
        check(
            &mut results,
            lo >= 8.0 && hi <= 32.0,
            format!("RK4 refinement ratios in [{lo:.1}, {hi:.1}] (order 4 gives 16; accepted [8, 32])"),
        );

        // FD refinement
        let probes = [[0.0, 0.0], [0.48, 0.48], [-0.48, 0.48], [0.48, -0.48], [-0.48, -0.48], [1.0, 1.0], [-1.0, 0.0], [0.0, 1.0]];
        let fields: Vec<(Grid2D, PsiField)> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&dx| {
                let g = Grid2D::square(-2.0, 2.0, dx).unwrap();
                let f = solve_hjb(&vdp, &g, 1e-4).unwrap();
                (g, f)
            })
            .collect();
        let at = |(g, f): &(Grid2D, PsiField), x: [f64; 2]| {
            let (i, j) = g.node_index_of(x, 1e-9).unwrap();
            f.at_node(i, j)
        };
        let ratios: Vec<f64> = probes
            .iter()
            .map(|&x| {
                let v: Vec<f64> = fields.iter().map(|f| at(f, x)).collect();
                (v[0] - v[1]) / (v[1] - v[2])
            })
            .collect();
        let (lo, hi) = min_max(&ratios);
        check(
            &mut results,
            lo >= 3.0 && hi <= 5.0,
            format!("FD refinement ratios in [{lo:.2}, {hi:.2}] (order 2 gives 4; accepted [3, 5])"),
        );

        let failed = results.iter().filter(|r| !r.0).count();
        (failed == 0, format!("{} of {} checks pass", results.len() - failed, results.len()))
    });
    for (pass, what) in &results {
        println!("  {} {what}", if *pass { "ok  " } else { "FAIL" });
    }
    v
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, fn() -> Verdict); 6] = [
        (1, lambda_reproduction),
        (2, compiler_oracle),
        (3, koopman_vs_fd),
        (4, three_way),
        (5, regulation),
        (6, analytic_suite),
    ];
    let mut verdicts = Vec::new();
    for (id, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let v = run();
        println!("{}", v.line());
        verdicts.push(v);
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        verdicts.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" (criteria {failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
