//! Shared helpers for the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stochctl_core::apply_operator;
use stochctl_core::ito::ito_extend;
use stochctl_core::koopman::{CoeffTensor, Lattice};
use stochctl_core::presets::VanDerPol;
use stochctl_core::Polynomial;

/// Tensor at time `time` with entries uniform in [−1, 1].
pub fn random_tensor(lattice: &Lattice, seed: u64, time: f64) -> CoeffTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = CoeffTensor::zeros(lattice.clone(), time);
    for lin in 0..lattice.len() {
        let idx = lattice.multi(lin);
        t.set(&idx, rng.gen_range(-1.0..1.0));
    }
    t
}

/// The van der Pol coefficient equations written out by hand, one line per
/// published term, as the rate with respect to time-to-go.
pub fn vdp_rhs(vdp: &VanDerPol, lambda: f64, p: &CoeffTensor) -> CoeffTensor {
    let cut = p.lattice().cutoffs().to_vec();
    let at = |n1: i64, n2: i64, nz: i64| -> f64 {
        if n1 < 0 || n2 < 0 || nz < 0 || n1 as usize >= cut[0] || n2 as usize >= cut[1] || nz as usize >= cut[2] {
            0.0
        } else {
            p.get(&[n1 as u32, n2 as u32, nz as u32])
        }
    };
    let l = lambda;
    let eps = vdp.epsilon;
    let b2 = vdp.b22 * vdp.b22;
    let (x1c, x2c) = (vdp.centers[0], vdp.centers[1]);
    let (s1, s2) = (vdp.widths[0] * vdp.widths[0], vdp.widths[1] * vdp.widths[1]);

    let mut out = CoeffTensor::zeros(p.lattice().clone(), p.time());
    for n1 in 0..cut[0] as i64 {
        for n2 in 0..cut[1] as i64 {
            for nz in 0..cut[2] as i64 {
                let (f1, f2, fz) = (n1 as f64, n2 as f64, nz as f64);
                let mut r = 0.0;
                r += -1.0 / (2.0 * l * s2) * at(n1, n2 - 2, nz);
                r += x2c / (l * s2) * at(n1, n2 - 1, nz);
                r += -x2c * x2c / (2.0 * l * s2) * at(n1, n2, nz);
                r += -1.0 / (2.0 * l * s1) * at(n1 - 2, n2, nz);
                r += x1c / (l * s1) * at(n1 - 1, n2, nz);
                r += -x1c * x1c / (2.0 * l * s1) * at(n1, n2, nz);
                r += (f1 + 1.0) * at(n1 + 1, n2 - 1, nz);
                r += -eps * f2 * at(n1 - 2, n2, nz);
                r += eps * f2 * at(n1, n2, nz);
                r += -(f2 + 1.0) * at(n1 - 1, n2 + 1, nz);
                r += eps / (l * s2) * fz * at(n1 - 2, n2 - 2, nz);
                r += -eps * x2c / (l * s2) * fz * at(n1 - 2, n2 - 1, nz);
                r += -eps / (l * s2) * fz * at(n1, n2 - 2, nz);
                r += eps * x2c / (l * s2) * fz * at(n1, n2 - 1, nz);
                r += -b2 / (2.0 * l * s2) * fz * at(n1, n2, nz);
                r += 1.0 / (l * s2) * fz * at(n1 - 1, n2 - 1, nz);
                r += -x2c / (l * s2) * fz * at(n1 - 1, n2, nz);
                r += -1.0 / (l * s1) * fz * at(n1 - 1, n2 - 1, nz);
                r += x1c / (l * s1) * fz * at(n1, n2 - 1, nz);
                r += b2 / (2.0 * l * l * s2 * s2) * fz * at(n1, n2 - 2, nz);
                r += -b2 * x2c / (l * l * s2 * s2) * fz * at(n1, n2 - 1, nz);
                r += b2 * x2c * x2c / (2.0 * l * l * s2 * s2) * fz * at(n1, n2, nz);
                r += b2 / 2.0 * (f2 + 2.0) * (f2 + 1.0) * at(n1, n2 + 2, nz);
                r += -b2 / (l * s2) * f2 * fz * at(n1, n2, nz);
                r += b2 * x2c / (l * s2) * (f2 + 1.0) * fz * at(n1, n2 + 1, nz);
                r += b2 / (2.0 * l * l * s2 * s2) * fz * (fz - 1.0) * at(n1, n2 - 2, nz);
                r += -b2 * x2c / (l * l * s2 * s2) * fz * (fz - 1.0) * at(n1, n2 - 1, nz);
                r += b2 * x2c * x2c / (2.0 * l * l * s2 * s2) * fz * (fz - 1.0) * at(n1, n2, nz);
                out.set(&[n1 as u32, n2 as u32, nz as u32], r);
            }
        }
    }
    out
}

/// Monte Carlo check of the van der Pol `L'` against one Euler–Maruyama
/// step of `x`, with `z` recomputed exactly as `exp(−φ(x)/λ)` after the step.
/// Covers every monomial of degree ≤ 3 in `(x1, x2, z)` at five states.
/// The difference quotient has an O(dt) bias, removed by combining steps of
/// dt and 2·dt driven by the same normals.
///
/// Returns the largest deviation in standard errors and where it occurred.
pub fn generator_mc_worst(n: usize) -> (f64, String) {
    let vdp = VanDerPol::default();
    let problem = vdp.control_problem().unwrap();
    let ext = ito_extend(&problem).unwrap();
    let lambda = problem.lambda();
    let phi = problem.terminal_cost();
    let drift = problem.drift();
    let b22 = vdp.b22;

    let mut monomials = Vec::new();
    for a in 0..=3u32 {
        for b in 0..=3 - a {
            for c in 0..=3 - a - b {
                monomials.push(Polynomial::monomial(vec![a, b, c], 1.0));
            }
        }
    }
    let states = [[0.0, 0.0], [1.0, 0.0], [0.5, -0.5], [-0.7, 0.3], [1.2, 0.8]];
    let dt = 1e-4;

    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for (s, x) in states.iter().enumerate() {
        let z0 = (-phi.eval(x) / lambda).exp();
        let here = [x[0], x[1], z0];
        let a = [drift[0].eval(x), drift[1].eval(x)];
        let mut rng = ChaCha8Rng::seed_from_u64(40 + s as u64);
        let mut sums = vec![(0.0, 0.0); monomials.len()];
        for _ in 0..n {
            let xi: f64 = StandardNormal.sample(&mut rng);
            let lifted = |h: f64| {
                let y = [x[0] + a[0] * h, x[1] + a[1] * h + b22 * h.sqrt() * xi];
                [y[0], y[1], (-phi.eval(&y) / lambda).exp()]
            };
            let (w1, w2) = (lifted(dt), lifted(2.0 * dt));
            for (m, acc) in monomials.iter().zip(sums.iter_mut()) {
                let f0 = m.eval(&here);
                let d = 2.0 * (m.eval(&w1) - f0) / dt - (m.eval(&w2) - f0) / (2.0 * dt);
                acc.0 += d;
                acc.1 += d * d;
            }
        }
        for (m, (s1, s2)) in monomials.iter().zip(&sums) {
            let mean = s1 / n as f64;
            let var = ((s2 / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).max(0.0);
            let se = (var / n as f64).sqrt();
            let exact = apply_operator(&ext.generator, m).eval(&here);
            // monomials in x1 alone are noiseless; they keep only the O(dt²) remainder
            let floor = 1e-6 * exact.abs().max(1.0);
            let z = ((mean - exact).abs() - floor).max(0.0) / se.max(1e-300);
            if z >= worst {
                worst = z;
                at = format!("state {x:?}, monomial {m}: MC {mean} ± {se}, L' gives {exact}");
            }
        }
    }
    (worst, at)
}
