mod common;

use common::{random_tensor, vdp_rhs};
use stochctl_core::ito::ito_extend;
use stochctl_core::koopman::{compile, CoeffOde};
use stochctl_core::presets::VanDerPol;

fn compiled(vdp: &VanDerPol, cutoffs: &[usize]) -> (CoeffOde, f64) {
    let p = vdp.control_problem().unwrap();
    let ext = ito_extend(&p).unwrap();
    (compile(&ext.generator, &ext.g_term, cutoffs).unwrap(), p.lambda())
}

#[test]
fn preset_matches_hand_coded_equations() {
    let vdp = VanDerPol::default();
    let (ode, lambda) = compiled(&vdp, &[60, 60, 2]);
    for seed in 0..100 {
        let p = random_tensor(ode.lattice(), seed, 0.0);
        let d = ode.apply(&p).max_abs_diff(&vdp_rhs(&vdp, lambda, &p));
        assert!(d < 1e-12, "seed {seed}: {d:e}");
    }
}

#[test]
fn shifted_targets_and_third_z_level() {
    // nonzero x2ᶜ switches on every published term; n_z = 2 exercises the n_z(n_z−1) ones
    let vdp = VanDerPol {
        epsilon: 0.7,
        b22: 0.8,
        r22: 0.5,
        centers: [0.8, 0.3],
        widths: [0.6, 0.4],
        ..VanDerPol::default()
    };
    let (ode, lambda) = compiled(&vdp, &[20, 20, 3]);
    for seed in 0..10 {
        let p = random_tensor(ode.lattice(), 500 + seed, 0.0);
        let expected = vdp_rhs(&vdp, lambda, &p);
        let d = ode.apply(&p).max_abs_diff(&expected);
        let scale = expected.nonzeros().iter().fold(1.0f64, |m, &(_, v)| m.max(v.abs()));
        assert!(d < 1e-12 * scale, "seed {seed}: {d:e}");
    }
}

#[test]
fn stencil_offsets_are_the_published_ones() {
    // source offsets (deriv − raise) that appear in the hand-written equations
    let vdp = VanDerPol {
        centers: [0.8, 0.3],
        ..VanDerPol::default()
    };
    let (ode, _) = compiled(&vdp, &[60, 60, 3]);
    let allowed: Vec<[i64; 3]> = vec![
        [0, -2, 0],
        [0, -1, 0],
        [0, 0, 0],
        [-2, 0, 0],
        [-1, 0, 0],
        [1, -1, 0],
        [-1, 1, 0],
        [-2, -2, 0],
        [-2, -1, 0],
        [-1, -1, 0],
        [0, 2, 0],
        [0, 1, 0],
    ];
    for e in ode.entries() {
        let off = e.offset();
        assert!(allowed.contains(&[off[0], off[1], off[2]]), "unexpected offset {off:?}");
    }
    assert!(ode.conserves_nz());
}

#[test]
fn non_default_lambda_is_used() {
    let vdp = VanDerPol {
        r22: 1.0,
        ..VanDerPol::default()
    };
    let p = vdp.control_problem().unwrap();
    assert_eq!(p.lambda(), 1.0);
    let (ode, lambda) = compiled(&vdp, &[12, 12, 2]);
    let t = random_tensor(ode.lattice(), 3, 0.0);
    assert!(ode.apply(&t).max_abs_diff(&vdp_rhs(&vdp, lambda, &t)) < 1e-12);
}
