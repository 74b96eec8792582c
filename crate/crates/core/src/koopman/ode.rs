//! Translation of a polynomial operator into coupled coefficient ODEs.
//!
//! With `ψ' = Σ P(n) x^n z^{n_z}`, a term `c x^α z^γ ∂^β` sends the basis
//! monomial with index `m` to `c (m)_β` times the monomial with index
//! `m − β + α` (`(m)_β` is the componentwise falling factorial). Reading the
//! result off at index `n` gives the shift rule
//!
//! ```text
//! (term · ψ')[n] = c · (n − α + β)_β · P(n − α + β)
//! ```
//!
//! e.g. `x → P(n−1)`, `∂ → (n+1) P(n+1)`, `x² ∂² → n(n−1) P(n)`.
//!
//! The compiled map is the right-hand side of `dP/ds = (L' + g) P`, where
//! `s = t_f − t` is the time remaining to the horizon. Coefficients whose
//! source index lies beyond the cutoffs are treated as zero.

use crate::error::{Error, Result};
use crate::operator::PolyOperator;
use crate::poly::{falling_factorial, Exponents};

use super::tensor::{CoeffTensor, Lattice, Storage};

/// One operator term in stencil form. Source index = target − raise + deriv.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilEntry {
    pub coeff: f64,
    /// `(α, γ)`: coefficient monomial powers over `(x, z)`.
    pub raise: Exponents,
    /// `β`: derivative orders over `(x, z)`.
    pub deriv: Exponents,
}

impl StencilEntry {
    /// Source offset `deriv − raise` per axis.
    pub fn offset(&self) -> Vec<i64> {
        self.deriv
            .iter()
            .zip(&self.raise)
            .map(|(&d, &r)| i64::from(d) - i64::from(r))
            .collect()
    }

    /// Weight multiplying `P(source)`.
    pub fn weight(&self, source: &[u32]) -> f64 {
        self.coeff
            * source
                .iter()
                .zip(&self.deriv)
                .map(|(&m, &b)| falling_factorial(m, b))
                .product::<f64>()
    }
}

/// Row-compressed form of the map on a dense lattice.
#[derive(Clone, Debug)]
struct Csr {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (row, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_start[row], self.row_start[row + 1]);
            *out = self.cols[a..b]
                .iter()
                .zip(&self.vals[a..b])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }
}

/// Linear map `P ↦ dP/ds` on a truncated lattice.
#[derive(Clone, Debug)]
pub struct CoeffOde {
    lattice: Lattice,
    entries: Vec<StencilEntry>,
    csr: Option<Csr>,
}

/// Compiles `generator + g_term` into stencil form over the given cutoffs
/// (`x` axes followed by `z`).
pub fn compile(generator: &PolyOperator, g_term: &PolyOperator, cutoffs: &[usize]) -> Result<CoeffOde> {
    let lattice = Lattice::new(cutoffs.to_vec())?;
    if generator.nx() != lattice.nx() || g_term.nx() != lattice.nx() {
        return Err(Error::InvalidArgument(format!(
            "operator has {} state variables but cutoffs describe {}",
            generator.nx(),
            lattice.nx()
        )));
    }
    let total = generator.add(g_term);
    let mut entries = Vec::with_capacity(total.len());
    for (key, c) in total.terms() {
        let entry = StencilEntry {
            coeff: c,
            raise: key.monomial(),
            deriv: key.deriv.clone(),
        };
        for (axis, (&off, &cut)) in entry.offset().iter().zip(lattice.cutoffs()).enumerate() {
            if off.unsigned_abs() as usize >= cut {
                return Err(Error::CutoffTooSmall {
                    axis,
                    offset: off.unsigned_abs() as usize,
                    cutoff: cut,
                });
            }
        }
        entries.push(entry);
    }
    Ok(CoeffOde::from_entries(lattice, entries))
}

impl CoeffOde {
    pub fn from_entries(lattice: Lattice, entries: Vec<StencilEntry>) -> Self {
        let mut ode = Self {
            lattice,
            entries,
            csr: None,
        };
        if ode.lattice.len() <= super::tensor::DENSE_LIMIT {
            ode.csr = Some(ode.build_csr());
        }
        ode
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn entries(&self) -> &[StencilEntry] {
        &self.entries
    }

    /// `true` when no entry moves coefficients between `n_z` levels.
    pub fn conserves_nz(&self) -> bool {
        let z = self.lattice.nx();
        self.entries.iter().all(|e| e.offset()[z] == 0)
    }

    fn build_csr(&self) -> Csr {
        let dims = self.lattice.cutoffs().len();
        let mut row_start = Vec::with_capacity(self.lattice.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut source = vec![0i64; dims];
        let mut src_u = vec![0u32; dims];
        row_start.push(0);
        for target in 0..self.lattice.len() {
            let t = self.lattice.multi(target);
            for e in &self.entries {
                for a in 0..dims {
                    source[a] = i64::from(t[a]) - i64::from(e.raise[a]) + i64::from(e.deriv[a]);
                }
                if !self.lattice.contains(&source) {
                    continue;
                }
                for a in 0..dims {
                    src_u[a] = source[a] as u32;
                }
                let w = e.weight(&src_u);
                if w != 0.0 {
                    cols.push(self.lattice.linear(&src_u).unwrap());
                    vals.push(w);
                }
            }
            row_start.push(cols.len());
        }
        Csr {
            row_start,
            cols,
            vals,
        }
    }

    /// `dP/ds` for the given coefficients.
    pub fn apply(&self, p: &CoeffTensor) -> CoeffTensor {
        assert_eq!(p.lattice(), &self.lattice, "tensor and ODE lattices differ");
        match (&p.storage, &self.csr) {
            (Storage::Dense(x), Some(csr)) => {
                let mut out = CoeffTensor::zeros(self.lattice.clone(), p.time());
                if let Storage::Dense(y) = &mut out.storage {
                    csr.apply(x, y);
                }
                out
            }
            _ => self.apply_scatter(p),
        }
    }

    pub(crate) fn apply_dense_into(&self, x: &[f64], y: &mut [f64]) {
        self.csr
            .as_ref()
            .expect("dense application needs a dense lattice")
            .apply(x, y);
    }

    pub(crate) fn has_dense_form(&self) -> bool {
        self.csr.is_some()
    }

    /// Source-driven application over the nonzero coefficients only.
    fn apply_scatter(&self, p: &CoeffTensor) -> CoeffTensor {
        let dims = self.lattice.cutoffs().len();
        let mut out = if p.is_dense() {
            CoeffTensor::zeros(self.lattice.clone(), p.time())
        } else {
            CoeffTensor::zeros_sparse(self.lattice.clone(), p.time())
        };
        let mut target = vec![0i64; dims];
        let mut t_u = vec![0u32; dims];
        for (lin, v) in p.nonzeros() {
            let m = self.lattice.multi(lin);
            for e in &self.entries {
                let w = e.weight(&m);
                if w == 0.0 {
                    continue;
                }
                for a in 0..dims {
                    target[a] = i64::from(m[a]) - i64::from(e.deriv[a]) + i64::from(e.raise[a]);
                }
                if !self.lattice.contains(&target) {
                    continue;
                }
                for a in 0..dims {
                    t_u[a] = target[a] as u32;
                }
                let tl = self.lattice.linear(&t_u).unwrap();
                let cur = out.get_linear(tl);
                out.set_linear(tl, cur + w * v);
            }
        }
        out
    }
}
