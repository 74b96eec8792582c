use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// Lattices with at most this many points are stored densely.
pub const DENSE_LIMIT: usize = 10_000;

/// Truncated index set `0 ≤ n_a < cutoff_a` over `(n_1, …, n_N, n_z)`,
/// flattened row-major with `n_z` varying fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    cutoffs: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    /// `cutoffs` lists the `x` axes followed by the `z` axis.
    pub fn new(cutoffs: Vec<usize>) -> Result<Self> {
        if cutoffs.len() < 2 || cutoffs.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "cutoffs must name at least one x axis and the z axis, all positive: {cutoffs:?}"
            )));
        }
        let mut strides = vec![1; cutoffs.len()];
        for a in (0..cutoffs.len() - 1).rev() {
            strides[a] = strides[a + 1] * cutoffs[a + 1];
        }
        let len = strides[0] * cutoffs[0];
        Ok(Self {
            cutoffs,
            strides,
            len,
        })
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    /// Number of `x` axes.
    pub fn nx(&self) -> usize {
        self.cutoffs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn contains(&self, index: &[i64]) -> bool {
        index
            .iter()
            .zip(&self.cutoffs)
            .all(|(&n, &c)| n >= 0 && (n as usize) < c)
    }

    pub fn linear(&self, index: &[u32]) -> Option<usize> {
        let mut lin = 0;
        for ((&n, &c), &s) in index.iter().zip(&self.cutoffs).zip(&self.strides) {
            if n as usize >= c {
                return None;
            }
            lin += n as usize * s;
        }
        Some(lin)
    }

    pub fn multi(&self, mut lin: usize) -> Vec<u32> {
        let mut out = vec![0; self.cutoffs.len()];
        for (o, &s) in out.iter_mut().zip(&self.strides) {
            *o = (lin / s) as u32;
            lin %= s;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Storage {
    Dense(Vec<f64>),
    Sparse(BTreeMap<usize, f64>),
}

/// Coefficients `P(n_1, …, n_N, n_z, t)` of the expansion
/// `ψ'(x, z, t) = Σ P x_1^{n_1} ⋯ x_N^{n_N} z^{n_z}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTensor {
    lattice: Lattice,
    pub(crate) storage: Storage,
    time: f64,
}

impl CoeffTensor {
    pub fn zeros(lattice: Lattice, time: f64) -> Self {
        let storage = if lattice.len() <= DENSE_LIMIT {
            Storage::Dense(vec![0.0; lattice.len()])
        } else {
            Storage::Sparse(BTreeMap::new())
        };
        Self {
            lattice,
            storage,
            time,
        }
    }

    /// Like [`zeros`](Self::zeros) but always hash-indexed.
    pub fn zeros_sparse(lattice: Lattice, time: f64) -> Self {
        Self {
            lattice,
            storage: Storage::Sparse(BTreeMap::new()),
            time,
        }
    }

    /// Terminal condition `P = δ_{n,0} δ_{n_z,1}`, i.e. `ψ' = z`.
    pub fn terminal(lattice: Lattice, t_final: f64) -> Result<Self> {
        let nz_cut = *lattice.cutoffs().last().unwrap();
        if nz_cut < 2 {
            return Err(Error::CutoffTooSmall {
                axis: lattice.nx(),
                offset: 1,
                cutoff: nz_cut,
            });
        }
        let mut t = Self::zeros(lattice, t_final);
        let mut idx = vec![0; t.lattice.nx() + 1];
        idx[t.lattice.nx()] = 1;
        t.set(&idx, 1.0);
        Ok(t)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Same values, hash-indexed storage.
    pub fn to_sparse(&self) -> Self {
        let mut out = Self::zeros_sparse(self.lattice.clone(), self.time);
        for (lin, v) in self.nonzeros() {
            out.set_linear(lin, v);
        }
        out
    }

    pub fn get(&self, index: &[u32]) -> f64 {
        match self.lattice.linear(index) {
            Some(lin) => self.get_linear(lin),
            None => 0.0,
        }
    }

    pub(crate) fn get_linear(&self, lin: usize) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[lin],
            Storage::Sparse(m) => m.get(&lin).copied().unwrap_or(0.0),
        }
    }

    /// Panics if `index` is outside the cutoffs.
    pub fn set(&mut self, index: &[u32], value: f64) {
        let lin = self
            .lattice
            .linear(index)
            .unwrap_or_else(|| panic!("index {index:?} outside cutoffs {:?}", self.lattice.cutoffs()));
        self.set_linear(lin, value);
    }

    pub(crate) fn set_linear(&mut self, lin: usize, value: f64) {
        match &mut self.storage {
            Storage::Dense(v) => v[lin] = value,
            Storage::Sparse(m) => {
                if value == 0.0 {
                    m.remove(&lin);
                } else {
                    m.insert(lin, value);
                }
            }
        }
    }

    /// Nonzero entries as `(linear index, value)` in lexicographic order.
    pub fn nonzeros(&self) -> Vec<(usize, f64)> {
        match &self.storage {
            Storage::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(i, &x)| (i, x))
                .collect(),
            Storage::Sparse(m) => m.iter().map(|(&i, &x)| (i, x)).collect(),
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.lattice, other.lattice);
        match (&mut self.storage, &other.storage) {
            (Storage::Dense(x), Storage::Dense(y)) => {
                for (xi, yi) in x.iter_mut().zip(y) {
                    *xi += a * yi;
                }
            }
            _ => {
                for (lin, v) in other.nonzeros() {
                    let cur = self.get_linear(lin);
                    self.set_linear(lin, cur + a * v);
                }
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = Self::zeros(self.lattice.clone(), self.time);
        if !self.is_dense() {
            out = Self::zeros_sparse(self.lattice.clone(), self.time);
        }
        out.axpy(a, self);
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d.nonzeros().iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        match &self.storage {
            Storage::Dense(v) => v.iter().all(|x| x.is_finite()),
            Storage::Sparse(m) => m.values().all(|x| x.is_finite()),
        }
    }

    /// Writes `n1,…,nN,nz,value` rows for every nonzero coefficient, in
    /// lexicographic index order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let nx = self.lattice.nx();
        let header: Vec<String> = (1..=nx)
            .map(|i| format!("n{i}"))
            .chain(["nz".to_string(), "value".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (lin, v) in self.nonzeros() {
            let idx = self.lattice.multi(lin);
            for n in &idx {
                write!(w, "{n},")?;
            }
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv). Lines
    /// starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(r: R, lattice: Lattice, time: f64) -> Result<Self> {
        let mut out = Self::zeros(lattice, time);
        let width = out.lattice.cutoffs().len() + 1;
        let mut seen_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidArgument(format!("line {}: malformed row {line:?}", lineno + 1));
            if fields.len() != width {
                return Err(bad());
            }
            let idx: Vec<u32> = fields[..width - 1]
                .iter()
                .map(|s| s.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            let v: f64 = fields[width - 1].trim().parse().map_err(|_| bad())?;
            let lin = out.lattice.linear(&idx).ok_or_else(bad)?;
            out.set_linear(lin, v);
        }
        Ok(out)
    }
}
