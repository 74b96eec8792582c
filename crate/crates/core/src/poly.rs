//! Sparse multivariate polynomials with real coefficients.
//!
//! A [`Polynomial`] over `n` variables is a map from exponent vectors to
//! coefficients. Terms are kept in a `BTreeMap`, so iteration order is the
//! lexicographic order of the exponent vectors and every operation is
//! deterministic. Zero coefficients are never stored.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Exponent vector of a monomial, one entry per variable.
pub type Exponents = Vec<u32>;

/// Falling factorial `m (m-1) ... (m-k+1)`; zero when `k > m`.
pub fn falling_factorial(m: u32, k: u32) -> f64 {
    if k > m {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, j| acc * f64::from(m - j))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The polynomial `x_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        assert!(var < nvars, "variable {var} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[var] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(exponents: Exponents, coeff: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, coeff);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Exponents, f64)>>(nvars: usize, terms: I) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    /// `Σ_i (x_i − centers_i)² / (2 widths_i²)`; the diagonal quadratic form
    /// used for the terminal and running costs.
    pub fn diagonal_quadratic(centers: &[f64], widths: &[f64]) -> Self {
        assert_eq!(centers.len(), widths.len());
        let n = centers.len();
        let mut p = Self::zero(n);
        for (i, (&c, &w)) in centers.iter().zip(widths).enumerate() {
            let k = 1.0 / (2.0 * w * w);
            let mut e2 = vec![0; n];
            e2[i] = 2;
            let mut e1 = vec![0; n];
            e1[i] = 1;
            p.add_term(e2, k);
            p.add_term(e1, -2.0 * c * k);
            p.add_term(vec![0; n], c * c * k);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, exponents: Exponents, coeff: f64) {
        assert_eq!(exponents.len(), self.nvars, "exponent length mismatch");
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(exponents);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + coeff;
                if sum == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Highest power of `var` appearing in any term.
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn all_finite(&self) -> bool {
        self.terms.values().all(|c| c.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.nvars, self.terms.iter().map(|(e, &c)| (e.clone(), c * s)))
    }

    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[var] > 0 {
                let mut d = e.clone();
                d[var] -= 1;
                out.add_term(d, c * f64::from(e[var]));
            }
        }
        out
    }

    /// Repeated partial derivative `∂^orders`.
    pub fn derivative_multi(&self, orders: &[u32]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e.iter().zip(orders).any(|(&p, &k)| k > p) {
                continue;
            }
            let factor: f64 = e
                .iter()
                .zip(orders)
                .map(|(&p, &k)| falling_factorial(p, k))
                .product();
            let d: Exponents = e.iter().zip(orders).map(|(&p, &k)| p - k).collect();
            out.add_term(d, c * factor);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, &c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&p, &xi)| xi.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Embed into a space with more variables; the new variables are appended.
    pub fn extend_vars(&self, nvars: usize) -> Self {
        assert!(nvars >= self.nvars);
        Self::from_terms(
            nvars,
            self.terms.iter().map(|(e, &c)| {
                let mut ext = e.clone();
                ext.resize(nvars, 0);
                (ext, c)
            }),
        )
    }

    /// Multiply by the monomial with the given exponents.
    pub fn shift(&self, exponents: &[u32]) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms.iter().map(|(e, &c)| {
                (e.iter().zip(exponents).map(|(a, b)| a + b).collect(), c)
            }),
        )
    }

    /// Largest absolute coefficient difference; the two must share variable count.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &rhs.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl fmt::Display for Polynomial {
    /// Writes `c*x1^a*x2^b + ...`; the last variable of an extended
    /// polynomial is not special-cased, variables are always `x1..xn`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, &c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (i, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, p)?,
                }
            }
        }
        Ok(())
    }
}

/// Flat term list for repeated evaluation in inner loops.
#[derive(Clone, Debug)]
pub struct FlatPolynomial {
    nvars: usize,
    coeffs: Vec<f64>,
    exps: Vec<i32>,
}

impl FlatPolynomial {
    pub fn new(p: &Polynomial) -> Self {
        let mut coeffs = Vec::with_capacity(p.num_terms());
        let mut exps = Vec::with_capacity(p.num_terms() * p.nvars());
        for (e, c) in p.terms() {
            coeffs.push(c);
            exps.extend(e.iter().map(|&k| k as i32));
        }
        Self {
            nvars: p.nvars(),
            coeffs,
            exps,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (c, e) in self.coeffs.iter().zip(self.exps.chunks_exact(self.nvars.max(1))) {
            let mut m = *c;
            for (&k, &xi) in e.iter().zip(x) {
                if k != 0 {
                    m *= xi.powi(k);
                }
            }
            sum += m;
        }
        sum
    }
}
