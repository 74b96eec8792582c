//! Polynomial differential operators on the extended state `(x, z)`.
//!
//! A [`PolyOperator`] is a finite sum of terms `c · x^α · z^γ · ∂^β`, where
//! `β` ranges over all `N + 1` extended coordinates. Terms are stored in a
//! `BTreeMap` keyed by `(derivative orders, x powers, z power)` so the term
//! list is canonical: no duplicate keys and no zero coefficients, in
//! lexicographic order.

use std::collections::BTreeMap;
use std::fmt;

use crate::poly::{falling_factorial, Exponents, Polynomial};

/// Key of one operator term. Field order defines the canonical ordering.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    /// Derivative orders over `(x_1, …, x_N, z)`.
    pub deriv: Exponents,
    /// Powers of `x_1, …, x_N` in the coefficient monomial.
    pub x_pow: Exponents,
    /// Power of `z` in the coefficient monomial.
    pub z_pow: u32,
}

impl TermKey {
    /// Coefficient monomial as an exponent vector over `(x, z)`.
    pub fn monomial(&self) -> Exponents {
        let mut e = self.x_pow.clone();
        e.push(self.z_pow);
        e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyOperator {
    nx: usize,
    terms: BTreeMap<TermKey, f64>,
}

impl PolyOperator {
    /// The zero operator over `nx` state variables plus `z`.
    pub fn zero(nx: usize) -> Self {
        Self {
            nx,
            terms: BTreeMap::new(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, f64)> {
        self.terms.iter().map(|(k, &c)| (k, c))
    }

    pub fn coeff(&self, key: &TermKey) -> f64 {
        self.terms.get(key).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, coeff: f64, x_pow: Exponents, z_pow: u32, deriv: Exponents) {
        assert_eq!(x_pow.len(), self.nx);
        assert_eq!(deriv.len(), self.nx + 1);
        if coeff == 0.0 {
            return;
        }
        let key = TermKey { deriv, x_pow, z_pow };
        let sum = self.terms.get(&key).copied().unwrap_or(0.0) + coeff;
        if sum == 0.0 {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, sum);
        }
    }

    /// Adds `coeff(x, z) · ∂^deriv`, expanding the polynomial coefficient
    /// into individual terms.
    pub fn add_scaled_derivative(&mut self, coeff: &Polynomial, deriv: Exponents) {
        assert_eq!(coeff.nvars(), self.nx + 1);
        for (e, c) in coeff.terms() {
            self.add_term(c, e[..self.nx].to_vec(), e[self.nx], deriv.clone());
        }
    }

    /// Multiplication operator `f ↦ coeff · f`.
    pub fn multiplication(coeff: &Polynomial) -> Self {
        let nx = coeff.nvars() - 1;
        let mut op = Self::zero(nx);
        op.add_scaled_derivative(coeff, vec![0; nx + 1]);
        op
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nx, other.nx);
        let mut out = self.clone();
        for (k, &c) in &other.terms {
            out.add_term(c, k.x_pow.clone(), k.z_pow, k.deriv.clone());
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nx);
        for (k, &c) in &self.terms {
            out.add_term(c * s, k.x_pow.clone(), k.z_pow, k.deriv.clone());
        }
        out
    }

    /// Left-multiplies every coefficient by the monomial `x^α z^γ`.
    pub fn premultiply_monomial(&self, x_pow: &[u32], z_pow: u32) -> Self {
        let mut out = Self::zero(self.nx);
        for (k, &c) in &self.terms {
            let xp = k.x_pow.iter().zip(x_pow).map(|(a, b)| a + b).collect();
            out.add_term(c, xp, k.z_pow + z_pow, k.deriv.clone());
        }
        out
    }

    /// Coefficient polynomial of the `∂^deriv` component.
    pub fn coefficient_of(&self, deriv: &[u32]) -> Polynomial {
        let mut p = Polynomial::zero(self.nx + 1);
        for (k, &c) in &self.terms {
            if k.deriv == deriv {
                p.add_term(k.monomial(), c);
            }
        }
        p
    }

    /// Exact action on a polynomial over `(x, z)`.
    pub fn apply(&self, f: &Polynomial) -> Polynomial {
        apply_operator(self, f)
    }
}

/// Applies `op` to `f` term by term: `c x^α z^γ ∂^β` sends `x^m` to
/// `c · (m)_β · x^(m − β + α)` with `(m)_β` the falling factorial.
pub fn apply_operator(op: &PolyOperator, f: &Polynomial) -> Polynomial {
    let nv = op.nx + 1;
    assert_eq!(f.nvars(), nv, "operand must be a polynomial over (x, z)");
    let mut out = Polynomial::zero(nv);
    for (key, c) in op.terms() {
        let mono = key.monomial();
        for (e, fc) in f.terms() {
            if e.iter().zip(&key.deriv).any(|(&m, &b)| b > m) {
                continue;
            }
            let factor: f64 = e
                .iter()
                .zip(&key.deriv)
                .map(|(&m, &b)| falling_factorial(m, b))
                .product();
            let target: Exponents = e
                .iter()
                .zip(&key.deriv)
                .zip(&mono)
                .map(|((&m, &b), &a)| m - b + a)
                .collect();
            out.add_term(target, c * fc * factor);
        }
    }
    out
}

impl fmt::Display for PolyOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let name = |i: usize| {
            if i == self.nx {
                "z".to_string()
            } else {
                format!("x{}", i + 1)
            }
        };
        for (n, (k, &c)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (i, &p) in k.monomial().iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*{}", name(i))?,
                    _ => write!(f, "*{}^{}", name(i), p)?,
                }
            }
            for (i, &d) in k.deriv.iter().enumerate() {
                match d {
                    0 => {}
                    1 => write!(f, "*d{}", name(i))?,
                    _ => write!(f, "*d{}^{}", name(i), d)?,
                }
            }
        }
        Ok(())
    }
}
