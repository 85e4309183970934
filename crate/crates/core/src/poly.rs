//! Sparse real polynomials in a fixed number of variables.
//!
//! Constraints, Morse functions and Morse functions on critical submanifolds are
//! all polynomials in ambient coordinates, so gradients and Hessians are exact.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One term `coef * x_0^p_0 * ... * x_{n-1}^p_{n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    #[serde(rename = "c")]
    pub coef: f64,
    #[serde(rename = "p")]
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub nvars: usize,
    pub terms: Vec<Monomial>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolyError {
    #[error("term {index} has {got} exponents, expected {expected}")]
    Arity { index: usize, got: usize, expected: usize },
    #[error("term {index} has a non-finite coefficient")]
    NonFinite { index: usize },
}

#[inline]
fn ipow(x: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        2 => x * x,
        3 => x * x * x,
        _ => x.powi(p as i32),
    }
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: Vec::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Polynomial { nvars, terms: vec![Monomial { coef: c, powers: vec![0; nvars] }] }.normalized()
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index out of range");
        let mut powers = vec![0; nvars];
        powers[i] = 1;
        Polynomial { nvars, terms: vec![Monomial { coef: 1.0, powers }] }
    }

    pub fn from_terms(nvars: usize, terms: Vec<Monomial>) -> Result<Self, PolyError> {
        for (index, t) in terms.iter().enumerate() {
            if t.powers.len() != nvars {
                return Err(PolyError::Arity { index, got: t.powers.len(), expected: nvars });
            }
            if !t.coef.is_finite() {
                return Err(PolyError::NonFinite { index });
            }
        }
        Ok(Polynomial { nvars, terms }.normalized())
    }

    /// Merge equal monomials and drop zero coefficients; terms end up sorted by exponent.
    pub fn normalized(mut self) -> Self {
        self.terms.sort_by(|a, b| a.powers.cmp(&b.powers));
        let mut out: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            match out.last_mut() {
                Some(last) if last.powers == t.powers => last.coef += t.coef,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coef != 0.0);
        Polynomial { nvars: self.nvars, terms: out }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.powers.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|t| Monomial { coef: t.coef * s, powers: t.powers.clone() }).collect(),
        }
        .normalized()
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        let mut s = 0.0;
        for t in &self.terms {
            let mut v = t.coef;
            for (xi, &p) in x.iter().zip(&t.powers) {
                if p != 0 {
                    v *= ipow(*xi, p);
                }
            }
            s += v;
        }
        s
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let n = self.nvars;
        let mut g = DVector::zeros(n);
        for t in &self.terms {
            for i in 0..n {
                let pi = t.powers[i];
                if pi == 0 {
                    continue;
                }
                let mut v = t.coef * pi as f64 * ipow(x[i], pi - 1);
                for (j, (xj, &pj)) in x.iter().zip(&t.powers).enumerate() {
                    if j != i && pj != 0 {
                        v *= ipow(*xj, pj);
                    }
                }
                g[i] += v;
            }
        }
        g
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.nvars;
        let mut h = DMatrix::zeros(n, n);
        for t in &self.terms {
            for i in 0..n {
                for j in i..n {
                    let (pi, pj) = (t.powers[i], t.powers[j]);
                    let c = if i == j {
                        if pi < 2 {
                            continue;
                        }
                        (pi * (pi - 1)) as f64
                    } else {
                        if pi == 0 || pj == 0 {
                            continue;
                        }
                        (pi * pj) as f64
                    };
                    let mut v = t.coef * c;
                    for (l, (xl, &pl)) in x.iter().zip(&t.powers).enumerate() {
                        let e = if l == i && l == j {
                            pl - 2
                        } else if l == i || l == j {
                            pl - 1
                        } else {
                            pl
                        };
                        if e != 0 {
                            v *= ipow(*xl, e);
                        }
                    }
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().cloned());
        Polynomial { nvars: self.nvars, terms }.normalized()
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &rhs.scale(-1.0)
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
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                terms.push(Monomial {
                    coef: a.coef * b.coef,
                    powers: a.powers.iter().zip(&b.powers).map(|(p, q)| p + q).collect(),
                });
            }
        }
        Polynomial { nvars: self.nvars, terms }.normalized()
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coef)?;
            for (i, &p) in t.powers.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{p}")?,
                }
            }
        }
        Ok(())
    }
}
