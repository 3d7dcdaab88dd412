//! Dense-enough bivariate real polynomials for the oscillator plane.
//!
//! Level functions and the two rows of a real oscillator are polynomials in
//! (w1, w2); degrees stay small (<= L + k), so a plain ordered map keyed by
//! the exponent pair is all we need.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiPoly {
    terms: BTreeMap<(u32, u32), f64>,
}

impl BiPoly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ((u32, u32), f64)>) -> Self {
        let mut p = BiPoly::new();
        for ((a, b), c) in terms {
            p.add_term(a, b, c);
        }
        p
    }

    pub fn add_term(&mut self, e1: u32, e2: u32, c: f64) {
        let entry = self.terms.entry((e1, e2)).or_insert(0.0);
        *entry += c;
        if entry.abs() <= 1e-300 {
            self.terms.remove(&(e1, e2));
        }
    }

    pub fn coeff(&self, e1: u32, e2: u32) -> f64 {
        self.terms.get(&(e1, e2)).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &f64)> {
        self.terms.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|(a, b)| a + b).max().unwrap_or(0)
    }

    pub fn eval(&self, w1: f64, w2: f64) -> f64 {
        let mut acc = 0.0;
        for (&(a, b), &c) in &self.terms {
            acc += c * w1.powi(a as i32) * w2.powi(b as i32);
        }
        acc
    }

    pub fn scale(&self, s: f64) -> BiPoly {
        BiPoly {
            terms: self.terms.iter().map(|(&k, &c)| (k, c * s)).collect(),
        }
    }

    pub fn add(&self, other: &BiPoly) -> BiPoly {
        let mut out = self.clone();
        for (&(a, b), &c) in &other.terms {
            out.add_term(a, b, c);
        }
        out
    }

    pub fn mul(&self, other: &BiPoly) -> BiPoly {
        let mut out = BiPoly::new();
        for (&(a1, b1), &c1) in &self.terms {
            for (&(a2, b2), &c2) in &other.terms {
                out.add_term(a1 + a2, b1 + b2, c1 * c2);
            }
        }
        out
    }

    pub fn d_dw1(&self) -> BiPoly {
        let mut out = BiPoly::new();
        for (&(a, b), &c) in &self.terms {
            if a > 0 {
                out.add_term(a - 1, b, c * a as f64);
            }
        }
        out
    }

    pub fn d_dw2(&self) -> BiPoly {
        let mut out = BiPoly::new();
        for (&(a, b), &c) in &self.terms {
            if b > 0 {
                out.add_term(a, b - 1, c * b as f64);
            }
        }
        out
    }

    /// Keep only terms of exact total degree `d`.
    pub fn homogeneous_part(&self, d: u32) -> BiPoly {
        BiPoly {
            terms: self
                .terms
                .iter()
                .filter(|(&(a, b), _)| a + b == d)
                .map(|(&k, &c)| (k, c))
                .collect(),
        }
    }

    /// Keep terms with total degree <= `d`.
    pub fn truncate(&self, d: u32) -> BiPoly {
        BiPoly {
            terms: self
                .terms
                .iter()
                .filter(|(&(a, b), _)| a + b <= d)
                .map(|(&k, &c)| (k, c))
                .collect(),
        }
    }

    /// Lie derivative along a planar field: dP/dw1 * f1 + dP/dw2 * f2.
    pub fn lie_derivative(&self, f1: &BiPoly, f2: &BiPoly) -> BiPoly {
        self.d_dw1().mul(f1).add(&self.d_dw2().mul(f2))
    }

    /// Drop coefficients with |c| <= tol.
    pub fn pruned(&self, tol: f64) -> BiPoly {
        BiPoly {
            terms: self
                .terms
                .iter()
                .filter(|(_, &c)| c.abs() > tol)
                .map(|(&k, &c)| (k, c))
                .collect(),
        }
    }
}

impl fmt::Display for BiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(a, b), &c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c:e}")?;
            if a > 0 {
                write!(f, "*w1^{a}")?;
            }
            if b > 0 {
                write!(f, "*w2^{b}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivatives() {
        // p = w1^2/2 + 3 w2^3
        let p = BiPoly::from_terms([((2, 0), 0.5), ((0, 3), 3.0)]);
        assert_eq!(p.eval(2.0, 1.0), 5.0);
        assert_eq!(p.d_dw1().eval(2.0, 1.0), 2.0);
        assert_eq!(p.d_dw2().eval(2.0, 1.0), 9.0);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn lie_derivative_product_rule() {
        let p = BiPoly::from_terms([((1, 1), 1.0)]);
        let f1 = BiPoly::from_terms([((1, 0), -1.0)]);
        let f2 = BiPoly::from_terms([((0, 1), -2.0)]);
        // d/dt (w1 w2) = -w1 w2 - 2 w1 w2 = -3 w1 w2
        let ld = p.lie_derivative(&f1, &f2);
        assert_eq!(ld.coeff(1, 1), -3.0);
    }
}
