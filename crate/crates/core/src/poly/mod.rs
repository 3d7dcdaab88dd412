//! Sparse multivariate polynomial vector fields.
//!
//! A field of dimension `n` with truncation order `k` stores, per row, a map
//! from monomials to coefficients. Monomials are kept as sorted variable
//! lists with repetition (`z1^2 z3` is `[0, 0, 2]`), ordered by total degree
//! first and variable sequence second, so iteration order is canonical and
//! all operations are deterministic.

mod bivariate;
mod transform;

pub use bivariate::BiPoly;
pub use transform::{compose_map, substitute_linear, PolyMap};

use crate::error::{NmdError, Result};
use crate::scalar::Scalar;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Coefficients with modulus at or below this are dropped after every
/// algebraic operation; prevents fill-in from numerically-zero terms.
pub const COEFF_DROP_TOL: f64 = 1e-14;

/// A monomial as a sorted (ascending) list of variable indices with
/// repetition. The empty list is the constant monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial(pub Vec<u16>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: usize) -> Self {
        Monomial(vec![v as u16])
    }

    pub fn from_vars(mut vars: Vec<u16>) -> Self {
        vars.sort_unstable();
        Monomial(vars)
    }

    /// Build from a dense exponent multi-index.
    pub fn from_exponents(exps: &[usize]) -> Self {
        let mut vars = Vec::new();
        for (v, &e) in exps.iter().enumerate() {
            for _ in 0..e {
                vars.push(v as u16);
            }
        }
        Monomial(vars)
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn exponent_of(&self, v: usize) -> usize {
        self.0.iter().filter(|&&x| x as usize == v).count()
    }

    /// Exponents as a dense vector of length `n`.
    pub fn exponents(&self, n: usize) -> Vec<usize> {
        let mut e = vec![0usize; n];
        for &v in &self.0 {
            e[v as usize] += 1;
        }
        e
    }

    /// Product of two monomials.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut vars = Vec::with_capacity(self.0.len() + other.0.len());
        vars.extend_from_slice(&self.0);
        vars.extend_from_slice(&other.0);
        vars.sort_unstable();
        Monomial(vars)
    }

    /// True if every variable of the monomial lies in `set`.
    pub fn supported_on(&self, set: &[bool]) -> bool {
        self.0.iter().all(|&v| set[v as usize])
    }

    /// True if any variable of the monomial lies in `set`.
    pub fn touches(&self, set: &[bool]) -> bool {
        self.0.iter().any(|&v| set[v as usize])
    }

    /// Swap variables within each conjugate pair: 2i <-> 2i+1.
    pub fn conj_swap(&self) -> Monomial {
        let mut vars: Vec<u16> = self.0.iter().map(|&v| v ^ 1).collect();
        vars.sort_unstable();
        Monomial(vars)
    }

    /// Remap variable indices; entries must stay in range.
    pub fn remap(&self, map: &[u16]) -> Monomial {
        let mut vars: Vec<u16> = self.0.iter().map(|&v| map[v as usize]).collect();
        vars.sort_unstable();
        Monomial(vars)
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// One row of a field: monomial -> coefficient.
pub type PolyRow<S> = BTreeMap<Monomial, S>;

/// Truncated polynomial vector field: `n` rows of polynomials in `n`
/// variables, all terms of degree <= `max_degree`, no constant terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyVectorField<S: Scalar> {
    nvars: usize,
    max_degree: usize,
    rows: Vec<PolyRow<S>>,
}

pub(crate) fn drop_tol<S: Scalar>() -> S::Real {
    S::Real::from_f64(COEFF_DROP_TOL).unwrap()
}

impl<S: Scalar> PolyVectorField<S> {
    pub fn zero(nvars: usize, max_degree: usize) -> Self {
        PolyVectorField {
            nvars,
            max_degree,
            rows: vec![BTreeMap::new(); nvars],
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn rows(&self) -> &[PolyRow<S>] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &PolyRow<S> {
        &self.rows[r]
    }

    /// Add `coeff` onto the monomial's entry in row `r`. Terms above the
    /// truncation order are ignored; entries falling below the drop
    /// threshold are removed.
    pub fn add_term(&mut self, r: usize, m: Monomial, coeff: S) {
        if m.degree() > self.max_degree || m.degree() == 0 {
            return;
        }
        debug_assert!(m.0.iter().all(|&v| (v as usize) < self.nvars));
        let row = &mut self.rows[r];
        match row.get_mut(&m) {
            Some(c) => {
                *c += coeff;
                if c.mag() <= drop_tol::<S>() {
                    row.remove(&m);
                }
            }
            None => {
                if coeff.mag() > drop_tol::<S>() {
                    row.insert(m, coeff);
                }
            }
        }
    }

    /// Overwrite the monomial's coefficient in row `r`.
    pub fn set_term(&mut self, r: usize, m: Monomial, coeff: S) {
        if m.degree() > self.max_degree || m.degree() == 0 {
            return;
        }
        if coeff.mag() <= drop_tol::<S>() {
            self.rows[r].remove(&m);
        } else {
            self.rows[r].insert(m, coeff);
        }
    }

    pub fn coeff(&self, r: usize, m: &Monomial) -> S {
        self.rows[r].get(m).copied().unwrap_or_else(S::zero)
    }

    /// Remove terms with |coeff| <= drop tolerance.
    pub fn prune(&mut self) {
        let tol = drop_tol::<S>();
        for row in &mut self.rows {
            row.retain(|_, c| c.mag() > tol);
        }
    }

    /// Keep only terms where `pred(row, monomial)` holds.
    pub fn retain_terms<F: Fn(usize, &Monomial) -> bool>(&mut self, pred: F) {
        for (r, row) in self.rows.iter_mut().enumerate() {
            row.retain(|m, _| pred(r, m));
        }
    }

    /// Evaluate at `x` by direct monomial accumulation in canonical order.
    pub fn evaluate(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.nvars {
            return Err(NmdError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
                context: "PolyVectorField::evaluate",
            });
        }
        let mut out = vec![S::zero(); self.nvars];
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = S::zero();
            for (m, &c) in row {
                let mut term = c;
                for &v in &m.0 {
                    term *= x[v as usize];
                }
                acc += term;
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// Drop all terms of degree > `k_new`.
    pub fn truncate(&self, k_new: usize) -> Result<Self> {
        if k_new > self.max_degree {
            return Err(NmdError::BadOrder {
                got: k_new,
                need: "k' <= k",
            });
        }
        let mut out = self.clone();
        out.max_degree = k_new;
        for row in &mut out.rows {
            row.retain(|m, _| m.degree() <= k_new);
        }
        Ok(out)
    }

    /// Number of stored terms per degree, summed over rows.
    pub fn degree_census(&self) -> Vec<usize> {
        let mut census = vec![0usize; self.max_degree + 1];
        for row in &self.rows {
            for m in row.keys() {
                census[m.degree()] += 1;
            }
        }
        census
    }

    pub fn term_count(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    /// Linear part as a dense matrix.
    pub fn linear_matrix(&self) -> Vec<Vec<S>> {
        let mut a = vec![vec![S::zero(); self.nvars]; self.nvars];
        for (r, row) in self.rows.iter().enumerate() {
            for (m, &c) in row {
                if m.degree() == 1 {
                    a[r][m.0[0] as usize] = c;
                }
            }
        }
        a
    }

    /// Max modulus over all coefficients selected by `pred`.
    pub fn max_coeff_where<F: Fn(usize, &Monomial) -> bool>(&self, pred: F) -> f64 {
        let mut best = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            for (m, c) in row {
                if pred(r, m) {
                    let v = c.mag().to_f64().unwrap_or(f64::INFINITY);
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        best
    }

    /// Debug dump: one line per term, "row, exponents, coefficient", rows and
    /// monomials in canonical order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (r, row) in self.rows.iter().enumerate() {
            for (m, c) in row {
                let exps = m.exponents(self.nvars);
                let estr: Vec<String> = exps.iter().map(|e| e.to_string()).collect();
                let _ = writeln!(s, "{}, [{}], {}", r, estr.join(" "), c);
            }
        }
        s
    }

    /// Map coefficients into another scalar type.
    pub fn map_coeffs<T: Scalar, F: Fn(S) -> T>(&self, f: F) -> PolyVectorField<T> {
        let mut out = PolyVectorField::zero(self.nvars, self.max_degree);
        for (r, row) in self.rows.iter().enumerate() {
            for (m, &c) in row {
                out.set_term(r, m.clone(), f(c));
            }
        }
        out
    }
}

impl<S: Scalar> PolyVectorField<S> {
    /// Check the conjugate-pairing invariant for a field whose variables and
    /// rows come in conjugate pairs: row 2i+1 at the pair-swapped monomial
    /// must be the conjugate of row 2i. Returns the worst violation.
    pub fn conjugate_pairing_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        let npairs = self.nvars / 2;
        for p in 0..npairs {
            let (even, odd) = (2 * p, 2 * p + 1);
            for (m, &c) in &self.rows[even] {
                let mate = self.coeff(odd, &m.conj_swap());
                let diff = (mate - c.conjugate()).mag().to_f64().unwrap_or(f64::INFINITY);
                worst = worst.max(diff);
            }
            for (m, &c) in &self.rows[odd] {
                let mate = self.coeff(even, &m.conj_swap());
                let diff = (mate - c.conjugate()).mag().to_f64().unwrap_or(f64::INFINITY);
                worst = worst.max(diff);
            }
        }
        worst
    }

    /// Enforce exact conjugate pairing by mirroring even rows onto odd rows.
    pub fn enforce_conjugate_pairing(&mut self) {
        let npairs = self.nvars / 2;
        for p in 0..npairs {
            let even = 2 * p;
            let mirrored: PolyRow<S> = self.rows[even]
                .iter()
                .map(|(m, c)| (m.conj_swap(), c.conjugate()))
                .collect();
            self.rows[2 * p + 1] = mirrored;
        }
    }
}
