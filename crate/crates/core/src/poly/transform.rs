//! Coordinate changes of polynomial vector fields: linear substitution and
//! composition with near-identity polynomial maps, everything truncated at
//! the field's order.

use super::{drop_tol, Monomial, PolyRow, PolyVectorField};
use crate::error::{NmdError, Result};
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Truncated product of two polynomials (as rows).
fn mul_rows<S: Scalar>(a: &PolyRow<S>, b: &PolyRow<S>, cap: usize) -> PolyRow<S> {
    let mut out: PolyRow<S> = BTreeMap::new();
    for (ma, &ca) in a {
        if ma.degree() > cap {
            continue;
        }
        for (mb, &cb) in b {
            if ma.degree() + mb.degree() > cap {
                continue;
            }
            let m = ma.mul(mb);
            let e = out.entry(m).or_insert_with(S::zero);
            *e += ca * cb;
        }
    }
    out.retain(|_, c| c.mag() > drop_tol::<S>());
    out
}

fn add_rows<S: Scalar>(dst: &mut PolyRow<S>, src: &PolyRow<S>, scale: S) {
    for (m, &c) in src {
        let e = dst.entry(m.clone()).or_insert_with(S::zero);
        *e += scale * c;
    }
}

/// Change variables x = T y: returns g with g(y) = T^{-1} f(T y), expanded
/// and truncated at the field's order.
pub fn substitute_linear<S: Scalar>(
    f: &PolyVectorField<S>,
    t: &DMatrix<S>,
) -> Result<PolyVectorField<S>>
where
    S: nalgebra::ComplexField,
{
    let n = f.nvars();
    if t.nrows() != n || t.ncols() != n {
        return Err(NmdError::DimensionMismatch {
            expected: n,
            got: t.nrows(),
            context: "substitute_linear",
        });
    }
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| NmdError::Singular("substitute_linear transform".into()))?;
    let cap = f.max_degree();

    // linear forms: variable v of x becomes row v of T applied to y
    let forms: Vec<PolyRow<S>> = (0..n)
        .map(|v| {
            let mut row: PolyRow<S> = BTreeMap::new();
            for w in 0..n {
                let c = t[(v, w)];
                if c.mag() > drop_tol::<S>() {
                    row.insert(Monomial::var(w), c);
                }
            }
            row
        })
        .collect();

    // cache powers of each linear form
    let mut powers: Vec<Vec<PolyRow<S>>> = vec![Vec::new(); n];
    let form_pow = |powers: &mut Vec<Vec<PolyRow<S>>>, v: usize, p: usize| -> PolyRow<S> {
        while powers[v].len() <= p {
            let next = powers[v].len();
            let row = if next == 0 {
                let mut one = BTreeMap::new();
                one.insert(Monomial::one(), S::one());
                one
            } else {
                mul_rows(&powers[v][next - 1], &forms[v], cap)
            };
            powers[v].push(row);
        }
        powers[v][p].clone()
    };

    // substituted rows of f
    let mut fsub: Vec<PolyRow<S>> = vec![BTreeMap::new(); n];
    for (r, row) in f.rows().iter().enumerate() {
        for (m, &c) in row {
            let exps = m.exponents(n);
            let mut prod: PolyRow<S> = BTreeMap::new();
            prod.insert(Monomial::one(), S::one());
            for (v, &e) in exps.iter().enumerate() {
                if e > 0 {
                    let pw = form_pow(&mut powers, v, e);
                    prod = mul_rows(&prod, &pw, cap);
                }
            }
            add_rows(&mut fsub[r], &prod, c);
        }
    }

    // left-multiply by T^{-1}
    let mut out = PolyVectorField::zero(n, cap);
    for r in 0..n {
        let mut acc: PolyRow<S> = BTreeMap::new();
        for q in 0..n {
            let w = t_inv[(r, q)];
            if w.mag() > drop_tol::<S>() {
                add_rows(&mut acc, &fsub[q], w);
            }
        }
        for (m, c) in acc {
            if m.degree() >= 1 {
                out.add_term(r, m, c);
            }
        }
    }
    out.prune();
    Ok(out)
}

/// A near-identity polynomial map `x = y + phi(y)` where every component of
/// `phi` has terms of degree >= 2 only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMap<S: Scalar> {
    nvars: usize,
    comps: Vec<PolyRow<S>>,
}

impl<S: Scalar> PolyMap<S> {
    pub fn zero(nvars: usize) -> Self {
        PolyMap {
            nvars,
            comps: vec![BTreeMap::new(); nvars],
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn comps(&self) -> &[PolyRow<S>] {
        &self.comps
    }

    pub fn add_term(&mut self, comp: usize, m: Monomial, c: S) -> Result<()> {
        if m.degree() < 2 {
            return Err(NmdError::BadOrder {
                got: m.degree(),
                need: "perturbation terms must have degree >= 2",
            });
        }
        let e = self.comps[comp].entry(m).or_insert_with(S::zero);
        *e += c;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_empty())
    }

    /// Lowest term degree present, if any.
    pub fn min_degree(&self) -> Option<usize> {
        self.comps
            .iter()
            .flat_map(|c| c.keys().map(|m| m.degree()))
            .min()
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.comps
            .iter()
            .flat_map(|c| c.keys().map(|m| m.degree()))
            .max()
    }

    pub fn max_coeff(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.values())
            .map(|c| num_traits::ToPrimitive::to_f64(&c.mag()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// Evaluate phi at a point.
    pub fn evaluate(&self, y: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.nvars];
        for (r, comp) in self.comps.iter().enumerate() {
            for (m, &c) in comp {
                let mut term = c;
                for &v in &m.0 {
                    term *= y[v as usize];
                }
                out[r] += term;
            }
        }
        out
    }

    /// Jacobian d phi / d y at a point (dense row-major).
    pub fn jacobian(&self, y: &[S]) -> Vec<Vec<S>> {
        let n = self.nvars;
        let mut j = vec![vec![S::zero(); n]; n];
        for (r, comp) in self.comps.iter().enumerate() {
            for (m, &c) in comp {
                let exps = m.exponents(n);
                for (v, &e) in exps.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    let mut term = c * S::from_f64(e as f64);
                    for (q, &eq) in exps.iter().enumerate() {
                        let pw = if q == v { eq - 1 } else { eq };
                        term *= y[q].powu(pw);
                    }
                    j[r][v] += term;
                }
            }
        }
        j
    }

    /// Composition of maps: returns psi with (I + psi) = (I + self) o (I + other),
    /// i.e. x = y + self(y) applied after y = u + other(u), truncated at `cap`.
    pub fn compose_with(&self, other: &PolyMap<S>, cap: usize) -> PolyMap<S> {
        // x = u + other(u) + self(u + other(u))
        let n = self.nvars;
        let mut out = PolyMap::zero(n);
        for r in 0..n {
            let mut acc: PolyRow<S> = other.comps[r].clone();
            // self_r evaluated at (u + other(u))
            for (m, &c) in &self.comps[r] {
                let sub = substitute_monomial_near_identity(m, other, cap);
                add_rows(&mut acc, &sub, c);
            }
            acc.retain(|m, c| m.degree() <= cap && c.mag() > drop_tol::<S>());
            out.comps[r] = acc;
        }
        out
    }

    /// Series inverse modulo degree `cap`: returns psi with
    /// y = x + psi(x) whenever x = y + phi(y).
    pub fn invert(&self, cap: usize) -> PolyMap<S> {
        // psi = -phi o (I + psi), iterated; degree d of psi stabilizes after
        // enough passes because phi has degree >= 2.
        let n = self.nvars;
        let mut psi = PolyMap::zero(n);
        for _ in 0..cap {
            let mut next = PolyMap::zero(n);
            for r in 0..n {
                let mut acc: PolyRow<S> = BTreeMap::new();
                for (m, &c) in &self.comps[r] {
                    let sub = substitute_monomial_near_identity(m, &psi, cap);
                    add_rows(&mut acc, &sub, -c);
                }
                acc.retain(|m, c| m.degree() <= cap && c.mag() > drop_tol::<S>());
                next.comps[r] = acc;
            }
            if next == psi {
                break;
            }
            psi = next;
        }
        psi
    }
}

/// Expand a monomial in variables `y_v := x_v + phi_v(x)`, truncated at `cap`.
fn substitute_monomial_near_identity<S: Scalar>(
    m: &Monomial,
    phi: &PolyMap<S>,
    cap: usize,
) -> PolyRow<S> {
    let mut prod: PolyRow<S> = BTreeMap::new();
    prod.insert(Monomial::one(), S::one());
    for &v in &m.0 {
        let mut factor: PolyRow<S> = BTreeMap::new();
        factor.insert(Monomial::var(v as usize), S::one());
        for (mh, &ch) in &phi.comps[v as usize] {
            let e = factor.entry(mh.clone()).or_insert_with(S::zero);
            *e += ch;
        }
        prod = mul_rows(&prod, &factor, cap);
    }
    prod
}

/// Push a vector field through the near-identity change of coordinates
/// `x_old = x_new + phi(x_new)`: returns the field governing `x_new`,
/// truncated at the field's order:
/// `g(y) = (I + Dphi(y))^{-1} f(y + phi(y))`.
pub fn compose_map<S: Scalar>(f: &PolyVectorField<S>, phi: &PolyMap<S>) -> Result<PolyVectorField<S>> {
    let n = f.nvars();
    if phi.nvars != n {
        return Err(NmdError::DimensionMismatch {
            expected: n,
            got: phi.nvars,
            context: "compose_map",
        });
    }
    let cap = f.max_degree();

    // f(y + phi(y))
    let mut fsub: Vec<PolyRow<S>> = vec![BTreeMap::new(); n];
    for (r, row) in f.rows().iter().enumerate() {
        for (m, &c) in row {
            let sub = substitute_monomial_near_identity(m, phi, cap);
            add_rows(&mut fsub[r], &sub, c);
        }
    }
    for row in &mut fsub {
        row.retain(|m, c| m.degree() <= cap && c.mag() > drop_tol::<S>());
    }

    // (I + Dphi)^{-1} = sum_q (-Dphi)^q ; Dphi raises degree by >= 1 per power
    let mut dphi: Vec<Vec<PolyRow<S>>> = vec![vec![BTreeMap::new(); n]; n];
    for (r, comp) in phi.comps.iter().enumerate() {
        for (m, &c) in comp {
            let exps = m.exponents(n);
            for (v, &e) in exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut e2 = exps.clone();
                e2[v] -= 1;
                let dm = Monomial::from_exponents(&e2);
                let entry = dphi[r][v].entry(dm).or_insert_with(S::zero);
                *entry += c * S::from_f64(e as f64);
            }
        }
    }

    let mut out_rows = fsub.clone();
    let mut term = fsub;
    for _ in 0..cap.saturating_sub(1) {
        let mut next: Vec<PolyRow<S>> = vec![BTreeMap::new(); n];
        let mut any = false;
        for r in 0..n {
            for v in 0..n {
                if dphi[r][v].is_empty() {
                    continue;
                }
                let prod = mul_rows(&dphi[r][v], &term[v], cap);
                if !prod.is_empty() {
                    any = true;
                }
                for (m, c) in prod {
                    let e = next[r].entry(m).or_insert_with(S::zero);
                    *e += -c;
                }
            }
        }
        if !any {
            break;
        }
        for r in 0..n {
            add_rows(&mut out_rows[r], &next[r], S::one());
        }
        term = next;
    }

    let mut out = PolyVectorField::zero(n, cap);
    for (r, row) in out_rows.into_iter().enumerate() {
        for (m, c) in row {
            if m.degree() >= 1 && m.degree() <= cap {
                out.add_term(r, m, c);
            }
        }
    }
    out.prune();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn toy_cubic() -> PolyVectorField<f64> {
        // Eq-33-like field in (delta, omega) ordering: row0 = omega,
        // row1 = -0.1667 w - 103.17 d + 13.82 d^2 + 17.2 d^3
        let mut f = PolyVectorField::zero(2, 3);
        f.add_term(0, Monomial::var(1), 1.0);
        f.add_term(1, Monomial::var(1), -1.0 / 6.0);
        f.add_term(1, Monomial::var(0), -103.17);
        f.add_term(1, Monomial::from_exponents(&[2, 0]), 13.82);
        f.add_term(1, Monomial::from_exponents(&[3, 0]), 17.2);
        f
    }

    #[test]
    fn substitute_identity_is_noop() {
        let f = toy_cubic();
        let t = DMatrix::<f64>::identity(2, 2);
        let g = substitute_linear(&f, &t).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn substitute_diagonal_scaling_law() {
        // x = T y with T = diag(td, tw): coefficient of d^2 in the omega row
        // scales by td^2 / tw
        let f = toy_cubic();
        let (td, tw) = (0.5, 2.0);
        let t = dmatrix![td, 0.0; 0.0, tw];
        let g = substitute_linear(&f, &t).unwrap();
        let c = g.coeff(1, &Monomial::from_exponents(&[2, 0]));
        assert!((c - 13.82 * td * td / tw).abs() < 1e-12);
        let c3 = g.coeff(1, &Monomial::from_exponents(&[3, 0]));
        assert!((c3 - 17.2 * td * td * td / tw).abs() < 1e-12);
    }

    #[test]
    fn substitute_round_trip() {
        let f = toy_cubic();
        let t = dmatrix![0.9, 0.2; -0.4, 1.1];
        let g = substitute_linear(&f, &t).unwrap();
        let back = substitute_linear(&g, &t.clone().try_inverse().unwrap()).unwrap();
        for r in 0..2 {
            for (m, &c) in f.row(r) {
                assert!((back.coeff(r, m) - c).abs() < 1e-12, "row {r} {m:?}");
            }
            for (m, &c) in back.row(r) {
                assert!((f.coeff(r, m) - c).abs() < 1e-12, "extra term row {r} {m:?} {c}");
            }
        }
    }

    #[test]
    fn compose_zero_map_is_noop() {
        let f = toy_cubic();
        let phi = PolyMap::zero(2);
        let g = compose_map(&f, &phi).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn compose_1d_normal_form_oracle() {
        // z' = lam z + c z^2 with h = (c/lam) z^2 kills the quadratic term and
        // leaves 2 c^2 / lam z^3 (hand derivation)
        let lam = -0.7;
        let c = 0.3;
        let mut f = PolyVectorField::<f64>::zero(1, 3);
        f.add_term(0, Monomial::var(0), lam);
        f.add_term(0, Monomial::from_exponents(&[2]), c);
        let mut phi = PolyMap::zero(1);
        phi.add_term(0, Monomial::from_exponents(&[2]), c / lam).unwrap();
        let g = compose_map(&f, &phi).unwrap();
        assert!((g.coeff(0, &Monomial::var(0)) - lam).abs() < 1e-14);
        assert!(g.coeff(0, &Monomial::from_exponents(&[2])).abs() < 1e-14);
        let cubic = g.coeff(0, &Monomial::from_exponents(&[3]));
        assert!((cubic - 2.0 * c * c / lam).abs() < 1e-12, "{cubic}");
    }

    #[test]
    fn invert_round_trip() {
        let mut phi = PolyMap::<f64>::zero(2);
        phi.add_term(0, Monomial::from_exponents(&[2, 0]), 0.3).unwrap();
        phi.add_term(0, Monomial::from_exponents(&[0, 2]), -0.1).unwrap();
        phi.add_term(1, Monomial::from_exponents(&[1, 1]), 0.2).unwrap();
        let psi = phi.invert(5);
        // check pointwise: y + phi(y) = x  =>  x + psi(x) ~ y
        let y = [0.05, -0.08];
        let x: Vec<f64> = (0..2).map(|i| y[i] + phi.evaluate(&y)[i]).collect();
        let back: Vec<f64> = (0..2).map(|i| x[i] + psi.evaluate(&x)[i]).collect();
        for i in 0..2 {
            // residual is O(|y|^6) with cap 5
            assert!((back[i] - y[i]).abs() < 1e-7, "{} vs {}", back[i], y[i]);
        }
    }
}
