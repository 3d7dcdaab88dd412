//! First-integral Lyapunov boundary.
//!
//! Zeroing all cross terms of row 1, all row-2 nonlinearities and the
//! damping leaves the conservative reduced system
//! `w1' = sum_l v_l w2^l, w2' = w1`, whose first integral is
//! `V = w1^2/2 - sum_l v_l w2^{l+1}/(l+1)`. The closest unstable equilibria
//! are the smallest-magnitude nonzero real roots of `sum_l v_l w2^l`; the
//! critical energy is the smaller V among them.

use super::{level_polyline, BoundaryEstimate, BoundaryMeta, LevelFunction, Method};
use crate::error::Result;
use crate::nmd::RealOscillator;
use crate::poly::BiPoly;
use nalgebra::DMatrix;

/// Real roots of a real polynomial given coefficients lowest-first, via the
/// companion matrix, polished by one Newton step.
pub(crate) fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    // strip trailing zeros
    let mut c = coeffs.to_vec();
    while let Some(&last) = c.last() {
        if last.abs() < 1e-300 && c.len() > 1 {
            c.pop();
        } else {
            break;
        }
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        return vec![-c[0] / c[1]];
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let eigs = comp.complex_eigenvalues();
    let poly = |x: f64| -> f64 {
        let mut acc = 0.0;
        for &ci in c.iter().rev() {
            acc = acc * x + ci;
        }
        acc
    };
    let dpoly = |x: f64| -> f64 {
        let mut acc = 0.0;
        for (i, &ci) in c.iter().enumerate().skip(1).collect::<Vec<_>>().into_iter().rev() {
            acc = acc * x + ci * i as f64;
        }
        acc
    };
    let scale = c.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut out = Vec::new();
    for l in eigs.iter() {
        if l.im.abs() < 1e-8 * (1.0 + l.re.abs()) {
            let mut x = l.re;
            for _ in 0..3 {
                let d = dpoly(x);
                if d.abs() > 1e-300 {
                    x -= poly(x) / d;
                }
            }
            if poly(x).abs() < 1e-8 * scale.max(1.0) {
                out.push(x);
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

/// Build the first-integral boundary estimate for one oscillator.
pub fn first_integral_boundary(osc: &RealOscillator) -> Result<BoundaryEstimate> {
    let k = osc.k as u32;
    // reduced field keeps only the pure-w2 coefficients of row 1
    let v: Vec<f64> = (1..=k).map(|l| osc.row1.coeff(0, l)).collect();

    // V = w1^2/2 - sum_l v_l w2^{l+1} / (l+1)
    let mut vpoly = BiPoly::from_terms([((2, 0), 0.5)]);
    for (idx, &vl) in v.iter().enumerate() {
        let l = (idx + 1) as u32;
        vpoly.add_term(0, l + 1, -vl / (l as f64 + 1.0));
    }

    // nonzero real roots of sum_l v_l w2^l = w2 * (v1 + v2 w2 + ...)
    let roots = real_roots(&v);
    let pos = roots
        .iter()
        .cloned()
        .filter(|&r| r > 1e-12)
        .fold(None::<f64>, |acc, r| Some(acc.map_or(r, |a| a.min(r))));
    let neg = roots
        .iter()
        .cloned()
        .filter(|&r| r < -1e-12)
        .fold(None::<f64>, |acc, r| Some(acc.map_or(r, |a| a.max(r))));

    let mut ueps: Vec<(f64, f64)> = Vec::new();
    for r in [pos, neg].into_iter().flatten() {
        ueps.push((r, vpoly.eval(0.0, r)));
    }

    let critical = ueps
        .iter()
        .map(|&(_, e)| e)
        .fold(None::<f64>, |acc, e| Some(acc.map_or(e, |a| a.min(e))));

    let polyline = match critical {
        Some(vc) => {
            let reach = ueps
                .iter()
                .map(|&(r, _)| r.abs())
                .fold(1.0f64, f64::max);
            let cap = (2.0 * vc.abs().sqrt() + 4.0 * reach).max(10.0);
            level_polyline(&vpoly, vc, 360, cap)
        }
        None => Vec::new(),
    };

    Ok(BoundaryEstimate {
        method: Method::FirstIntegral,
        mode_index: osc.mode_index,
        level: Some(LevelFunction {
            poly: vpoly,
            max_degree: k + 1,
        }),
        critical_value: critical,
        shrink_ratio: 1.0,
        polyline,
        meta: BoundaryMeta::FirstIntegral { ueps },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmd::RealOscillator;
    use crate::Complex64;
    use approx::assert_abs_diff_eq;

    fn osc_from_v(v: &[(u32, u32, f64)], lambda: Complex64, k: usize) -> RealOscillator {
        let mut row1 = BiPoly::new();
        for &(j, l, c) in v {
            row1.add_term(j, l, c);
        }
        let row2 = BiPoly::from_terms([((1, 0), 1.0)]);
        RealOscillator {
            mode_index: 0,
            lambda,
            k,
            row1,
            row2,
        }
    }

    #[test]
    fn pure_cubic_hand_oracle() {
        // w1' = -w2 + w2^3: UEPs at +-1, V = w1^2/2 + w2^2/2 - w2^4/4, critical 1/4
        let osc = osc_from_v(
            &[(1, 0, -0.01), (0, 1, -1.0), (0, 3, 1.0)],
            Complex64::new(-0.005, 1.0),
            3,
        );
        let b = first_integral_boundary(&osc).unwrap();
        let lvl = b.level.as_ref().unwrap();
        assert_abs_diff_eq!(lvl.poly.coeff(2, 0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(lvl.poly.coeff(0, 2), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(lvl.poly.coeff(0, 4), -0.25, epsilon = 1e-14);
        let meta = match &b.meta {
            BoundaryMeta::FirstIntegral { ueps } => ueps,
            _ => unreachable!(),
        };
        let mut locs: Vec<f64> = meta.iter().map(|&(r, _)| r).collect();
        locs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(locs[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(locs[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.critical_value.unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn linear_only_no_finite_uep() {
        let osc = osc_from_v(&[(1, 0, -0.1), (0, 1, -4.0)], Complex64::new(-0.05, 2.0), 3);
        let b = first_integral_boundary(&osc).unwrap();
        assert!(b.critical_value.is_none());
        assert!(b.polyline.is_empty());
        assert_eq!(b.classify([3.0, 5.0]), super::super::Classification::Inside);
    }

    #[test]
    fn real_roots_quadratic() {
        // 17.1957 x^2 + 13.8218 x - 103.174: roots ~ 2.0805, -2.8843
        let r = real_roots(&[-103.174, 13.8218, 17.1957]);
        assert_eq!(r.len(), 2);
        assert_abs_diff_eq!(r[0], -2.8843, epsilon = 1e-3);
        assert_abs_diff_eq!(r[1], 2.0805, epsilon = 1e-3);
    }
}
