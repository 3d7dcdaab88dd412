//! Truncated power-series solution of Zubov's equation on the oscillator
//! plane, and the critical level from the min of V over the set where the
//! truncated Lyapunov derivative vanishes.

use super::{level_polyline, BoundaryEstimate, BoundaryMeta, LevelFunction, Method};
use crate::error::{NmdError, Result};
use crate::nmd::RealOscillator;
use crate::poly::BiPoly;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Polar-sweep parameters for locating the critical level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZubovSweep {
    pub n_angles: usize,
    pub n_radial: usize,
    pub radius_cap: f64,
    /// Guard disk around the origin excluded from the sweep (the derivative
    /// vanishes there by construction).
    pub guard_radius: f64,
}

impl Default for ZubovSweep {
    fn default() -> Self {
        ZubovSweep {
            n_angles: 720,
            n_radial: 2000,
            radius_cap: 50.0,
            guard_radius: 1e-3,
        }
    }
}

/// Default comparison function: phi = 0.0002 w1^2 + 0.001 w2^2.
pub fn default_phi() -> BiPoly {
    BiPoly::from_terms([((2, 0), 0.0002), ((0, 2), 0.001)])
}

/// Solve `grad V . f = -phi (1 - V)` degree by degree for a planar
/// polynomial field, returning `V^(L) = sum_{j=2}^L V_j`.
pub fn zubov_series_field(f1: &BiPoly, f2: &BiPoly, phi: &BiPoly, order: usize) -> Result<BiPoly> {
    if order < 2 {
        return Err(NmdError::BadOrder {
            got: order,
            need: "L >= 2",
        });
    }
    if phi.terms().any(|(&(a, b), _)| a + b != 2) {
        return Err(NmdError::Invalid(
            "phi must be a homogeneous quadratic".into(),
        ));
    }
    if phi.coeff(2, 0) < 0.0 || phi.coeff(0, 2) < 0.0 {
        return Err(NmdError::Invalid(
            "phi must be positive semidefinite".into(),
        ));
    }
    let a = [
        [f1.coeff(1, 0), f1.coeff(0, 1)],
        [f2.coeff(1, 0), f2.coeff(0, 1)],
    ];
    let f1_nl = strip_linear(f1);
    let f2_nl = strip_linear(f2);

    let mut v_by_deg: Vec<BiPoly> = vec![BiPoly::new(); order + 1];
    let mut v_total = BiPoly::new();

    for d in 2..=order {
        // rhs_d = [phi * V]_d - [sum_q grad V_q . f_nl]_d   (d = 2: -phi)
        let mut rhs = BiPoly::new();
        if d == 2 {
            rhs = phi.scale(-1.0);
        } else {
            if d >= 4 {
                rhs = phi.mul(&v_by_deg[d - 2]);
            }
            for q in 2..d {
                let contrib = v_by_deg[q].lie_derivative(&f1_nl, &f2_nl);
                rhs = rhs.add(&contrib.homogeneous_part(d as u32).scale(-1.0));
            }
        }

        // L_A over the degree-d homogeneous basis {w1^i w2^(d-i)}
        let n = d + 1;
        let mut mat = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let (ai, bi) = (i as f64, (d - i) as f64);
            // L_A[w1^i w2^(d-i)] = i w1^(i-1) w2^(d-i) (a00 w1 + a01 w2)
            //                     + (d-i) w1^i w2^(d-i-1) (a10 w1 + a11 w2)
            if i > 0 {
                mat[(i, i)] += ai * a[0][0];
                mat[(i - 1, i)] += ai * a[0][1];
            }
            if i < d {
                mat[(i + 1, i)] += bi * a[1][0];
                mat[(i, i)] += bi * a[1][1];
            }
        }
        let rhs_vec = DVector::from_fn(n, |i, _| rhs.coeff(i as u32, (d - i) as u32));
        let lu = mat.lu();
        let sol = match lu.solve(&rhs_vec) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                return Err(if d == 2 {
                    NmdError::ZubovUndamped
                } else {
                    NmdError::ZubovSingular(d)
                })
            }
        };
        // reject wildly ill-conditioned solves (undamped linear part makes
        // the degree-2 operator exactly singular; near-singular shows up as
        // an enormous solution)
        let sol_norm = sol.amax();
        let rhs_norm = rhs_vec.amax().max(1e-300);
        if sol_norm / rhs_norm > 1e12 {
            return Err(if d == 2 {
                NmdError::ZubovUndamped
            } else {
                NmdError::ZubovSingular(d)
            });
        }
        let mut vd = BiPoly::new();
        for i in 0..n {
            vd.add_term(i as u32, (d - i) as u32, sol[i]);
        }
        v_by_deg[d] = vd.clone();
        v_total = v_total.add(&vd);
    }
    Ok(v_total)
}

fn strip_linear(p: &BiPoly) -> BiPoly {
    BiPoly::from_terms(
        p.terms()
            .filter(|(&(a, b), _)| a + b >= 2)
            .map(|(&k, &c)| (k, c)),
    )
}

/// Zubov series for an oscillator; requires strict damping.
pub fn zubov_series(osc: &RealOscillator, phi: &BiPoly, order: usize) -> Result<LevelFunction> {
    if osc.lambda.re >= 0.0 {
        return Err(NmdError::ZubovUndamped);
    }
    let poly = zubov_series_field(&osc.row1, &osc.row2, phi, order)?;
    Ok(LevelFunction {
        poly,
        max_degree: order as u32,
    })
}

/// Critical level: sweep the plane for sign changes of dV/dt along rays,
/// take the minimum of V over everything found (outside the guard disk).
/// Returns the value plus the boundary estimate at that level.
pub fn zubov_critical_level(
    v: &LevelFunction,
    osc: &RealOscillator,
    phi: &BiPoly,
    sweep: &ZubovSweep,
) -> Result<(Option<f64>, BoundaryEstimate)> {
    let vdot = v.poly.lie_derivative(&osc.row1, &osc.row2);
    let vmin = (0..sweep.n_angles)
        .into_par_iter()
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / sweep.n_angles as f64;
            let dir = [theta.cos(), theta.sin()];
            let g = |r: f64| vdot.eval(r * dir[0], r * dir[1]);
            let mut best: Option<f64> = None;
            let dr = (sweep.radius_cap - sweep.guard_radius) / sweep.n_radial as f64;
            let mut prev_r = sweep.guard_radius;
            let mut prev_v = g(prev_r);
            for i in 1..=sweep.n_radial {
                let r = sweep.guard_radius + i as f64 * dr;
                let val = g(r);
                if prev_v.signum() != val.signum() && prev_v.is_finite() && val.is_finite() {
                    let (mut lo, mut hi, mut flo) = (prev_r, r, prev_v);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let fm = g(mid);
                        if flo.signum() != fm.signum() {
                            hi = mid;
                        } else {
                            lo = mid;
                            flo = fm;
                        }
                        if hi - lo < 1e-10 * (1.0 + hi) {
                            break;
                        }
                    }
                    let rc = 0.5 * (lo + hi);
                    let val_v = v.poly.eval(rc * dir[0], rc * dir[1]);
                    best = Some(best.map_or(val_v, |b: f64| b.min(val_v)));
                }
                prev_r = r;
                prev_v = val;
            }
            best
        })
        .reduce(
            || None,
            |x, y| match (x, y) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, None) => a,
                (None, b) => b,
            },
        );

    let polyline = match vmin {
        Some(vc) => level_polyline(&v.poly, vc, 360, sweep.radius_cap),
        None => Vec::new(),
    };
    let est = BoundaryEstimate {
        method: Method::Zubov,
        mode_index: osc.mode_index,
        level: Some(v.clone()),
        critical_value: vmin,
        shrink_ratio: 1.0,
        polyline,
        meta: BoundaryMeta::Zubov {
            phi: phi.clone(),
            order: v.max_degree as usize,
            sweep: sweep.clone(),
        },
    };
    Ok((vmin, est))
}

/// Convenience: series plus critical level with defaults.
pub fn zubov_boundary(
    osc: &RealOscillator,
    phi: &BiPoly,
    order: usize,
    sweep: &ZubovSweep,
) -> Result<BoundaryEstimate> {
    let v = zubov_series(osc, phi, order)?;
    let (_, est) = zubov_critical_level(&v, osc, phi, sweep)?;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn separable_closed_form() {
        // w1' = -w1, w2' = -w2, phi = 2(w1^2 + w2^2):
        // V = 1 - exp(-(w1^2+w2^2)) = r2 - r2^2/2 + r2^3/6 - r2^4/24 ...
        let f1 = BiPoly::from_terms([((1, 0), -1.0)]);
        let f2 = BiPoly::from_terms([((0, 1), -1.0)]);
        let phi = BiPoly::from_terms([((2, 0), 2.0), ((0, 2), 2.0)]);
        let v = zubov_series_field(&f1, &f2, &phi, 8).unwrap();
        // expand 1 - exp(-r2) in the monomial basis: r2^n coefficient
        // (-1)^{n+1}/n!, with r2^n = sum_j C(n,j) w1^{2j} w2^{2(n-j)}
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
        for n in 1..=4usize {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let coef = sign / fact[n];
            let mut binom = 1.0;
            for j in 0..=n {
                if j > 0 {
                    binom = binom * (n - j + 1) as f64 / j as f64;
                } else {
                    binom = 1.0;
                }
                let got = v.coeff(2 * j as u32, 2 * (n - j) as u32);
                assert_abs_diff_eq!(got, coef * binom, epsilon = 1e-10);
            }
        }
        // Vdot < 0 off origin: Phi empty within a reasonable cap
        let lvl = LevelFunction {
            poly: v,
            max_degree: 8,
        };
        let osc = RealOscillator {
            mode_index: 0,
            lambda: crate::Complex64::new(-1.0, 1.0), // unused by the sweep math
            k: 3,
            row1: f1,
            row2: f2,
        };
        let sweep = ZubovSweep {
            radius_cap: 1.0,
            n_angles: 90,
            n_radial: 300,
            guard_radius: 1e-3,
        };
        let (vc, est) = zubov_critical_level(&lvl, &osc, &phi, &sweep).unwrap();
        assert!(vc.is_none(), "found spurious critical level {vc:?}");
        assert!(est.polyline.is_empty());
    }

    #[test]
    fn undamped_is_an_error() {
        let f1 = BiPoly::from_terms([((0, 1), -4.0)]);
        let f2 = BiPoly::from_terms([((1, 0), 1.0)]);
        let phi = default_phi();
        match zubov_series_field(&f1, &f2, &phi, 6) {
            Err(NmdError::ZubovUndamped) => {}
            other => panic!("expected ZubovUndamped, got {other:?}"),
        }
    }

    #[test]
    fn residual_contains_only_high_degrees() {
        // residual = grad V . f + phi (1 - V) must vanish below degree L+1
        let f1 = BiPoly::from_terms([((1, 0), -0.1667), ((0, 1), -103.17), ((0, 2), 13.82), ((0, 3), 17.2)]);
        let f2 = BiPoly::from_terms([((1, 0), 1.0)]);
        let phi = default_phi();
        let l = 7usize;
        let v = zubov_series_field(&f1, &f2, &phi, l).unwrap();
        let resid = v
            .lie_derivative(&f1, &f2)
            .add(&phi)
            .add(&phi.mul(&v).scale(-1.0));
        for (&(a, b), &c) in resid.terms() {
            if (a + b) as usize <= l {
                assert!(c.abs() < 1e-10, "low-degree residual at ({a},{b}): {c}");
            }
        }
    }
}
