//! Time-simulation-aided boundary search: march outward along uniformly
//! spaced rays, bisecting on the instability criterion (w2 excursion beyond
//! the configured gap, or outright divergence).

use super::{BoundaryEstimate, BoundaryMeta, Method, PolylinePoint, SearchConfig};
use crate::error::Result;
use crate::nmd::RealOscillator;
use crate::sim::OVERFLOW_GUARD;
use rayon::prelude::*;

/// Simulate the oscillator from `w0`; true when the trajectory trips the
/// instability criterion within the horizon.
fn destabilizes(osc: &RealOscillator, w0: [f64; 2], cfg: &SearchConfig) -> bool {
    let steps = (cfg.horizon / cfg.sim_step).round() as usize;
    let mut w = w0;
    let mut w2_min = w[1];
    let mut w2_max = w[1];
    let dt = cfg.sim_step;
    for _ in 0..steps {
        let k1 = osc.eval(w);
        let k2 = osc.eval([w[0] + 0.5 * dt * k1[0], w[1] + 0.5 * dt * k1[1]]);
        let k3 = osc.eval([w[0] + 0.5 * dt * k2[0], w[1] + 0.5 * dt * k2[1]]);
        let k4 = osc.eval([w[0] + dt * k3[0], w[1] + dt * k3[1]]);
        w[0] += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        w[1] += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        if !w[0].is_finite() || !w[1].is_finite() || w[0].abs() > OVERFLOW_GUARD || w[1].abs() > OVERFLOW_GUARD {
            return true;
        }
        w2_min = w2_min.min(w[1]);
        w2_max = w2_max.max(w[1]);
        if w2_max - w2_min > cfg.instability_gap {
            return true;
        }
    }
    false
}

/// March one ray per the search steps: advance by s while stable, retreat
/// and halve on instability, stop when s < eps. Returns the boundary point
/// or None when the ray reached the radius cap without destabilizing.
fn search_ray(osc: &RealOscillator, dir: [f64; 2], cfg: &SearchConfig) -> Option<[f64; 2]> {
    let mut s = cfg.s0;
    let mut w0 = [cfg.s0 * dir[0], cfg.s0 * dir[1]];
    loop {
        let r = (w0[0] * w0[0] + w0[1] * w0[1]).sqrt();
        if r > cfg.radius_cap {
            return None;
        }
        let unstable = destabilizes(osc, w0, cfg);
        if s < cfg.eps {
            // terminal estimate; by construction w0 is on the stable side
            // (any unstable probe retreats before s can shrink below eps)
            if unstable {
                w0 = [w0[0] - s * dir[0], w0[1] - s * dir[1]];
            }
            return Some(w0);
        }
        if unstable {
            w0 = [w0[0] - s * dir[0], w0[1] - s * dir[1]];
            s *= 0.5;
        } else {
            w0 = [w0[0] + s * dir[0], w0[1] + s * dir[1]];
        }
    }
}

/// Ray search over the full circle (ray-parallel).
pub fn search_boundary_sim(osc: &RealOscillator, cfg: &SearchConfig) -> Result<BoundaryEstimate> {
    cfg.validate()?;
    let polyline: Vec<PolylinePoint> = (0..cfg.rays)
        .into_par_iter()
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / cfg.rays as f64;
            let dir = [theta.cos(), theta.sin()];
            match search_ray(osc, dir, cfg) {
                Some(w) => PolylinePoint {
                    angle_deg: theta.to_degrees(),
                    w1: w[0],
                    w2: w[1],
                    level: f64::NAN,
                    unbounded: false,
                },
                None => PolylinePoint {
                    angle_deg: theta.to_degrees(),
                    w1: cfg.radius_cap * dir[0],
                    w2: cfg.radius_cap * dir[1],
                    level: f64::NAN,
                    unbounded: true,
                },
            }
        })
        .collect();

    Ok(BoundaryEstimate {
        method: Method::SimSearch,
        mode_index: osc.mode_index,
        level: None,
        critical_value: None,
        shrink_ratio: 1.0,
        polyline,
        meta: BoundaryMeta::SimSearch {
            config: cfg.clone(),
        },
    })
}
