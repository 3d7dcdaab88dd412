//! Stability-boundary estimation for decoupled oscillators.
//!
//! Three estimators: a time-simulation ray search (the reference), the
//! first-integral energy function, and a truncated Zubov power series. All
//! deliver a [`BoundaryEstimate`]: an optional level function with its
//! critical value, and a sampled boundary polyline over uniformly spaced ray
//! angles in the (w1, w2) plane.

mod first_integral;
mod search;
pub mod zubov;

pub use first_integral::first_integral_boundary;
pub use search::search_boundary_sim;
pub use zubov::{default_phi, zubov_boundary, zubov_critical_level, zubov_series, zubov_series_field, ZubovSweep};

use crate::poly::BiPoly;
use serde::{Deserialize, Serialize};

/// Which estimator produced a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    SimSearch,
    FirstIntegral,
    Zubov,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::SimSearch => "sim_search",
            Method::FirstIntegral => "first_integral",
            Method::Zubov => "zubov",
        }
    }
}

/// A level function in the oscillator plane: polynomial plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelFunction {
    pub poly: BiPoly,
    pub max_degree: u32,
}

impl LevelFunction {
    pub fn eval(&self, w: [f64; 2]) -> f64 {
        self.poly.eval(w[0], w[1])
    }
}

/// One sampled boundary point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolylinePoint {
    pub angle_deg: f64,
    pub w1: f64,
    pub w2: f64,
    /// Level value at the point (NaN for sim-search rays).
    pub level: f64,
    /// Ray never destabilized within the radius cap.
    pub unbounded: bool,
}

/// Method-specific metadata kept with an estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BoundaryMeta {
    SimSearch {
        config: SearchConfig,
    },
    FirstIntegral {
        /// (location, energy) of each closest unstable equilibrium found.
        ueps: Vec<(f64, f64)>,
    },
    Zubov {
        phi: BiPoly,
        order: usize,
        sweep: ZubovSweep,
    },
}

/// Estimated stability boundary of one oscillator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub method: Method,
    pub mode_index: usize,
    /// Present for level-based methods.
    pub level: Option<LevelFunction>,
    /// Critical level value (absent when no finite boundary was found).
    pub critical_value: Option<f64>,
    /// Shrink ratio applied to the critical value; 1 when unshrunk.
    pub shrink_ratio: f64,
    /// Boundary samples at the effective (shrunk) critical level.
    pub polyline: Vec<PolylinePoint>,
    pub meta: BoundaryMeta,
}

/// Classification of a point against a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Inside,
    Outside,
    Indeterminate,
}

/// Simulation-search parameters (paper defaults).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Ray count.
    pub rays: usize,
    /// Initial step.
    pub s0: f64,
    /// Per-ray simulation horizon, s.
    pub horizon: f64,
    /// Stop refining when the step falls below this.
    pub eps: f64,
    /// w2 excursion (max - min) declaring instability; the paper's 750
    /// degrees expressed in radians. w2 is modally scaled, so this is a
    /// heuristic and stays configurable.
    pub instability_gap: f64,
    /// Radius at which a ray is declared unbounded.
    pub radius_cap: f64,
    /// Oscillator integration step, s.
    pub sim_step: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rays: 180,
            s0: 0.1,
            horizon: 5.0,
            eps: 0.01,
            instability_gap: 750.0f64.to_radians(),
            radius_cap: 1e3,
            sim_step: 5e-4,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.rays < 8 {
            return Err(crate::NmdError::Invalid("need at least 8 rays".into()));
        }
        if !(self.s0 > self.eps && self.eps > 0.0) {
            return Err(crate::NmdError::Invalid("need s0 > eps > 0".into()));
        }
        Ok(())
    }
}

impl BoundaryEstimate {
    /// Effective critical value after shrinking.
    pub fn effective_critical(&self) -> Option<f64> {
        self.critical_value.map(|v| v * self.shrink_ratio)
    }

    /// Boundary radius at an angle (radians), linear interpolation between
    /// adjacent polyline samples. None when the adjacent rays are unbounded.
    pub fn radius_at_angle(&self, theta: f64) -> Option<f64> {
        let n = self.polyline.len();
        if n == 0 {
            return None;
        }
        let tau = theta.rem_euclid(2.0 * std::f64::consts::PI);
        let pos = tau / (2.0 * std::f64::consts::PI) * n as f64;
        let j0 = (pos.floor() as usize) % n;
        let j1 = (j0 + 1) % n;
        let frac = pos - pos.floor();
        let p0 = &self.polyline[j0];
        let p1 = &self.polyline[j1];
        if p0.unbounded || p1.unbounded {
            return None;
        }
        let r0 = (p0.w1 * p0.w1 + p0.w2 * p0.w2).sqrt();
        let r1 = (p1.w1 * p1.w1 + p1.w2 * p1.w2).sqrt();
        Some((1.0 - frac) * r0 + frac * r1)
    }

    /// Classify a point. Level-based estimates compare the point's radius
    /// against the innermost level crossing along its ray (sublevel sets of
    /// truncated polynomials reopen far from the origin, so the bare level
    /// comparison would misclassify points past the well). Sim-search
    /// estimates interpolate the searched polyline; a point under an
    /// unbounded ray is Inside per definition unless the cap was reached.
    pub fn classify(&self, w: [f64; 2]) -> Classification {
        let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
        if r == 0.0 {
            return Classification::Inside;
        }
        let theta = w[1].atan2(w[0]);
        match self.method {
            Method::SimSearch => match self.radius_at_angle(theta) {
                Some(rb) => {
                    if r < rb {
                        Classification::Inside
                    } else {
                        Classification::Outside
                    }
                }
                None => {
                    // adjacent ray unbounded-capped: only indeterminate when
                    // the point lies beyond what the search visited
                    if let BoundaryMeta::SimSearch { config } = &self.meta {
                        if r < config.radius_cap {
                            Classification::Inside
                        } else {
                            Classification::Indeterminate
                        }
                    } else {
                        Classification::Indeterminate
                    }
                }
            },
            Method::FirstIntegral | Method::Zubov => {
                let (level, vc) = match (&self.level, self.effective_critical()) {
                    (Some(l), Some(v)) => (l, v),
                    // no finite boundary: everything reachable counts inside
                    _ => return Classification::Inside,
                };
                let dir = [w[0] / r, w[1] / r];
                match innermost_crossing(&level.poly, dir, vc, r.max(1.0) * 4.0) {
                    Some(rc) => {
                        if r < rc {
                            Classification::Inside
                        } else {
                            Classification::Outside
                        }
                    }
                    None => Classification::Inside,
                }
            }
        }
    }

    /// level(w) / effective critical, the margin diagnostic for level-based
    /// methods; radius ratio for sim-search.
    pub fn margin(&self, w: [f64; 2]) -> f64 {
        match self.method {
            Method::SimSearch => {
                let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
                let theta = w[1].atan2(w[0]);
                match self.radius_at_angle(theta) {
                    Some(rb) if rb > 0.0 => r / rb,
                    _ => 0.0,
                }
            }
            _ => match (&self.level, self.effective_critical()) {
                (Some(l), Some(vc)) if vc != 0.0 => l.eval(w) / vc,
                _ => 0.0,
            },
        }
    }

    /// Return a copy with the critical value shrunk by `r` in (0, 1], with
    /// the polyline resampled at the shrunk level. For sim-search estimates
    /// (no level function) the polyline is scaled radially by sqrt(r) — a
    /// labeled extension, not part of the method's definition.
    pub fn apply_shrink(&self, ratio: f64) -> crate::Result<BoundaryEstimate> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(crate::NmdError::Invalid(format!(
                "shrink ratio must be in (0, 1], got {ratio}"
            )));
        }
        let mut out = self.clone();
        out.shrink_ratio = self.shrink_ratio * ratio;
        match (&self.level, self.critical_value) {
            (Some(level), Some(vc)) => {
                let eff = vc * out.shrink_ratio;
                out.polyline = level_polyline(
                    &level.poly,
                    eff,
                    self.polyline.len().max(8),
                    polyline_cap(&self.polyline),
                );
            }
            _ => {
                let s = ratio.sqrt();
                for p in &mut out.polyline {
                    p.w1 *= s;
                    p.w2 *= s;
                }
            }
        }
        Ok(out)
    }

    /// Delimited-text export with a metadata header.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# method: {}\n", self.method.label()));
        s.push_str(&format!("# mode_index: {}\n", self.mode_index));
        if let Some(v) = self.critical_value {
            s.push_str(&format!("# critical_value: {v:.12e}\n"));
        } else {
            s.push_str("# critical_value: none\n");
        }
        s.push_str(&format!("# shrink_ratio: {}\n", self.shrink_ratio));
        match &self.meta {
            BoundaryMeta::SimSearch { config } => {
                s.push_str(&format!(
                    "# search: rays={} s0={} eps={} horizon={} gap={} cap={}\n",
                    config.rays,
                    config.s0,
                    config.eps,
                    config.horizon,
                    config.instability_gap,
                    config.radius_cap
                ));
            }
            BoundaryMeta::FirstIntegral { ueps } => {
                for (loc, en) in ueps {
                    s.push_str(&format!("# uep: w2={loc:.9} energy={en:.9}\n"));
                }
            }
            BoundaryMeta::Zubov { phi, order, .. } => {
                s.push_str(&format!("# zubov: L={order} phi={phi}\n"));
            }
        }
        s.push_str("angle_deg, w1, w2, level_value\n");
        for p in &self.polyline {
            s.push_str(&format!(
                "{:.4}, {:.12e}, {:.12e}, {:.12e}\n",
                p.angle_deg, p.w1, p.w2, p.level
            ));
        }
        s
    }
}

fn polyline_cap(points: &[PolylinePoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.w1 * p.w1 + p.w2 * p.w2).sqrt())
        .fold(1.0, f64::max)
        * 4.0
}

/// Innermost radius where `poly` crosses `level` along `dir`, if any,
/// scanned up to `r_cap` with bracketing plus bisection.
pub(crate) fn innermost_crossing(poly: &BiPoly, dir: [f64; 2], level: f64, r_cap: f64) -> Option<f64> {
    let n_scan = 400;
    let dr = r_cap / n_scan as f64;
    let f = |r: f64| poly.eval(r * dir[0], r * dir[1]) - level;
    let mut prev_r = 0.0;
    let mut prev_v = f(0.0);
    for i in 1..=n_scan {
        let r = i as f64 * dr;
        let v = f(r);
        if prev_v == 0.0 {
            return Some(prev_r);
        }
        if v == 0.0 {
            return Some(r);
        }
        if prev_v.signum() != v.signum() {
            // bisect to 1e-8 radius tolerance
            let (mut lo, mut hi) = (prev_r, r);
            let mut flo = prev_v;
            while hi - lo > 1e-8 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    return Some(mid);
                }
                if flo.signum() != fm.signum() {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev_r = r;
        prev_v = v;
    }
    None
}

/// Sample the level set `poly = level` on `n` uniform rays by innermost
/// crossings. Rays with no crossing are marked unbounded.
pub(crate) fn level_polyline(poly: &BiPoly, level: f64, n: usize, r_cap: f64) -> Vec<PolylinePoint> {
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let dir = [theta.cos(), theta.sin()];
            match innermost_crossing(poly, dir, level, r_cap) {
                Some(r) => PolylinePoint {
                    angle_deg: theta.to_degrees(),
                    w1: r * dir[0],
                    w2: r * dir[1],
                    level,
                    unbounded: false,
                },
                None => PolylinePoint {
                    angle_deg: theta.to_degrees(),
                    w1: r_cap * dir[0],
                    w2: r_cap * dir[1],
                    level: f64::NAN,
                    unbounded: true,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn innermost_crossing_circle() {
        // V = w1^2 + w2^2, level 4: crossing at r = 2 in any direction
        let p = BiPoly::from_terms([((2, 0), 1.0), ((0, 2), 1.0)]);
        for theta in [0.0f64, 0.6, 2.5, 4.0] {
            let r = innermost_crossing(&p, [theta.cos(), theta.sin()], 4.0, 10.0).unwrap();
            assert!((r - 2.0).abs() < 1e-7);
        }
    }

    #[test]
    fn classify_origin_inside() {
        let p = BiPoly::from_terms([((2, 0), 1.0), ((0, 2), 1.0)]);
        let est = BoundaryEstimate {
            method: Method::FirstIntegral,
            mode_index: 0,
            level: Some(LevelFunction {
                poly: p.clone(),
                max_degree: 2,
            }),
            critical_value: Some(1.0),
            shrink_ratio: 1.0,
            polyline: level_polyline(&p, 1.0, 16, 10.0),
            meta: BoundaryMeta::FirstIntegral { ueps: vec![] },
        };
        assert_eq!(est.classify([0.0, 0.0]), Classification::Inside);
        assert_eq!(est.classify([0.5, 0.5]), Classification::Inside);
        assert_eq!(est.classify([1.2, 0.0]), Classification::Outside);
    }

    #[test]
    fn shrink_containment() {
        // shrunk region is a subset of the unshrunk one
        let p = BiPoly::from_terms([((2, 0), 1.0), ((0, 2), 2.0), ((0, 3), -0.4)]);
        let est = BoundaryEstimate {
            method: Method::FirstIntegral,
            mode_index: 0,
            level: Some(LevelFunction {
                poly: p.clone(),
                max_degree: 3,
            }),
            critical_value: Some(2.0),
            shrink_ratio: 1.0,
            polyline: level_polyline(&p, 2.0, 32, 20.0),
            meta: BoundaryMeta::FirstIntegral { ueps: vec![] },
        };
        let shrunk = est.apply_shrink(0.3).unwrap();
        for i in 0..1000 {
            let th = i as f64 * 0.00628;
            let r = 0.002 * i as f64;
            let w = [r * th.cos(), r * th.sin()];
            if shrunk.classify(w) == Classification::Inside {
                assert_eq!(est.classify(w), Classification::Inside, "point {w:?}");
            }
        }
    }
}
