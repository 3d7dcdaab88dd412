//! Classical-model multi-machine power systems.
//!
//! Machines are second-order swing equations behind constant EMF; the
//! network is a Kron-reduced admittance seen from the machine internal
//! nodes, stored as the (g, a, b) coefficient form of the electrical power
//!
//! ```text
//! P_ei = E_i^2 g_i + sum_{j != i} [ a_ij sin(d_i - d_j) + b_ij cos(d_i - d_j) ]
//! ```
//!
//! State vectors are ordered `[delta_1..delta_m, speed_1..speed_m]`.
//!
//! Since electrical power depends on angle differences only, a lossy system
//! generally has no state where every machine's power balances exactly; the
//! relative motions still have a well-defined equilibrium once the common
//! (center-of-inertia) acceleration is removed. Equilibria and expansion
//! centers are therefore defined through the COI-relative mismatch, and the
//! residual common acceleration is reported alongside instead of being
//! silently absorbed.

use crate::error::{NmdError, Result};
use crate::poly::Monomial;
use crate::RealVectorField;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type C64 = Complex<f64>;

/// One synchronous machine of the classical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: String,
    /// Inertia constant H in seconds (M = 2H).
    pub inertia_h: f64,
    /// Damping D in pu torque per pu speed deviation (zeta = D).
    pub damping_d: f64,
    /// Constant EMF magnitude behind transient reactance, pu.
    pub emf_e: f64,
    /// Mechanical power, pu.
    pub pmech: f64,
}

impl Machine {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia_h > 0.0) {
            return Err(NmdError::Invalid(format!(
                "machine {}: inertia H must be positive, got {}",
                self.id, self.inertia_h
            )));
        }
        if !(self.emf_e > 0.0) {
            return Err(NmdError::Invalid(format!(
                "machine {}: EMF must be positive, got {}",
                self.id, self.emf_e
            )));
        }
        if self.damping_d < 0.0 {
            return Err(NmdError::Invalid(format!(
                "machine {}: damping must be nonnegative, got {}",
                self.id, self.damping_d
            )));
        }
        Ok(())
    }

    /// M_i = 2 H_i.
    pub fn m(&self) -> f64 {
        2.0 * self.inertia_h
    }
}

/// Kron-reduced network coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedNetwork {
    pub m: usize,
    /// Self conductance g_i (per machine).
    pub g: Vec<f64>,
    /// a_ij = E_i E_j Im(Y_ij), zero diagonal.
    pub a: Vec<Vec<f64>>,
    /// b_ij = E_i E_j Re(Y_ij), zero diagonal.
    pub b: Vec<Vec<f64>>,
}

impl ReducedNetwork {
    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        if self.g.len() != m || self.a.len() != m || self.b.len() != m {
            return Err(NmdError::Invalid("network arrays must be m x m".into()));
        }
        for i in 0..m {
            if self.a[i].len() != m || self.b[i].len() != m {
                return Err(NmdError::Invalid("network arrays must be m x m".into()));
            }
            if self.a[i][i] != 0.0 || self.b[i][i] != 0.0 {
                return Err(NmdError::Invalid("a and b must have zero diagonal".into()));
            }
            for j in 0..m {
                if !self.a[i][j].is_finite() || !self.b[i][j].is_finite() || !self.g[i].is_finite()
                {
                    return Err(NmdError::Invalid("network entries must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// A complete classical-model system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSystem {
    pub machines: Vec<Machine>,
    pub network: ReducedNetwork,
    /// Synchronous speed, rad/s.
    pub omega_s: f64,
}

/// Outcome of the uniform-damping check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DampingCheck {
    /// All machines share gamma = D_i / (2 H_i) within tolerance.
    Uniform { gamma: f64 },
    /// Per-machine ratios and their relative spread (max-min)/min.
    Violation { ratios: Vec<f64>, spread: f64 },
}

/// Result of an equilibrium search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Absolute rotor angles, machine 1 pinned to the guess's first entry.
    pub delta: Vec<f64>,
    /// Newton iterations used.
    pub iterations: usize,
    /// Uniform acceleration left at the equilibrium:
    /// omega_s * sum(Pm - Pe) / sum(M), rad/s^2. Zero for consistent data.
    pub uniform_accel: f64,
    /// Infinity norm of the COI-relative mismatch at the solution.
    pub residual: f64,
    /// False if the Jacobian there has an oscillatory eigenvalue in the open
    /// right half-plane.
    pub is_stable: bool,
}

impl ClassicalSystem {
    pub fn m(&self) -> usize {
        self.machines.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines.len() < 2 {
            return Err(NmdError::Invalid(
                "a system needs at least two machines".into(),
            ));
        }
        if self.machines.len() != self.network.m {
            return Err(NmdError::Invalid(format!(
                "machine count {} != network size {}",
                self.machines.len(),
                self.network.m
            )));
        }
        if !(self.omega_s > 0.0) {
            return Err(NmdError::Invalid("omega_s must be positive".into()));
        }
        for mach in &self.machines {
            mach.validate()?;
        }
        self.network.validate()
    }

    pub fn total_m(&self) -> f64 {
        self.machines.iter().map(|mc| mc.m()).sum()
    }

    /// Electrical power of every machine at the given absolute angles.
    pub fn electrical_power(&self, delta: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        if delta.len() != m {
            return Err(NmdError::DimensionMismatch {
                expected: m,
                got: delta.len(),
                context: "electrical_power",
            });
        }
        let net = &self.network;
        let mut p = vec![0.0; m];
        for i in 0..m {
            let e_i = self.machines[i].emf_e;
            let mut acc = e_i * e_i * net.g[i];
            for j in 0..m {
                if j == i {
                    continue;
                }
                let s = delta[i] - delta[j];
                acc += net.a[i][j] * s.sin() + net.b[i][j] * s.cos();
            }
            p[i] = acc;
        }
        Ok(p)
    }

    /// Full swing right-hand side at state `[delta; speed]`:
    /// `d delta_i = speed_i`,
    /// `d speed_i = -(D_i/M_i) speed_i - (omega_s/M_i)(P_ei - P_mi)`.
    pub fn swing_rhs(&self, state: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        if state.len() != 2 * m {
            return Err(NmdError::DimensionMismatch {
                expected: 2 * m,
                got: state.len(),
                context: "swing_rhs",
            });
        }
        let pe = self.electrical_power(&state[..m])?;
        let mut out = vec![0.0; 2 * m];
        for i in 0..m {
            let mach = &self.machines[i];
            let mi = mach.m();
            out[i] = state[m + i];
            out[m + i] = -(mach.damping_d / mi) * state[m + i] - self.omega_s / mi * (pe[i] - mach.pmech);
        }
        Ok(out)
    }

    /// d P_ei / d delta_j at the given angles (m x m).
    pub fn power_jacobian(&self, delta: &[f64]) -> DMatrix<f64> {
        let m = self.m();
        let net = &self.network;
        let mut j = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut diag = 0.0;
            for q in 0..m {
                if q == i {
                    continue;
                }
                let s = delta[i] - delta[q];
                let d = net.a[i][q] * s.cos() - net.b[i][q] * s.sin();
                j[(i, q)] = -d;
                diag += d;
            }
            j[(i, i)] = diag;
        }
        j
    }

    /// Jacobian of the swing field at `[delta; 0]` (2m x 2m).
    pub fn jacobian(&self, delta: &[f64]) -> DMatrix<f64> {
        let m = self.m();
        let pj = self.power_jacobian(delta);
        let mut a = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            a[(i, m + i)] = 1.0;
            let mach = &self.machines[i];
            let mi = mach.m();
            for j in 0..m {
                a[(m + i, j)] = -self.omega_s / mi * pj[(i, j)];
            }
            a[(m + i, m + i)] = -mach.damping_d / mi;
        }
        a
    }

    /// COI-relative mismatch: F_i = (Pm_i - Pe_i)/M_i - sum_j(Pm_j - Pe_j)/M_T.
    /// Vanishes at the relative-motion equilibrium.
    pub fn coi_mismatch(&self, delta: &[f64]) -> Result<Vec<f64>> {
        let pe = self.electrical_power(delta)?;
        let m = self.m();
        let mt = self.total_m();
        let total: f64 = (0..m).map(|i| self.machines[i].pmech - pe[i]).sum();
        Ok((0..m)
            .map(|i| (self.machines[i].pmech - pe[i]) / self.machines[i].m() - total / mt)
            .collect())
    }

    /// Check the uniform-damping assumption: gamma_i = D_i / (2 H_i).
    pub fn check_uniform_damping(&self, rel_tol: f64) -> DampingCheck {
        let ratios: Vec<f64> = self
            .machines
            .iter()
            .map(|mc| mc.damping_d / mc.m())
            .collect();
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        if max == 0.0 && min == 0.0 {
            return DampingCheck::Uniform { gamma: 0.0 };
        }
        let spread = if min.abs() > 0.0 {
            (max - min) / min.abs()
        } else {
            f64::INFINITY
        };
        if spread <= rel_tol {
            DampingCheck::Uniform { gamma: ratios[0] }
        } else {
            DampingCheck::Violation { ratios, spread }
        }
    }

    /// Replace every machine's damping with the inertia-weighted mean ratio,
    /// preserving sum(D_i). Used behind an explicit caller flag.
    pub fn force_uniform_damping(&self) -> (ClassicalSystem, f64) {
        let mt = self.total_m();
        let dsum: f64 = self.machines.iter().map(|mc| mc.damping_d).sum();
        let gamma = dsum / mt;
        let mut sys = self.clone();
        for mc in &mut sys.machines {
            mc.damping_d = gamma * mc.m();
        }
        (sys, gamma)
    }

    /// Newton search for the (COI-relative) stable equilibrium. The first
    /// machine's angle is pinned to `guess[0]`; the remaining relative angles
    /// are solved so the COI-relative mismatch vanishes.
    pub fn find_equilibrium(&self, guess: &[f64]) -> Result<Equilibrium> {
        let m = self.m();
        if guess.len() != m {
            return Err(NmdError::DimensionMismatch {
                expected: m,
                got: guess.len(),
                context: "find_equilibrium",
            });
        }
        const MAX_ITERS: usize = 50;
        const TOL: f64 = 1e-10;
        let mt = self.total_m();
        let mut delta = guess.to_vec();

        let residual_of = |f: &[f64]| f.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));

        for it in 0..=MAX_ITERS {
            let f = self.coi_mismatch(&delta)?;
            let res = residual_of(&f);
            if res < TOL {
                let iterations = it;
                let pe = self.electrical_power(&delta)?;
                let total: f64 = (0..m).map(|i| self.machines[i].pmech - pe[i]).sum();
                let uniform_accel = self.omega_s * total / mt;
                let a = self.jacobian(&delta);
                let eigs = a.complex_eigenvalues();
                let is_stable = eigs
                    .iter()
                    .filter(|l| l.im.abs() > 1e-6)
                    .all(|l| l.re <= 1e-9);
                return Ok(Equilibrium {
                    delta,
                    iterations,
                    uniform_accel,
                    residual: res,
                    is_stable,
                });
            }
            if it == MAX_ITERS {
                return Err(NmdError::NewtonDivergence {
                    iters: MAX_ITERS,
                    residual: res,
                });
            }
            // Jacobian of F_i (i >= 1) w.r.t. delta_j (j >= 1):
            // dF_i/dd_j = -dPe_i/dd_j / M_i + sum_q dPe_q/dd_j / M_T
            let pj = self.power_jacobian(&delta);
            let mut jac = DMatrix::zeros(m - 1, m - 1);
            for i in 1..m {
                for j in 1..m {
                    let mut v = -pj[(i, j)] / self.machines[i].m();
                    for q in 0..m {
                        v += pj[(q, j)] / mt;
                    }
                    jac[(i - 1, j - 1)] = v;
                }
            }
            let rhs = DVector::from_iterator(m - 1, f[1..].iter().cloned());
            let lu = jac.lu();
            let step = lu
                .solve(&rhs)
                .ok_or_else(|| NmdError::Singular("equilibrium Newton Jacobian".into()))?;
            for j in 1..m {
                // clamp to keep Newton inside the basin for rough guesses
                delta[j] -= step[j - 1].clamp(-0.5, 0.5);
            }
        }
        unreachable!()
    }
}

/// Schur-complement reduction: eliminate all nodes not in `keep`.
pub fn schur_reduce(y: &DMatrix<C64>, keep: &[usize]) -> Result<DMatrix<C64>> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(NmdError::Invalid("bus admittance must be square".into()));
    }
    let mut is_kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(NmdError::Invalid(format!("keep index {k} out of range")));
        }
        if is_kept[k] {
            return Err(NmdError::Invalid(format!("duplicate keep index {k}")));
        }
        is_kept[k] = true;
    }
    let drop: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let g = keep.len();
    let d = drop.len();
    let mut ygg = DMatrix::<C64>::zeros(g, g);
    let mut ygb = DMatrix::<C64>::zeros(g, d);
    let mut ybg = DMatrix::<C64>::zeros(d, g);
    let mut ybb = DMatrix::<C64>::zeros(d, d);
    for (i, &ki) in keep.iter().enumerate() {
        for (j, &kj) in keep.iter().enumerate() {
            ygg[(i, j)] = y[(ki, kj)];
        }
        for (j, &dj) in drop.iter().enumerate() {
            ygb[(i, j)] = y[(ki, dj)];
        }
    }
    for (i, &di) in drop.iter().enumerate() {
        for (j, &kj) in keep.iter().enumerate() {
            ybg[(i, j)] = y[(di, kj)];
        }
        for (j, &dj) in drop.iter().enumerate() {
            ybb[(i, j)] = y[(di, dj)];
        }
    }
    if d == 0 {
        return Ok(ygg);
    }
    let lu = ybb.lu();
    let x = lu
        .solve(&ybg)
        .ok_or_else(|| NmdError::Singular("non-machine admittance block".into()))?;
    Ok(ygg - ygb * x)
}

/// Kron reduction to machine internal nodes, mapped into (g, a, b) form
/// using the machine EMF magnitudes:
/// g_i = Re(Yred_ii), a_ij = E_i E_j Im(Yred_ij), b_ij = E_i E_j Re(Yred_ij).
pub fn kron_reduce(
    bus_admittance: &DMatrix<C64>,
    machine_nodes: &[usize],
    emf: &[f64],
) -> Result<ReducedNetwork> {
    let m = machine_nodes.len();
    if emf.len() != m {
        return Err(NmdError::DimensionMismatch {
            expected: m,
            got: emf.len(),
            context: "kron_reduce emf",
        });
    }
    let yred = schur_reduce(bus_admittance, machine_nodes)?;
    let mut g = vec![0.0; m];
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![vec![0.0; m]; m];
    for i in 0..m {
        g[i] = yred[(i, i)].re;
        for j in 0..m {
            if i != j {
                a[i][j] = emf[i] * emf[j] * yred[(i, j)].im;
                b[i][j] = emf[i] * emf[j] * yred[(i, j)].re;
            }
        }
    }
    let net = ReducedNetwork { m, g, a, b };
    net.validate()?;
    Ok(net)
}

/// Result of a swing-field Taylor expansion.
#[derive(Debug, Clone)]
pub struct SwingExpansion {
    /// Polynomial field in the deviation state `x = [delta - center; speed]`.
    pub field: RealVectorField,
    /// Expansion center (absolute angles).
    pub center: Vec<f64>,
    /// Residual uniform acceleration at the center (dropped constant term;
    /// lies entirely in the mean-motion subspace for uniform damping).
    pub uniform_accel: f64,
}

/// Analytic Taylor expansion of the swing field about `center` (an
/// equilibrium of the COI-relative dynamics), truncated at order `k`.
/// Coefficients come from the sine/cosine derivative cycle, not numeric
/// differentiation. The constant term (uniform acceleration for
/// COI-consistent centers) is omitted and reported.
pub fn taylor_expand(sys: &ClassicalSystem, center: &[f64], k: usize) -> Result<SwingExpansion> {
    const EQ_TOL: f64 = 1e-9;
    let m = sys.m();
    if center.len() != m {
        return Err(NmdError::DimensionMismatch {
            expected: m,
            got: center.len(),
            context: "taylor_expand",
        });
    }
    if k < 2 {
        return Err(NmdError::BadOrder {
            got: k,
            need: "k >= 2",
        });
    }
    let mism = sys.coi_mismatch(center)?;
    let res = mism.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if res >= EQ_TOL {
        return Err(NmdError::NotEquilibrium {
            residual: res,
            tol: EQ_TOL,
        });
    }

    let n = 2 * m;
    let mut field = RealVectorField::zero(n, k);
    for i in 0..m {
        field.add_term(i, Monomial::var(m + i), 1.0);
        let mach = &sys.machines[i];
        field.add_term(m + i, Monomial::var(m + i), -mach.damping_d / mach.m());
    }
    // pair terms: a_ij sin(s* + u) + b_ij cos(s* + u), u = x_i - x_j
    let net = &sys.network;
    for i in 0..m {
        let scale = -sys.omega_s / sys.machines[i].m();
        for j in 0..m {
            if i == j {
                continue;
            }
            let s = center[i] - center[j];
            let (a, b) = (net.a[i][j], net.b[i][j]);
            // derivative cycle of a*sin + b*cos at s
            let der = [
                a * s.sin() + b * s.cos(),
                a * s.cos() - b * s.sin(),
                -(a * s.sin() + b * s.cos()),
                -(a * s.cos() - b * s.sin()),
            ];
            let mut fact = 1.0;
            for deg in 1..=k {
                fact *= deg as f64;
                let cd = der[deg % 4] / fact;
                if cd == 0.0 {
                    continue;
                }
                // (x_i - x_j)^deg binomial expansion
                let mut binom = 1.0f64;
                for t in 0..=deg {
                    // C(deg, t) built incrementally
                    if t > 0 {
                        binom = binom * (deg - t + 1) as f64 / t as f64;
                    } else {
                        binom = 1.0;
                    }
                    let sign = if (deg - t) % 2 == 0 { 1.0 } else { -1.0 };
                    let mut exps = vec![0usize; n];
                    exps[i] = t;
                    exps[j] += deg - t;
                    field.add_term(
                        m + i,
                        Monomial::from_exponents(&exps),
                        scale * cd * binom * sign,
                    );
                }
            }
        }
    }
    field.prune();

    let pe = sys.electrical_power(center)?;
    let total: f64 = (0..m).map(|i| sys.machines[i].pmech - pe[i]).sum();
    let uniform_accel = sys.omega_s * total / sys.total_m();
    Ok(SwingExpansion {
        field,
        center: center.to_vec(),
        uniform_accel,
    })
}

/// Fault scenario: three network conditions plus timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub prefault: ClassicalSystem,
    pub faulton: ClassicalSystem,
    pub postfault: ClassicalSystem,
    /// Fault duration, s.
    pub clearing_time: f64,
    /// Total horizon from fault inception, s.
    pub horizon: f64,
    /// Integration step, s.
    pub step: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.prefault.validate()?;
        self.faulton.validate()?;
        self.postfault.validate()?;
        let m = self.prefault.m();
        if self.faulton.m() != m || self.postfault.m() != m {
            return Err(NmdError::Invalid(
                "scenario systems must share the machine count".into(),
            ));
        }
        if (self.faulton.omega_s - self.prefault.omega_s).abs() > 1e-9
            || (self.postfault.omega_s - self.prefault.omega_s).abs() > 1e-9
        {
            return Err(NmdError::Invalid(
                "scenario systems must share omega_s".into(),
            ));
        }
        if !(self.clearing_time > 0.0 && self.clearing_time < self.horizon) {
            return Err(NmdError::Invalid(
                "need 0 < clearing_time < horizon".into(),
            ));
        }
        if !(self.step > 0.0) {
            return Err(NmdError::Invalid("step must be positive".into()));
        }
        Ok(())
    }
}

/// Two-machine encoding of a single-machine-infinite-bus system: machine 2
/// is a high-inertia bus with matched damping ratio so the relative dynamics
/// reproduce the SMIB swing equation to O(H1/H2).
pub fn smib_system(pmax: f64, delta_s: f64, h: f64, d: f64, omega_s: f64) -> ClassicalSystem {
    let h2 = h * 1.0e6;
    let d2 = d * 1.0e6; // same D/(2H) ratio
    let pm = pmax * delta_s.sin();
    ClassicalSystem {
        machines: vec![
            Machine {
                id: "gen".into(),
                inertia_h: h,
                damping_d: d,
                emf_e: 1.0,
                pmech: pm,
            },
            Machine {
                id: "inf-bus".into(),
                inertia_h: h2,
                damping_d: d2,
                emf_e: 1.0,
                pmech: -pm,
            },
        ],
        network: ReducedNetwork {
            m: 2,
            g: vec![0.0, 0.0],
            a: vec![vec![0.0, pmax], vec![pmax, 0.0]],
            b: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        },
        omega_s,
    }
}

/// The SMIB benchmark parameters: Pmax = 1.7 pu, steady angle 15 deg,
/// H = 3 s, D = 1, 60 Hz.
pub fn smib_benchmark() -> ClassicalSystem {
    smib_system(
        1.7,
        15.0f64.to_radians(),
        3.0,
        1.0,
        2.0 * std::f64::consts::PI * 60.0,
    )
}

pub mod synthetic {
    //! Deterministic synthetic test systems.

    use super::*;

    /// A lossless uniform-damping ring of `m` machines with parameter
    /// variation chosen so mode frequencies are well separated and
    /// non-resonant. Mechanical powers are set to balance at the flat-angle
    /// equilibrium (delta = 0), which is exact for the lossless ring.
    pub fn ring_system(m: usize, gamma: f64, omega_s: f64) -> ClassicalSystem {
        assert!(m >= 2);
        let mut machines = Vec::with_capacity(m);
        for i in 0..m {
            let phase = i as f64 / m as f64;
            let h = 3.0 + 2.5 * (2.0 * std::f64::consts::PI * phase).sin().abs()
                + 0.7 * ((i % 5) as f64);
            machines.push(Machine {
                id: format!("g{}", i + 1),
                inertia_h: h,
                damping_d: gamma * 2.0 * h,
                emf_e: 1.0,
                pmech: 0.0,
            });
        }
        let mut a = vec![vec![0.0; m]; m];
        for i in 0..m {
            let j = (i + 1) % m;
            let c = 1.1 + 0.45 * ((i * 7 % 11) as f64) / 11.0;
            a[i][j] += c;
            a[j][i] += c;
            // sparse chords for modal spread
            if m > 6 && i % 4 == 0 {
                let q = (i + m / 3) % m;
                if q != i {
                    let cc = 0.35 + 0.1 * ((i % 3) as f64);
                    a[i][q] += cc;
                    a[q][i] += cc;
                }
            }
        }
        ClassicalSystem {
            machines,
            network: ReducedNetwork {
                m,
                g: vec![0.0; m],
                a,
                b: vec![vec![0.0; m]; m],
            },
            omega_s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn smib() -> ClassicalSystem {
        smib_benchmark()
    }

    #[test]
    fn electrical_power_zero_coupling() {
        // m >= 2 enforced; single-machine analogue: zero network -> Pe = E^2 g
        let sys = ClassicalSystem {
            machines: vec![
                Machine {
                    id: "a".into(),
                    inertia_h: 3.0,
                    damping_d: 0.0,
                    emf_e: 1.0,
                    pmech: 0.0,
                },
                Machine {
                    id: "b".into(),
                    inertia_h: 3.0,
                    damping_d: 0.0,
                    emf_e: 1.0,
                    pmech: 0.0,
                },
            ],
            network: ReducedNetwork {
                m: 2,
                g: vec![0.0, 0.0],
                a: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                b: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            },
            omega_s: 377.0,
        };
        for d in [[0.0, 0.0], [0.4, -1.3]] {
            assert_eq!(sys.electrical_power(&d).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn electrical_power_smib_shape() {
        // SMIB encoding reproduces Pmax * sin(d + delta_s) seen from machine 1
        let sys = smib();
        let ds = 15.0f64.to_radians();
        for x in [-0.5, 0.0, 0.3, 1.1] {
            let pe = sys.electrical_power(&[ds + x, 0.0]).unwrap();
            assert_abs_diff_eq!(pe[0], 1.7 * (x + ds).sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn electrical_power_direct_loop_oracle() {
        // independent straightforward-summation oracle on an arbitrary 3-machine case
        let sys = ClassicalSystem {
            machines: vec![
                Machine { id: "1".into(), inertia_h: 3.0, damping_d: 1.0, emf_e: 1.05, pmech: 0.5 },
                Machine { id: "2".into(), inertia_h: 4.0, damping_d: 4.0 / 3.0, emf_e: 0.98, pmech: 0.2 },
                Machine { id: "3".into(), inertia_h: 2.5, damping_d: 2.5 / 3.0, emf_e: 1.10, pmech: -0.7 },
            ],
            network: ReducedNetwork {
                m: 3,
                g: vec![0.11, 0.23, 0.05],
                a: vec![
                    vec![0.0, 1.2, 0.7],
                    vec![1.2, 0.0, 0.9],
                    vec![0.7, 0.9, 0.0],
                ],
                b: vec![
                    vec![0.0, 0.15, 0.08],
                    vec![0.15, 0.0, 0.12],
                    vec![0.08, 0.12, 0.0],
                ],
            },
            omega_s: 377.0,
        };
        let d = [0.31, -0.42, 0.87];
        let got = sys.electrical_power(&d).unwrap();
        for i in 0..3 {
            let mut want = sys.machines[i].emf_e.powi(2) * sys.network.g[i];
            for j in 0..3 {
                if j != i {
                    want += sys.network.a[i][j] * (d[i] - d[j]).sin()
                        + sys.network.b[i][j] * (d[i] - d[j]).cos();
                }
            }
            assert_abs_diff_eq!(got[i], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn swing_rhs_zero_at_equilibrium() {
        let sys = smib();
        let ds = 15.0f64.to_radians();
        let rhs = sys.swing_rhs(&[ds, 0.0, 0.0, 0.0]).unwrap();
        for v in rhs {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn swing_rhs_smib_acceleration() {
        // at delta-offset 0, speed 1 rad/s: accel = -D/(2H) = -0.1667
        let sys = smib();
        let ds = 15.0f64.to_radians();
        let rhs = sys.swing_rhs(&[ds, 0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(rhs[2], -1.0 / 6.0, epsilon = 1e-3);
    }

    #[test]
    fn uniform_damping_cases() {
        // all zero damping
        let mut sys = smib();
        sys.machines[0].damping_d = 0.0;
        sys.machines[1].damping_d = 0.0;
        assert_eq!(
            sys.check_uniform_damping(1e-6),
            DampingCheck::Uniform { gamma: 0.0 }
        );
        // SMIB: gamma = D/(2H) = 1/6
        let sys = smib();
        match sys.check_uniform_damping(1e-6) {
            DampingCheck::Uniform { gamma } => assert_abs_diff_eq!(gamma, 1.0 / 6.0, epsilon = 1e-12),
            other => panic!("expected uniform, got {other:?}"),
        }
        // ratios 0.08 and 0.10: spread (0.10-0.08)/0.08 = 0.25
        let mut sys = smib();
        sys.machines[0].damping_d = 0.08 * sys.machines[0].m();
        sys.machines[1].damping_d = 0.10 * sys.machines[1].m();
        match sys.check_uniform_damping(1e-6) {
            DampingCheck::Violation { spread, .. } => {
                assert_abs_diff_eq!(spread, 0.25, epsilon = 1e-9)
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn find_equilibrium_smib() {
        let sys = smib();
        let ds = 15.0f64.to_radians();
        // already at equilibrium: returns in <= 1 iteration
        let eq = sys.find_equilibrium(&[ds, 0.0]).unwrap();
        assert!(eq.iterations <= 1);
        assert_abs_diff_eq!(eq.delta[0] - eq.delta[1], ds, epsilon = 1e-9);
        assert!(eq.is_stable);
        // from a rough guess
        let eq = sys.find_equilibrium(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(eq.delta[0] - eq.delta[1], ds, epsilon = 1e-8);
        assert!(eq.residual < 1e-10);
        assert!(eq.uniform_accel.abs() < 1e-10);
        // rhs at the equilibrium is tiny
        let mut state = eq.delta.clone();
        state.extend([0.0, 0.0]);
        let rhs = sys.swing_rhs(&state).unwrap();
        assert!(rhs.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn schur_reduce_identity_when_no_elimination() {
        let y = DMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, -3.0), C64::new(-0.5, 1.0),
            C64::new(-0.5, 1.0), C64::new(0.8, -2.0),
        ]);
        let r = schur_reduce(&y, &[0, 1]).unwrap();
        assert_eq!(r, y);
    }

    #[test]
    fn schur_reduce_star_oracle() {
        // 3-bus star: nodes 0,1 via branch admittances y0, y1 to center node 2
        // with load yl at the center. Hand Schur complement:
        // Yred = diag(y0,y1) - [y0;y1][y0 y1]/(y0+y1+yl)
        let y0 = C64::new(0.4, -4.0);
        let y1 = C64::new(0.2, -2.5);
        let yl = C64::new(0.9, 0.3);
        let mut y = DMatrix::<C64>::zeros(3, 3);
        y[(0, 0)] = y0;
        y[(1, 1)] = y1;
        y[(2, 2)] = y0 + y1 + yl;
        y[(0, 2)] = -y0;
        y[(2, 0)] = -y0;
        y[(1, 2)] = -y1;
        y[(2, 1)] = -y1;
        let r = schur_reduce(&y, &[0, 1]).unwrap();
        let den = y0 + y1 + yl;
        let want00 = y0 - y0 * y0 / den;
        let want01 = -y0 * y1 / den;
        let want11 = y1 - y1 * y1 / den;
        assert!((r[(0, 0)] - want00).norm() < 1e-12);
        assert!((r[(0, 1)] - want01).norm() < 1e-12);
        assert!((r[(1, 0)] - want01).norm() < 1e-12);
        assert!((r[(1, 1)] - want11).norm() < 1e-12);
    }

    #[test]
    fn schur_reduce_injection_round_trip() {
        // injections from Yred at kept nodes equal injections from the full Y
        // with eliminated-node voltages solved from I_b = 0
        let n = 5;
        let mut y = DMatrix::<C64>::zeros(n, n);
        let branches = [
            (0usize, 2usize, C64::new(0.5, -5.0)),
            (1, 3, C64::new(0.3, -3.0)),
            (2, 3, C64::new(0.2, -2.0)),
            (2, 4, C64::new(0.4, -4.0)),
            (3, 4, C64::new(0.25, -2.2)),
        ];
        for (f, t, adm) in branches {
            y[(f, f)] += adm;
            y[(t, t)] += adm;
            y[(f, t)] -= adm;
            y[(t, f)] -= adm;
        }
        y[(4, 4)] += C64::new(0.8, 0.2); // shunt load at an eliminated node
        let keep = [0usize, 1];
        let yred = schur_reduce(&y, &keep).unwrap();
        let vg = DVector::from_vec(vec![C64::new(1.02, 0.05), C64::new(0.97, -0.11)]);
        // solve interior: Ybb vb = -Ybg vg
        let drop = [2usize, 3, 4];
        let mut ybb = DMatrix::<C64>::zeros(3, 3);
        let mut ybg = DMatrix::<C64>::zeros(3, 2);
        for (i, &di) in drop.iter().enumerate() {
            for (j, &dj) in drop.iter().enumerate() {
                ybb[(i, j)] = y[(di, dj)];
            }
            for (j, &kj) in keep.iter().enumerate() {
                ybg[(i, j)] = y[(di, kj)];
            }
        }
        let vb = ybb.lu().solve(&(-&ybg * &vg)).unwrap();
        for (i, &ki) in keep.iter().enumerate() {
            let mut ifull = C64::new(0.0, 0.0);
            for (j, &kj) in keep.iter().enumerate() {
                ifull += y[(ki, kj)] * vg[j];
            }
            for (j, &dj) in drop.iter().enumerate() {
                ifull += y[(ki, dj)] * vb[j];
            }
            let mut ired = C64::new(0.0, 0.0);
            for j in 0..2 {
                ired += yred[(i, j)] * vg[j];
            }
            assert!((ifull - ired).norm() < 1e-10, "node {i}");
        }
    }

    #[test]
    fn taylor_matches_eq33_on_smib() {
        let sys = smib();
        let eq = sys.find_equilibrium(&[15.0f64.to_radians(), 0.0]).unwrap();
        let exp = taylor_expand(&sys, &eq.delta, 3).unwrap();
        // row 2 (machine-1 acceleration), coefficients on x1 (= machine-1 angle dev)
        let f = &exp.field;
        let c1 = f.coeff(2, &Monomial::from_exponents(&[1, 0, 0, 0]));
        let c2 = f.coeff(2, &Monomial::from_exponents(&[2, 0, 0, 0]));
        let c3 = f.coeff(2, &Monomial::from_exponents(&[3, 0, 0, 0]));
        let cw = f.coeff(2, &Monomial::from_exponents(&[0, 0, 1, 0]));
        let ws = sys.omega_s;
        let ds = 15.0f64.to_radians();
        let scale = 1.7 * ws / 6.0;
        assert_abs_diff_eq!(c1, -scale * ds.cos(), epsilon = 1e-3);
        assert_abs_diff_eq!(c2, scale * ds.sin() / 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(c3, scale * ds.cos() / 6.0, epsilon = 1e-4);
        assert_abs_diff_eq!(cw, -1.0 / 6.0, epsilon = 1e-9);
        // against the printed rounded values, 0.5% relative
        assert!((c1 - -103.2).abs() / 103.2 < 0.005);
        assert!((c2 - 13.82).abs() / 13.82 < 0.005);
        assert!((c3 - 17.2).abs() / 17.2 < 0.005);
        assert!((cw - -0.1667).abs() / 0.1667 < 0.005);
    }

    #[test]
    fn taylor_linear_system_reproduces_jacobian_only() {
        // expansion of a system whose power is linear in angles? The swing
        // field is trigonometric, so instead check: quadratic coefficients at
        // a symmetric equilibrium vanish where sin(s*) = 0.
        let sys = ClassicalSystem {
            machines: vec![
                Machine { id: "1".into(), inertia_h: 3.0, damping_d: 0.5, emf_e: 1.0, pmech: 0.0 },
                Machine { id: "2".into(), inertia_h: 5.0, damping_d: 0.5 * 5.0 / 3.0, emf_e: 1.0, pmech: 0.0 },
            ],
            network: ReducedNetwork {
                m: 2,
                g: vec![0.0; 2],
                a: vec![vec![0.0, 1.3], vec![1.3, 0.0]],
                b: vec![vec![0.0; 2]; 2],
            },
            omega_s: 377.0,
        };
        let exp = taylor_expand(&sys, &[0.0, 0.0], 3).unwrap();
        let jac = sys.jacobian(&[0.0, 0.0]);
        let lin = exp.field.linear_matrix();
        for r in 0..4 {
            for c in 0..4 {
                assert_abs_diff_eq!(lin[r][c], jac[(r, c)], epsilon = 1e-12);
            }
        }
        // sin(0) = 0 kills every quadratic term
        assert_eq!(exp.field.degree_census()[2], 0);
        assert!(exp.field.degree_census()[3] > 0);
    }

    #[test]
    fn taylor_remainder_scaling_oracle() {
        // order-3 remainder: max error over a ball scales ~ r^4
        let sys = smib();
        let eq = sys.find_equilibrium(&[15.0f64.to_radians(), 0.0]).unwrap();
        let exp = taylor_expand(&sys, &eq.delta, 3).unwrap();
        let err_at = |r: f64| -> f64 {
            let dirs = [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.7, -0.1, 0.5, 0.0],
                [-0.6, 0.2, -0.4, 0.0],
            ];
            let mut worst = 0.0f64;
            for dir in dirs {
                let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let x: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
                let mut state = eq.delta.clone();
                state[0] += x[0];
                state[1] += x[1];
                state.extend([x[2], x[3]]);
                let truth = sys.swing_rhs(&state).unwrap();
                let approx = exp.field.evaluate(&x).unwrap();
                for i in 0..4 {
                    worst = worst.max((truth[i] - approx[i]).abs());
                }
            }
            worst
        };
        let e1 = err_at(0.01);
        let e2 = err_at(0.02);
        let ratio = e2 / e1;
        assert!(
            (8.0..40.0).contains(&ratio),
            "remainder ratio {ratio} not ~16"
        );
    }

    #[test]
    fn coi_equilibrium_of_lossy_system() {
        // lossy two-machine system with inconsistent Pm: COI equilibrium
        // exists, uniform acceleration reported
        let mut sys = smib();
        sys.network.b = vec![vec![0.0, 0.12], vec![0.12, 0.0]];
        sys.network.g = vec![0.03, 0.02];
        let eq = sys.find_equilibrium(&[0.2, 0.0]).unwrap();
        assert!(eq.residual < 1e-10);
        assert!(eq.uniform_accel.abs() > 1e-6, "lossy case should be inconsistent");
        // COI mismatch vanishes even though raw rhs does not
        let f = sys.coi_mismatch(&eq.delta).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-10));
    }
}
