//! End-to-end transient stability procedures.
//!
//! Procedure 1 analyzes every electromechanical mode; procedure 2a restricts
//! the modal representation to selected modes of interest before decoupling;
//! procedure 2b additionally shrinks each mode's critical level by its modal
//! energy fraction fitted from a stable reference trajectory. Procedure 1 is
//! implemented as 2a with the full mode set, so the two coincide exactly.

use crate::boundary::{
    first_integral_boundary, search_boundary_sim, zubov_series, zubov_critical_level,
    BoundaryEstimate, Classification, Method, SearchConfig, ZubovSweep,
};
use crate::error::{NmdError, Result};
use crate::modal::{eigen_decompose, reduce_swing_to_modes, ModeSet};
use crate::model::{ClassicalSystem, DampingCheck, Scenario};
use crate::nmd::{nmd_decouple, project_trajectory, to_real_oscillator, RealOscillator, TransformChain};
use crate::poly::BiPoly;
use crate::sim::{run_contingency, Trajectory};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Modal-energy decomposition of a ringdown trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalEnergyReport {
    /// Analyzed mode indices (ModeSet ordering).
    pub mode_indices: Vec<usize>,
    /// Per mode, per machine: fitted amplitude (rad/s).
    pub amplitudes: Vec<Vec<f64>>,
    /// Per mode, per machine: fitted phase (rad).
    pub phases: Vec<Vec<f64>>,
    /// Decay rates sigma_i (1/s) used in the fit.
    pub sigmas: Vec<f64>,
    /// Angular frequencies Omega_i (rad/s) used in the fit.
    pub omegas: Vec<f64>,
    /// E_i = sum_j H_j A_ji^2 (normalization constant 1).
    pub energies: Vec<f64>,
    pub total_energy: f64,
    /// r_i = E_i / E_all over the analyzed modes.
    pub ratios: Vec<f64>,
}

/// Verdict for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Indeterminate,
}

/// Everything recorded for one analyzed mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode_index: usize,
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    pub verdict: Verdict,
    /// Max margin over the trajectory per method (level ratio, or radius
    /// ratio for sim-search).
    pub margins: Vec<(Method, f64)>,
    /// Margin at the clearing-instant state (diagnostic; the whole-trajectory
    /// classification above is authoritative).
    pub clearing_margins: Vec<(Method, f64)>,
    /// First sample index exiting a boundary, if any, with the method.
    pub first_exit: Option<(Method, usize)>,
    /// Count of unprojectable samples.
    pub unprojectable: usize,
    /// Shrink ratio applied (1 when not 2b).
    pub shrink_ratio: f64,
    pub boundaries: Vec<BoundaryEstimate>,
    pub projected: crate::nmd::ProjectedTrajectory,
}

/// Which procedure produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Procedure {
    Tsa1,
    Tsa2a,
    Tsa2b,
}

/// Full analysis output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TSAReport {
    pub procedure: Procedure,
    pub k: usize,
    pub methods: Vec<Method>,
    pub overall: Verdict,
    /// Earliest-exiting mode when unstable.
    pub violating_mode: Option<usize>,
    pub modes: Vec<ModeReport>,
    pub energy: Option<ModalEnergyReport>,
    pub scenario_tag: String,
}

impl TSAReport {
    /// Per-mode text blocks.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "procedure: {:?}\nk: {}\noverall: {:?}\n",
            self.procedure, self.k, self.overall
        ));
        if let Some(v) = self.violating_mode {
            s.push_str(&format!("violating_mode: {v}\n"));
        }
        if let Some(e) = &self.energy {
            s.push_str("shrink_ratios:");
            for (mi, r) in e.mode_indices.iter().zip(&e.ratios) {
                s.push_str(&format!(" mode{mi}={r:.4}"));
            }
            s.push('\n');
        }
        for m in &self.modes {
            s.push_str(&format!(
                "\n[mode {}] f={:.4} Hz zeta={:.4} verdict={:?} shrink={:.4}\n",
                m.mode_index, m.frequency_hz, m.damping_ratio, m.verdict, m.shrink_ratio
            ));
            for (meth, margin) in &m.margins {
                s.push_str(&format!("  margin[{}] = {:.4}\n", meth.label(), margin));
            }
            for (meth, margin) in &m.clearing_margins {
                s.push_str(&format!(
                    "  clearing_margin[{}] = {:.4}\n",
                    meth.label(),
                    margin
                ));
            }
            if let Some((meth, idx)) = m.first_exit {
                s.push_str(&format!(
                    "  first_exit: {} at sample {}\n",
                    meth.label(),
                    idx
                ));
            }
            if m.unprojectable > 0 {
                s.push_str(&format!("  unprojectable_samples: {}\n", m.unprojectable));
            }
            for b in &m.boundaries {
                s.push_str(&format!(
                    "  boundary[{}]: critical={:?} shrink={:.4} points={}\n",
                    b.method.label(),
                    b.critical_value,
                    b.shrink_ratio,
                    b.polyline.len()
                ));
            }
        }
        s
    }
}

/// Options for the TSA procedures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsaOptions {
    pub k: usize,
    pub methods: Vec<Method>,
    pub search: SearchConfig,
    pub zubov_phi: BiPoly,
    pub zubov_order: usize,
    pub zubov_sweep: ZubovSweep,
    /// Proceed on non-uniform damping by forcing the inertia-weighted mean.
    pub force_uniform_damping: bool,
    /// Allowed relative spread of damping ratios.
    pub damping_rel_tol: f64,
}

impl Default for TsaOptions {
    fn default() -> Self {
        TsaOptions {
            k: 3,
            methods: vec![Method::SimSearch, Method::FirstIntegral, Method::Zubov],
            search: SearchConfig::default(),
            zubov_phi: crate::boundary::zubov::default_phi(),
            zubov_order: 16,
            zubov_sweep: ZubovSweep::default(),
            force_uniform_damping: false,
            damping_rel_tol: 1e-6,
        }
    }
}

/// Fit machine speed deviations onto damped sinusoids at the analyzed modes'
/// (sigma, Omega), plus constant and exp(-gamma t) regressors absorbing the
/// mean motion. Linear least squares; amplitudes and phases per machine.
pub fn fit_modal_amplitudes(
    traj: &Trajectory,
    modes: &ModeSet,
    analyzed: &[usize],
    inertias: &[f64],
) -> Result<ModalEnergyReport> {
    if traj.diverged() {
        return Err(NmdError::ShrinkNeedsStableTrajectory(
            "reference trajectory diverged".into(),
        ));
    }
    if analyzed.is_empty() {
        return Err(NmdError::EmptySelection);
    }
    let m = inertias.len();
    if traj.dim() != 2 * m {
        return Err(NmdError::DimensionMismatch {
            expected: 2 * m,
            got: traj.dim(),
            context: "fit_modal_amplitudes",
        });
    }
    let n_modes = analyzed.len();
    let sigmas: Vec<f64> = analyzed
        .iter()
        .map(|&i| modes.modes[i].eigenvalue.re)
        .collect();
    let omegas: Vec<f64> = analyzed
        .iter()
        .map(|&i| modes.modes[i].eigenvalue.im)
        .collect();

    // duplicate frequencies make the basis rank-deficient
    for i in 0..n_modes {
        for j in (i + 1)..n_modes {
            if (omegas[i] - omegas[j]).abs() < 1e-6 * omegas[i].abs().max(1.0) {
                return Err(NmdError::DegenerateFitBasis(analyzed[i], analyzed[j]));
            }
        }
    }

    // window: needs at least 2 periods of the slowest analyzed mode
    let slowest = omegas.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = traj.times().last().unwrap() - traj.times()[0];
    let needed = 2.0 * 2.0 * std::f64::consts::PI / slowest;
    if span < needed {
        return Err(NmdError::Invalid(format!(
            "trajectory span {span:.3} s shorter than two periods ({needed:.3} s) of the slowest mode"
        )));
    }

    let gamma = -modes.mean_eigenvalues.1.re;
    let n_samples = traj.len();
    let n_cols = 2 * n_modes + 2;
    let mut basis = DMatrix::<f64>::zeros(n_samples, n_cols);
    for (s, &t) in traj.times().iter().enumerate() {
        for q in 0..n_modes {
            let env = (sigmas[q] * t).exp();
            basis[(s, 2 * q)] = env * (omegas[q] * t).cos();
            basis[(s, 2 * q + 1)] = env * (omegas[q] * t).sin();
        }
        basis[(s, 2 * n_modes)] = 1.0;
        basis[(s, 2 * n_modes + 1)] = (-gamma * t).exp();
    }
    let svd = basis.clone().svd(true, true);

    let mut amplitudes = vec![vec![0.0; m]; n_modes];
    let mut phases = vec![vec![0.0; m]; n_modes];
    for j in 0..m {
        let target = DVector::from_fn(n_samples, |s, _| traj.state(s)[m + j]);
        let coef = svd
            .solve(&target, 1e-12)
            .map_err(|e| NmdError::Singular(format!("modal fit: {e}")))?;
        for q in 0..n_modes {
            let (c, s_) = (coef[2 * q], coef[2 * q + 1]);
            // c cos(Wt) + s sin(Wt) = A cos(Wt + phi) with A = hypot, phi = atan2(-s, c)
            amplitudes[q][j] = c.hypot(s_);
            phases[q][j] = (-s_).atan2(c);
        }
    }

    let energies: Vec<f64> = (0..n_modes)
        .map(|q| {
            (0..m)
                .map(|j| inertias[j] * amplitudes[q][j] * amplitudes[q][j])
                .sum()
        })
        .collect();
    let total: f64 = energies.iter().sum();
    let ratios: Vec<f64> = energies.iter().map(|e| e / total).collect();

    Ok(ModalEnergyReport {
        mode_indices: analyzed.to_vec(),
        amplitudes,
        phases,
        sigmas,
        omegas,
        energies,
        total_energy: total,
        ratios,
    })
}

/// Build boundaries for one oscillator per the requested methods.
fn boundaries_for(
    osc: &RealOscillator,
    opts: &TsaOptions,
) -> Result<Vec<BoundaryEstimate>> {
    opts.methods
        .iter()
        .map(|&meth| match meth {
            Method::SimSearch => search_boundary_sim(osc, &opts.search),
            Method::FirstIntegral => first_integral_boundary(osc),
            Method::Zubov => {
                let v = zubov_series(osc, &opts.zubov_phi, opts.zubov_order)?;
                let (_, est) = zubov_critical_level(&v, osc, &opts.zubov_phi, &opts.zubov_sweep)?;
                Ok(est)
            }
        })
        .collect()
}

/// Classify a projected trajectory against one boundary: first exit index
/// plus max margin over projectable samples.
fn classify_projection(
    b: &BoundaryEstimate,
    proj: &crate::nmd::ProjectedTrajectory,
) -> (Option<usize>, bool, f64, f64) {
    let mut first_exit = None;
    let mut any_indet = false;
    let mut max_margin: f64 = 0.0;
    for (i, (&w, &bad)) in proj.w.iter().zip(&proj.unprojectable).enumerate() {
        if bad {
            any_indet = true;
            continue;
        }
        match b.classify(w) {
            Classification::Outside => {
                if first_exit.is_none() {
                    first_exit = Some(i);
                }
            }
            Classification::Indeterminate => any_indet = true,
            Classification::Inside => {}
        }
        max_margin = max_margin.max(b.margin(w));
    }
    let clearing_margin = if proj.unprojectable.first() == Some(&false) {
        b.margin(proj.w[0])
    } else {
        f64::NAN
    };
    (first_exit, any_indet, max_margin, clearing_margin)
}

/// The shared pipeline: mode selection, decoupling, boundaries, projection,
/// verdicts. `interest = None` analyzes every mode (procedure 1).
fn run_procedure(
    postfault: &ClassicalSystem,
    scn: &Scenario,
    interest: Option<&[usize]>,
    opts: &TsaOptions,
    shrink: bool,
    procedure: Procedure,
) -> Result<TSAReport> {
    // uniform damping gate
    let sys = match postfault.check_uniform_damping(opts.damping_rel_tol) {
        DampingCheck::Uniform { .. } => postfault.clone(),
        DampingCheck::Violation { ratios, spread } => {
            if !opts.force_uniform_damping {
                return Err(NmdError::NonUniformDamping(format!(
                    "ratios {ratios:?}, relative spread {spread:.3e}; pass force_uniform_damping to proceed"
                )));
            }
            postfault.force_uniform_damping().0
        }
    };

    // post-fault equilibrium and modal structure
    let m = sys.m();
    let guess = vec![0.0; m];
    let eq = sys.find_equilibrium(&guess)?;
    if !eq.is_stable {
        return Err(NmdError::Invalid(
            "post-fault equilibrium is not stable".into(),
        ));
    }
    let modes = eigen_decompose(&sys.jacobian(&eq.delta))?;
    let all_modes: Vec<usize> = (0..modes.n_modes()).collect();
    let analyzed: Vec<usize> = match interest {
        Some(list) => {
            let mut v = list.to_vec();
            v.sort_unstable();
            v.dedup();
            if v.is_empty() {
                return Err(NmdError::EmptySelection);
            }
            v
        }
        None => all_modes.clone(),
    };

    // reduced modal system + decoupling
    let modal = reduce_swing_to_modes(&sys, &eq.delta, &modes, &analyzed, opts.k)?;
    let (chain, decoupled) = nmd_decouple(&modal, opts.k)?;

    // oscillators
    let oscillators: Vec<RealOscillator> = (0..analyzed.len())
        .map(|p| to_real_oscillator(&decoupled, p))
        .collect::<Result<_>>()?;

    // contingency trajectory (machine frame, SEP-shifted)
    let traj = run_contingency(scn)?;

    // shrink ratios need a stable reference trajectory
    let energy = if shrink {
        if traj.diverged() {
            return Err(NmdError::ShrinkNeedsStableTrajectory(
                "the scenario trajectory diverged; shrink ratios are contingency-dependent and need a stable run".into(),
            ));
        }
        let inertias: Vec<f64> = sys.machines.iter().map(|mc| mc.inertia_h).collect();
        Some(fit_modal_amplitudes(&traj, &modes, &analyzed, &inertias)?)
    } else {
        None
    };

    // per-mode work (parallel): boundaries + projection + classification
    let mode_results: Vec<Result<ModeReport>> = oscillators
        .par_iter()
        .enumerate()
        .map(|(p, osc)| {
            let mut bounds = boundaries_for(osc, opts)?;
            let mut shrink_ratio = 1.0;
            if let Some(e) = &energy {
                let r = e.ratios[p];
                shrink_ratio = r;
                // the shrink applies to the level-based boundaries; the
                // sim-search polyline is left untouched (labeled extension
                // available via BoundaryEstimate::apply_shrink)
                for b in &mut bounds {
                    if b.method != Method::SimSearch {
                        *b = b.apply_shrink(r)?;
                    }
                }
            }
            let proj = project_trajectory(&chain, &traj, osc.mode_index)?;
            let unprojectable = proj.unprojectable.iter().filter(|&&b| b).count();

            let mut margins = Vec::new();
            let mut clearing_margins = Vec::new();
            let mut first_exit: Option<(Method, usize)> = None;
            let mut any_indet = unprojectable > 0;
            for b in &bounds {
                let (exit, indet, margin, clearing) = classify_projection(b, &proj);
                margins.push((b.method, margin));
                clearing_margins.push((b.method, clearing));
                any_indet |= indet;
                if let Some(i) = exit {
                    first_exit = match first_exit {
                        None => Some((b.method, i)),
                        Some((_, j)) if i < j => Some((b.method, i)),
                        keep => keep,
                    };
                }
            }
            let verdict = if first_exit.is_some() {
                Verdict::Unstable
            } else if any_indet {
                Verdict::Indeterminate
            } else {
                Verdict::Stable
            };
            Ok(ModeReport {
                mode_index: osc.mode_index,
                frequency_hz: modes.modes[osc.mode_index].frequency_hz,
                damping_ratio: modes.modes[osc.mode_index].damping_ratio,
                verdict,
                margins,
                clearing_margins,
                first_exit,
                unprojectable,
                shrink_ratio,
                boundaries: bounds,
                projected: proj,
            })
        })
        .collect();

    let mut modes_out = Vec::with_capacity(mode_results.len());
    for r in mode_results {
        modes_out.push(r?);
    }

    let overall = if modes_out.iter().any(|m| m.verdict == Verdict::Unstable) {
        Verdict::Unstable
    } else if modes_out.iter().any(|m| m.verdict == Verdict::Indeterminate) {
        Verdict::Indeterminate
    } else {
        Verdict::Stable
    };
    let violating_mode = modes_out
        .iter()
        .filter_map(|m| m.first_exit.map(|(_, idx)| (idx, m.mode_index)))
        .min()
        .map(|(_, mi)| mi);

    Ok(TSAReport {
        procedure,
        k: opts.k,
        methods: opts.methods.clone(),
        overall,
        violating_mode,
        modes: modes_out,
        energy,
        scenario_tag: format!(
            "clearing={}s horizon={}s step={}s",
            scn.clearing_time, scn.horizon, scn.step
        ),
    })
}

/// Procedure 1: analyze all m-1 modes.
pub fn nmd_tsa_1(postfault: &ClassicalSystem, scn: &Scenario, opts: &TsaOptions) -> Result<TSAReport> {
    run_procedure(postfault, scn, None, opts, false, Procedure::Tsa1)
}

/// Procedures 2a/2b: restrict to the modes of interest; with `shrink` the
/// level-based critical values are scaled by the fitted energy ratios.
pub fn nmd_tsa_2(
    postfault: &ClassicalSystem,
    scn: &Scenario,
    interest: &[usize],
    opts: &TsaOptions,
    shrink: bool,
) -> Result<TSAReport> {
    let procedure = if shrink { Procedure::Tsa2b } else { Procedure::Tsa2a };
    run_procedure(postfault, scn, Some(interest), opts, shrink, procedure)
}

/// Exposed for projections and exports outside the full procedures.
pub fn build_chain(
    postfault: &ClassicalSystem,
    interest: Option<&[usize]>,
    opts: &TsaOptions,
) -> Result<(TransformChain, Vec<RealOscillator>, ModeSet)> {
    let m = postfault.m();
    let eq = postfault.find_equilibrium(&vec![0.0; m])?;
    let modes = eigen_decompose(&postfault.jacobian(&eq.delta))?;
    let analyzed: Vec<usize> = match interest {
        Some(list) => list.to_vec(),
        None => (0..modes.n_modes()).collect(),
    };
    let modal = reduce_swing_to_modes(postfault, &eq.delta, &modes, &analyzed, opts.k)?;
    let (chain, decoupled) = nmd_decouple(&modal, opts.k)?;
    let oscillators: Vec<RealOscillator> = (0..analyzed.len())
        .map(|p| to_real_oscillator(&decoupled, p))
        .collect::<Result<_>>()?;
    Ok((chain, oscillators, modes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::smib_benchmark;
    use approx::assert_abs_diff_eq;

    fn smib_modes() -> (crate::modal::ModeSet, f64) {
        let sys = smib_benchmark();
        let eq = sys.find_equilibrium(&[15f64.to_radians(), 0.0]).unwrap();
        let ms = eigen_decompose(&sys.jacobian(&eq.delta)).unwrap();
        let f = ms.modes[0].frequency_hz;
        (ms, f)
    }

    #[test]
    fn fit_single_mode_exact() {
        // synthetic dw_j = 2 exp(-0.1 t) cos(2 pi 0.96 t) recovered exactly
        let (mut ms, _) = smib_modes();
        ms.modes[0].eigenvalue = crate::Complex64::new(-0.1, 2.0 * std::f64::consts::PI * 0.96);
        ms.modes[0].frequency_hz = 0.96;
        let dt = 1e-3;
        let n = 5001;
        let m = 2;
        let mut states = Vec::with_capacity(n * 2 * m);
        let mut times = Vec::with_capacity(n);
        for s in 0..n {
            let t = s as f64 * dt;
            times.push(t);
            let val = 2.0 * (-0.1 * t).exp() * (2.0 * std::f64::consts::PI * 0.96 * t).cos();
            states.extend_from_slice(&[0.0, 0.0, val, val]);
        }
        let traj = crate::sim::Trajectory::new(times, states, 2 * m, crate::sim::Frame::Machine, "synthetic".into());
        let rep = fit_modal_amplitudes(&traj, &ms, &[0], &[3.0, 3.0]).unwrap();
        assert_abs_diff_eq!(rep.amplitudes[0][0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.amplitudes[0][1], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.ratios[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_two_mode_mixture_oracle() {
        // two synthetic modes with known amplitudes: energy ratios match the
        // analytic inertia-weighted squares
        let (mut ms, _) = smib_modes();
        let l0 = crate::Complex64::new(-0.08, 2.0 * std::f64::consts::PI * 1.0);
        let l1 = crate::Complex64::new(-0.08, 2.0 * std::f64::consts::PI * 2.2);
        ms.modes = vec![
            crate::modal::Mode { index: 0, eigenvalue: l0, frequency_hz: 1.0, damping_ratio: 0.01 },
            crate::modal::Mode { index: 1, eigenvalue: l1, frequency_hz: 2.2, damping_ratio: 0.01 },
        ];
        let h = [5.0, 2.0, 7.0];
        let amp = [[1.5, 0.4, 0.9], [0.3, 1.1, 0.2]];
        let dt = 1e-3;
        let n = 5001;
        let m = 3;
        let mut states = Vec::with_capacity(n * 2 * m);
        let mut times = Vec::with_capacity(n);
        for s in 0..n {
            let t = s as f64 * dt;
            times.push(t);
            states.extend_from_slice(&[0.0, 0.0, 0.0]);
            for j in 0..m {
                let mut v = 0.0;
                for (q, l) in [l0, l1].iter().enumerate() {
                    v += amp[q][j] * (l.re * t).exp() * (l.im * t + 0.3 * q as f64).cos();
                }
                states.push(v);
            }
        }
        let traj = crate::sim::Trajectory::new(times, states, 2 * m, crate::sim::Frame::Machine, "synthetic".into());
        let rep = fit_modal_amplitudes(&traj, &ms, &[0, 1], &h).unwrap();
        let e_want: Vec<f64> = (0..2)
            .map(|q| (0..m).map(|j| h[j] * amp[q][j] * amp[q][j]).sum())
            .collect();
        let tot: f64 = e_want.iter().sum();
        for q in 0..2 {
            assert_abs_diff_eq!(rep.ratios[q], e_want[q] / tot, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(rep.ratios.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_basis_rejected() {
        let (mut ms, _) = smib_modes();
        let l = crate::Complex64::new(-0.1, 6.0);
        ms.modes = vec![
            crate::modal::Mode { index: 0, eigenvalue: l, frequency_hz: 0.95, damping_ratio: 0.01 },
            crate::modal::Mode { index: 1, eigenvalue: l, frequency_hz: 0.95, damping_ratio: 0.01 },
        ];
        let dt = 1e-2;
        let n = 1001;
        let times: Vec<f64> = (0..n).map(|s| s as f64 * dt).collect();
        let states = vec![0.0; n * 4];
        let traj = crate::sim::Trajectory::new(times, states, 4, crate::sim::Frame::Machine, "z".into());
        match fit_modal_amplitudes(&traj, &ms, &[0, 1], &[1.0, 1.0]) {
            Err(NmdError::DegenerateFitBasis(0, 1)) => {}
            other => panic!("expected DegenerateFitBasis, got {other:?}"),
        }
    }
}
