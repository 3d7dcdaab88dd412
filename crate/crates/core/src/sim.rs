//! Deterministic fixed-step integration and contingency runs.

use crate::error::{NmdError, Result};
use crate::model::{ClassicalSystem, Scenario};
use crate::nmd::RealOscillator;
use crate::RealVectorField;
use serde::{Deserialize, Serialize};

/// Norm guard: a state beyond this magnitude marks the trajectory divergent.
pub const OVERFLOW_GUARD: f64 = 1e8;

/// Coordinate frame a trajectory lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Machine frame, deviation from a subtracted equilibrium.
    Machine,
    /// Complex modal coordinates (stored as interleaved re/im).
    Modal,
    /// One decoupled oscillator plane (w1, w2).
    DecoupledW,
}

/// Uniformly sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    times: Vec<f64>,
    /// Row-major samples x dim.
    states: Vec<f64>,
    dim: usize,
    pub frame: Frame,
    /// Set when integration stopped at the overflow guard; index of the last
    /// finite sample.
    pub diverged_at: Option<usize>,
    /// Free-form source tag.
    pub source: String,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<f64>, dim: usize, frame: Frame, source: String) -> Self {
        debug_assert_eq!(times.len() * dim, states.len());
        Trajectory {
            times,
            states,
            dim,
            frame,
            diverged_at: None,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Delimited-text export: comment header with frame tag, then
    /// "t, x1, ..., xn" rows.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "# frame: {:?}\n# source: {}\n# diverged_at: {:?}\n",
            self.frame, self.source, self.diverged_at
        ));
        s.push_str("t");
        for i in 1..=self.dim {
            s.push_str(&format!(", x{i}"));
        }
        s.push('\n');
        for i in 0..self.len() {
            s.push_str(&format!("{:.9}", self.times[i]));
            for v in self.state(i) {
                s.push_str(&format!(", {v:.12e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Anything the fixed-step integrator can advance.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
}

impl VectorField for ClassicalSystem {
    fn dim(&self) -> usize {
        2 * self.m()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let rhs = self.swing_rhs(x).expect("dimension fixed by caller");
        out.copy_from_slice(&rhs);
    }
}

impl VectorField for RealVectorField {
    fn dim(&self) -> usize {
        self.nvars()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let v = self.evaluate(x).expect("dimension fixed by caller");
        out.copy_from_slice(&v);
    }
}

impl VectorField for RealOscillator {
    fn dim(&self) -> usize {
        2
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let v = self.eval([x[0], x[1]]);
        out.copy_from_slice(&v);
    }
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.1)(x, out)
    }
}

/// Classical fixed-step fourth-order Runge-Kutta from `x0` over `horizon`.
/// Sampling includes t = 0; halts early with a divergence marker when the
/// state norm passes the overflow guard.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    step: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(NmdError::NonFiniteState);
    }
    if !(step > 0.0) || horizon < step {
        return Err(NmdError::Invalid("need step > 0 and horizon >= step".into()));
    }
    let n = field.dim();
    if x0.len() != n {
        return Err(NmdError::DimensionMismatch {
            expected: n,
            got: x0.len(),
            context: "integrate",
        });
    }
    let steps = (horizon / step).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.extend_from_slice(&x);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut diverged_at = None;

    'outer: for s in 1..=steps {
        field.eval_into(&x, &mut k1);
        for i in 0..n {
            xt[i] = x[i] + 0.5 * step * k1[i];
        }
        field.eval_into(&xt, &mut k2);
        for i in 0..n {
            xt[i] = x[i] + 0.5 * step * k2[i];
        }
        field.eval_into(&xt, &mut k3);
        for i in 0..n {
            xt[i] = x[i] + step * k3[i];
        }
        field.eval_into(&xt, &mut k4);
        for i in 0..n {
            x[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for &v in x.iter() {
            if !v.is_finite() || v.abs() > OVERFLOW_GUARD {
                diverged_at = Some(s - 1);
                break 'outer;
            }
        }
        times.push(s as f64 * step);
        states.extend_from_slice(&x);
    }

    let mut traj = Trajectory::new(times, states, n, Frame::Machine, String::new());
    traj.diverged_at = diverged_at;
    Ok(traj)
}

/// Simulate a contingency: start at the pre-fault equilibrium, ride the
/// fault-on system for the clearing time, then the post-fault system for the
/// rest of the horizon. Returns the post-fault segment with the post-fault
/// equilibrium subtracted (origin = post-fault SEP), times restarting at 0.
pub fn run_contingency(scn: &Scenario) -> Result<Trajectory> {
    scn.validate()?;
    let m = scn.prefault.m();
    let pre_eq = scn.prefault.find_equilibrium(&vec![0.0; m])?;
    let mut x0 = pre_eq.delta.clone();
    x0.extend(std::iter::repeat(0.0).take(m));

    // fault-on leg
    let fault_traj = integrate(&scn.faulton, &x0, scn.step, scn.clearing_time)?;
    if fault_traj.diverged() {
        return Err(NmdError::Invalid(
            "trajectory diverged during the fault-on interval".into(),
        ));
    }
    let x_clear = fault_traj.last_state().to_vec();

    // post-fault SEP anchored at the pre-fault reference angle
    let post_eq = scn.postfault.find_equilibrium(&pre_eq.delta)?;

    let post_horizon = scn.horizon - scn.clearing_time;
    let mut traj = integrate(&scn.postfault, &x_clear, scn.step, post_horizon)?;

    // subtract the SEP
    let dim = traj.dim();
    for i in 0..traj.len() {
        let base = i * dim;
        for j in 0..m {
            traj.states[base + j] -= post_eq.delta[j];
        }
    }
    traj.frame = Frame::Machine;
    traj.source = "contingency post-fault segment (SEP-shifted)".into();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::smib_benchmark;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_field_constant() {
        let f = (2usize, |_x: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 0.0;
        });
        let t = integrate(&f, &[1.0, -2.0], 0.1, 1.0).unwrap();
        assert_eq!(t.len(), 11);
        for i in 0..t.len() {
            assert_eq!(t.state(i), &[1.0, -2.0]);
        }
    }

    #[test]
    fn undamped_oscillator_amplitude() {
        // x'' = -w^2 x over exactly one period at step = T/1000
        let w = 3.0;
        let f = (2usize, move |x: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = -w * w * x[0];
        });
        let period = 2.0 * std::f64::consts::PI / w;
        let t = integrate(&f, &[1.0, 0.0], period / 1000.0, period).unwrap();
        let last = t.last_state();
        assert_abs_diff_eq!(last[0], 1.0, epsilon = 1e-8);
        assert!(last[1].abs() < 1e-7);
    }

    #[test]
    fn rk4_richardson_convergence() {
        // halving the step cuts the endpoint error ~16x on the SMIB system
        let sys = smib_benchmark();
        let ds = 15f64.to_radians();
        let x0 = [ds + 0.5, 0.0, 0.0, 0.0];
        let horizon = 1.0;
        let endpoint = |step: f64| -> Vec<f64> {
            integrate(&sys, &x0, step, horizon).unwrap().last_state().to_vec()
        };
        let fine = endpoint(1e-5);
        let err = |step: f64| -> f64 {
            endpoint(step)
                .iter()
                .zip(&fine)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err(4e-3);
        let e2 = err(2e-3);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn overflow_guard_marks_divergence() {
        let f = (1usize, |x: &[f64], out: &mut [f64]| {
            out[0] = 10.0 * x[0];
        });
        let t = integrate(&f, &[1.0], 0.01, 10.0).unwrap();
        assert!(t.diverged());
        assert!(t.len() < 1001);
        assert!(t.last_state()[0].is_finite());
    }

    #[test]
    fn null_contingency_stays_at_origin() {
        let sys = smib_benchmark();
        let scn = Scenario {
            prefault: sys.clone(),
            faulton: sys.clone(),
            postfault: sys,
            clearing_time: 0.01,
            horizon: 1.0,
            step: 1e-3,
        };
        let t = run_contingency(&scn).unwrap();
        for i in 0..t.len() {
            for v in t.state(i) {
                assert!(v.abs() < 1e-9, "sample {i} deviates: {v}");
            }
        }
    }

    #[test]
    fn energy_conservation_lossless_undamped() {
        // kinetic + potential constant to 1e-6 relative over 5 s
        let mut sys = smib_benchmark();
        for mc in &mut sys.machines {
            mc.damping_d = 0.0;
        }
        let ds = 15f64.to_radians();
        let x0 = [ds + 0.8, 0.0, 0.0, 0.0];
        let t = integrate(&sys, &x0, 1e-3, 5.0).unwrap();
        let energy = |x: &[f64]| -> f64 {
            let m = 2;
            let mut e = 0.0;
            for i in 0..m {
                e += sys.machines[i].m() * x[m + i] * x[m + i] / (2.0 * sys.omega_s);
                e -= sys.machines[i].pmech * x[i];
            }
            // lossless potential: -sum_{i<j} a_ij cos(di - dj)
            e -= sys.network.a[0][1] * (x[0] - x[1]).cos();
            e
        };
        let e0 = energy(t.state(0));
        let mut worst: f64 = 0.0;
        for i in 0..t.len() {
            worst = worst.max((energy(t.state(i)) - e0).abs());
        }
        assert!(worst / e0.abs() < 1e-6, "energy drift {worst} vs {e0}");
    }
}
