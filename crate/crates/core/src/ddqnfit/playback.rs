//! Load-only simulation driven by a recorded bus voltage.
//!
//! The load's continuous states are integrated with classical RK4 on the
//! recording grid. Voltage at stage points comes from a cubic through the
//! nearest samples of the same network topology: samples recorded after an
//! event start a new segment, and the step ending on an event extrapolates
//! the previous segment because the network only changes at its end.

use std::collections::BTreeSet;

use num_complex::Complex64;

use super::FitError;
use crate::loadmodels::{DynamicLoad, LoadModelSpec};
use crate::tdsim::{Event, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageRecord {
    pub dt: f64,
    pub v: Vec<Complex64>,
    /// Sample indices recorded just after an event.
    pub breaks: BTreeSet<usize>,
}

impl VoltageRecord {
    /// Voltage of bus `bus` in `tr`, with segment breaks at `events`.
    pub fn from_trajectory(tr: &Trajectory, bus: u32, events: &[Event]) -> Result<Self, FitError> {
        let slot = tr
            .bus_slot(bus)
            .ok_or_else(|| FitError::InvalidProblem(format!("reference has no bus {bus}")))?;
        if tr.len() < 2 {
            return Err(FitError::InvalidProblem("reference needs at least two samples".into()));
        }
        let dt = tr.times[1] - tr.times[0];
        let uniform = tr
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        if !(dt > 0.0) || !uniform {
            return Err(FitError::InvalidProblem("reference time grid must be uniform".into()));
        }
        let v = tr.v_mag[slot]
            .iter()
            .zip(&tr.v_ang[slot])
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        let t0 = tr.times[0];
        let breaks = events
            .iter()
            .map(|e| ((e.time - t0) / dt).round())
            .filter(|k| *k >= 1.0 && (*k as usize) < tr.len())
            .map(|k| k as usize)
            .collect();
        Ok(Self { dt, v, breaks })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    fn segment_start(&self, j: usize) -> usize {
        self.breaks.range(..=j).next_back().copied().unwrap_or(0)
    }

    fn segment_end(&self, j: usize) -> usize {
        self.breaks
            .range(j + 1..)
            .next()
            .map(|b| b - 1)
            .unwrap_or(self.v.len() - 1)
    }

    /// Voltage at `t_j + theta dt` during the step from sample `j`.
    pub fn at(&self, j: usize, theta: f64) -> Complex64 {
        if theta == 0.0 {
            return self.v[j];
        }
        let lo = self.segment_start(j);
        let hi = if self.breaks.contains(&(j + 1)) {
            j
        } else {
            if theta == 1.0 {
                return self.v[j + 1];
            }
            self.segment_end(j)
        };
        // Four nodes around the step, shifted to stay inside [lo, hi].
        let n = (hi - lo + 1).min(4);
        let mut first = j.saturating_sub(1).max(lo);
        if first + n - 1 > hi {
            first = hi + 1 - n;
        }
        let x = j as f64 + theta;
        let mut acc = Complex64::new(0.0, 0.0);
        for a in first..first + n {
            let mut w = 1.0;
            for b in first..first + n {
                if a != b {
                    w *= (x - b as f64) / (a as f64 - b as f64);
                }
            }
            acc += self.v[a] * w;
        }
        acc
    }
}

/// Consumption series of `spec` initialized at the first sample to `p0 + j q0`.
pub fn playback(
    spec: &LoadModelSpec,
    rec: &VoltageRecord,
    p0: f64,
    q0: f64,
) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    let mut load = spec
        .instantiate(rec.v[0], p0, q0)
        .map_err(|e| FitError::Simulation(e.to_string()))?;
    let n = load.n_states();
    let mut x = load.initial_state();
    let dt = rec.dt;
    let mut p = Vec::with_capacity(rec.len());
    let mut q = Vec::with_capacity(rec.len());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for j in 0..rec.len() {
        let vj = rec.v[j];
        if j > 0 {
            load.update_discrete(&x, vj, dt);
        }
        let (pj, qj) = load.evaluate(&x, vj, Some(&mut k1));
        if !(pj.is_finite() && qj.is_finite()) {
            return Err(FitError::Simulation(format!("non-finite power at sample {j}")));
        }
        p.push(pj);
        q.push(qj);
        if j + 1 == rec.len() || n == 0 {
            continue;
        }
        let vm = rec.at(j, 0.5);
        let ve = rec.at(j, 1.0);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        load.derivatives(&tmp, vm, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        load.derivatives(&tmp, vm, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        load.derivatives(&tmp, ve, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|s| !s.is_finite()) {
            return Err(FitError::Simulation(format!("non-finite state after sample {j}")));
        }
    }
    Ok((p, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(f: impl Fn(f64) -> f64, n: usize, breaks: &[usize]) -> VoltageRecord {
        VoltageRecord {
            dt: 0.1,
            v: (0..n).map(|k| Complex64::new(f(k as f64), 0.0)).collect(),
            breaks: breaks.iter().copied().collect(),
        }
    }

    #[test]
    fn cubic_is_reproduced_inside_a_segment() {
        let f = |x: f64| 1.0 + 0.01 * x - 0.002 * x * x + 1e-4 * x * x * x;
        let r = record(f, 12, &[]);
        for j in 0..11 {
            assert!((r.at(j, 0.5).re - f(j as f64 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn step_into_a_break_extrapolates_the_old_segment() {
        let f = |x: f64| if x < 6.0 { 1.0 - 0.01 * x } else { 0.2 };
        let r = record(f, 12, &[6]);
        assert!((r.at(5, 0.5).re - f(5.5)).abs() < 1e-12);
        assert!((r.at(5, 1.0).re - (1.0 - 0.06)).abs() < 1e-12);
        assert!((r.at(6, 0.5).re - 0.2).abs() < 1e-12);
    }

    #[test]
    fn static_load_follows_voltage_exactly() {
        let r = record(|x| 1.0 - 0.02 * x, 10, &[]);
        let spec = LoadModelSpec::static_preset("100Z");
        let (p, q) = playback(&spec, &r, 0.5, 0.2).unwrap();
        for (k, v) in r.v.iter().enumerate() {
            assert!((p[k] - 0.5 * v.norm_sqr()).abs() < 1e-12);
            assert!((q[k] - 0.2 * v.norm_sqr()).abs() < 1e-12);
        }
    }
}
