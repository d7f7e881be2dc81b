use std::f64::consts::PI;

use num_complex::Complex64;

use super::network::Network;
use super::trajectory::Trajectory;
use super::{
    validate_events, Event, EventKind, GeneratorState, SimError, SimulationConfig,
    StabilityCriteria, Verdict,
};
use crate::loadmodels::{DynamicLoad, LoadInstance};
use crate::netcase::{build_ybus, solve_powerflow, NetworkCase, PowerFlowSolution};

#[derive(Debug, Clone)]
struct Machine {
    bus: usize,
    h: f64,
    d: f64,
    xdp: f64,
    pm: f64,
    e_prime: f64,
}

#[derive(Debug, Clone)]
struct LoadSlot {
    bus: usize,
    inst: LoadInstance,
    offset: usize,
    n: usize,
}

/// Complete dynamic state of one simulation run plus the network it lives on.
pub struct Simulator {
    case: NetworkCase,
    cfg: SimulationConfig,
    omega_s: f64,
    machines: Vec<Machine>,
    gen_labels: Vec<String>,
    loads: Vec<LoadSlot>,
    load_buses: Vec<usize>,
    const_y: Vec<Complex64>,
    faults: Vec<(usize, Complex64)>,
    net: Network,
    y: Vec<f64>,
    v: Vec<Complex64>,
    t: f64,
    t_clear: Option<f64>,
    monitored: Vec<usize>,
    max_residual: f64,
}

/// Back-solve generator internal voltages and initialize every load model
/// at the power-flow operating point.
///
/// Buses without a load model keep their load as a constant impedance.
pub fn initialize_dynamics(
    case: &NetworkCase,
    pf: &PowerFlowSolution,
    cfg: &SimulationConfig,
) -> Result<Simulator, SimError> {
    cfg.validate()?;
    if !pf.converged {
        return Err(SimError::InvalidConfig("power flow did not converge".into()));
    }
    let n = case.n_buses();
    let v0 = pf.voltages();

    let mut machines = Vec::new();
    let mut y = Vec::new();
    let mut gen_labels: Vec<String> = Vec::new();
    for (k, g) in case.generators.iter().enumerate() {
        let bus = case.try_bus_index(g.bus)?;
        let s = Complex64::new(pf.p_gen[k], pf.q_gen[k]);
        let i = (s / v0[bus]).conj();
        let xdp = g.xdp_sys();
        let e = v0[bus] + Complex64::new(0.0, xdp) * i;
        machines.push(Machine {
            bus,
            h: g.h_sys(),
            d: g.d_sys(),
            xdp,
            pm: (e * i.conj()).re,
            e_prime: e.norm(),
        });
        y.extend([e.arg(), 1.0]);
        let mut label = format!("g{}", g.bus);
        if gen_labels.contains(&label) {
            label = format!("g{}_{k}", g.bus);
        }
        gen_labels.push(label);
    }

    let mut loads = Vec::new();
    let mut const_y = vec![Complex64::new(0.0, 0.0); n];
    for (i, b) in case.buses.iter().enumerate() {
        match case.load_models.get(&b.id) {
            Some(spec) => {
                let inst = spec
                    .instantiate(v0[i], b.p_load, b.q_load)
                    .map_err(|source| SimError::Init { bus: b.id, source })?;
                let x0 = inst.initial_state();
                loads.push(LoadSlot {
                    bus: i,
                    offset: y.len(),
                    n: x0.len(),
                    inst,
                });
                y.extend(x0);
            }
            None => {
                const_y[i] = Complex64::new(b.p_load, -b.q_load) / v0[i].norm_sqr();
            }
        }
    }
    let load_buses = loads.iter().map(|l| l.bus).collect();

    let monitored_ids: Vec<u32> = if !cfg.monitored.is_empty() {
        cfg.monitored.clone()
    } else if !case.load_models.is_empty() {
        case.load_models.keys().copied().collect()
    } else {
        case.buses
            .iter()
            .filter(|b| b.p_load != 0.0 || b.q_load != 0.0)
            .map(|b| b.id)
            .collect()
    };
    let monitored = monitored_ids
        .iter()
        .map(|&id| case.try_bus_index(id))
        .collect::<Result<Vec<_>, _>>()?;

    let mut sim = Simulator {
        case: case.clone(),
        cfg: cfg.clone(),
        omega_s: 2.0 * PI * case.frequency_hz,
        machines,
        gen_labels,
        loads,
        load_buses,
        const_y,
        faults: Vec::new(),
        net: Network::new(nalgebra::DMatrix::zeros(0, 0)),
        y,
        v: v0,
        t: 0.0,
        t_clear: None,
        monitored,
        max_residual: 0.0,
    };
    sim.rebuild_network();
    Ok(sim)
}

impl Simulator {
    fn rebuild_network(&mut self) {
        let mut y = build_ybus(&self.case);
        for m in &self.machines {
            y[(m.bus, m.bus)] += Complex64::new(0.0, -1.0 / m.xdp);
        }
        for (i, yc) in self.const_y.iter().enumerate() {
            y[(i, i)] += yc;
        }
        for &(i, yf) in &self.faults {
            y[(i, i)] += yf;
        }
        self.net = Network::new(y);
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn voltages(&self) -> &[Complex64] {
        &self.v
    }

    pub fn generator_states(&self) -> Vec<GeneratorState> {
        self.machines
            .iter()
            .enumerate()
            .map(|(k, m)| GeneratorState {
                delta: self.y[2 * k],
                omega: self.y[2 * k + 1],
                e_prime: m.e_prime,
            })
            .collect()
    }

    /// Largest network residual accepted so far.
    pub fn max_alg_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Electrical power of each machine at the current network solution.
    pub fn electrical_power(&self) -> Vec<f64> {
        self.machines
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let e = Complex64::from_polar(m.e_prime, self.y[2 * k]);
                let i = (e - self.v[m.bus]) / Complex64::new(0.0, m.xdp);
                (e * i.conj()).re
            })
            .collect()
    }

    pub fn mechanical_power(&self) -> Vec<f64> {
        self.machines.iter().map(|m| m.pm).collect()
    }

    pub fn inertia(&self) -> Vec<f64> {
        self.machines.iter().map(|m| m.h).collect()
    }

    /// Solve the network for states `y` and return their time derivatives.
    fn eval(&mut self, y: &[f64]) -> Result<Vec<f64>, SimError> {
        let n = self.case.n_buses();
        let mut i_src = vec![Complex64::new(0.0, 0.0); n];
        for (k, m) in self.machines.iter().enumerate() {
            let e = Complex64::from_polar(m.e_prime, y[2 * k]);
            i_src[m.bus] += e / Complex64::new(0.0, m.xdp);
        }
        let loads = &self.loads;
        let cur = |k: usize, vb: Complex64| {
            let l = &loads[k];
            if vb.norm() < 1e-9 {
                return Complex64::new(0.0, 0.0);
            }
            let (p, q) = l.inst.power(&y[l.offset..l.offset + l.n], vb);
            (Complex64::new(p, q) / vb).conj()
        };
        let mut v = self.v.clone();
        let res = self
            .net
            .solve(&mut v, &i_src, &self.load_buses, cur, self.cfg.solver_tol, self.cfg.max_alg_iter)
            .map_err(|f| SimError::AlgebraicDivergence {
                t: self.t,
                residual: f.residual,
            })?;
        self.max_residual = self.max_residual.max(res);
        self.v = v;

        let mut dy = vec![0.0; y.len()];
        for (k, m) in self.machines.iter().enumerate() {
            let e = Complex64::from_polar(m.e_prime, y[2 * k]);
            let i = (e - self.v[m.bus]) / Complex64::new(0.0, m.xdp);
            let pe = (e * i.conj()).re;
            let slip = y[2 * k + 1] - 1.0;
            dy[2 * k] = self.omega_s * slip;
            dy[2 * k + 1] = (m.pm - pe - m.d * slip) / (2.0 * m.h);
        }
        for l in &self.loads {
            if l.n > 0 {
                l.inst.derivatives(
                    &y[l.offset..l.offset + l.n],
                    self.v[l.bus],
                    &mut dy[l.offset..l.offset + l.n],
                );
            }
        }
        if dy.iter().any(|d| !d.is_finite()) {
            return Err(SimError::AlgebraicDivergence {
                t: self.t,
                residual: f64::NAN,
            });
        }
        Ok(dy)
    }

    /// Time derivatives of every state at the current point.
    pub fn state_derivatives(&mut self) -> Result<Vec<f64>, SimError> {
        let y = self.y.clone();
        self.eval(&y)
    }

    fn rk4(&mut self, k1: Vec<f64>) -> Result<(), SimError> {
        let dt = self.cfg.dt;
        let y0 = self.y.clone();
        let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y0.iter().zip(k).map(|(y, k)| y + a * k).collect() };
        let k2 = self.eval(&axpy(0.5 * dt, &k1))?;
        let k3 = self.eval(&axpy(0.5 * dt, &k2))?;
        let k4 = self.eval(&axpy(dt, &k3))?;
        for i in 0..y0.len() {
            self.y[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.t += dt;
        if self.y.iter().any(|x| !x.is_finite()) {
            return Err(SimError::AlgebraicDivergence {
                t: self.t,
                residual: f64::NAN,
            });
        }
        Ok(())
    }

    /// One RK4 step of all differential states (no event or switching logic).
    pub fn step(&mut self) -> Result<(), SimError> {
        let k1 = self.state_derivatives()?;
        self.rk4(k1)
    }

    pub fn apply_event(&mut self, kind: &EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::ThreePhaseFault {
                bus,
                fault_admittance,
            } => {
                let i = self.case.try_bus_index(*bus)?;
                self.faults.push((i, *fault_admittance));
            }
            EventKind::FaultClear => {
                self.faults.clear();
                self.t_clear = Some(self.t);
            }
            EventKind::BranchTrip { branch } => {
                let br = self
                    .case
                    .branches
                    .get_mut(*branch)
                    .ok_or_else(|| SimError::InvalidEvent(format!("branch {branch} does not exist")))?;
                if !br.in_service {
                    return Err(SimError::InvalidEvent(format!("branch {branch} already out of service")));
                }
                br.in_service = false;
                self.t_clear = Some(self.t);
            }
        }
        self.rebuild_network();
        Ok(())
    }

    fn update_discrete(&mut self) -> bool {
        let dt = self.cfg.dt;
        let mut changed = false;
        for l in &mut self.loads {
            changed |= l.inst.update_discrete(&self.y[l.offset..l.offset + l.n], self.v[l.bus], dt);
        }
        changed
    }

    fn new_trajectory(&self) -> Trajectory {
        let ids = self.monitored.iter().map(|&i| self.case.buses[i].id).collect();
        Trajectory::new(ids, self.gen_labels.clone())
    }

    fn bus_consumption(&self, i: usize) -> (f64, f64) {
        if let Some(l) = self.loads.iter().find(|l| l.bus == i) {
            return l.inst.power(&self.y[l.offset..l.offset + l.n], self.v[i]);
        }
        let s = self.const_y[i].conj() * self.v[i].norm_sqr();
        (s.re, s.im)
    }

    fn record(&self, tr: &mut Trajectory) {
        tr.times.push(self.t);
        for (slot, &i) in self.monitored.iter().enumerate() {
            let (p, q) = self.bus_consumption(i);
            tr.v_mag[slot].push(self.v[i].norm());
            tr.v_ang[slot].push(self.v[i].arg());
            tr.p_load[slot].push(p);
            tr.q_load[slot].push(q);
        }
        for k in 0..self.machines.len() {
            tr.delta[k].push(self.y[2 * k]);
            tr.omega[k].push(self.y[2 * k + 1]);
        }
    }

    fn violation(&self, criteria: &StabilityCriteria) -> Option<Verdict> {
        if criteria.check_angle && !self.machines.is_empty() {
            let deltas = (0..self.machines.len()).map(|k| self.y[2 * k]);
            let (lo, hi) = deltas.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
            if hi - lo > criteria.max_angle_spread {
                return Some(Verdict::AngleUnstable { at: self.t });
            }
        }
        let t_ref = self.t_clear.unwrap_or(0.0);
        if criteria.check_voltage
            && self.faults.is_empty()
            && self.t > t_ref + criteria.v_recovery_deadline
            && self
                .monitored
                .iter()
                .any(|&i| self.v[i].norm() < criteria.v_recovery_floor)
        {
            return Some(Verdict::VoltageUnstable { at: self.t });
        }
        None
    }
}

/// Run events on an initialized simulator and judge stability.
///
/// Events land on the nearest step boundary and must lie on the `dt`
/// grid. Numerical failure ends the run with a `NumericalFailure` verdict
/// and the trajectory recorded up to that point.
pub fn simulate_from(
    mut sim: Simulator,
    events: &[Event],
    criteria: &StabilityCriteria,
) -> Result<(Trajectory, Verdict), SimError> {
    if !sim.cfg.allow_uncleared {
        validate_events(events)?;
    }
    let dt = sim.cfg.dt;
    let ratio = sim.cfg.validate()?;
    let n_steps = (sim.cfg.t_end / dt).round() as usize;
    let mut ev_steps = Vec::with_capacity(events.len());
    for (k, e) in events.iter().enumerate() {
        let s = e.time / dt;
        if (s - s.round()).abs() > 1e-6 {
            return Err(SimError::InvalidEvent(format!(
                "event {k} at t = {} is not on the dt grid",
                e.time
            )));
        }
        ev_steps.push(s.round() as usize);
    }
    let mut tr = sim.new_trajectory();
    let mut next_ev = 0;
    let mut verdict = Verdict::Stable;
    for k in 0..=n_steps {
        sim.t = k as f64 * dt;
        while next_ev < events.len() && ev_steps[next_ev] <= k {
            sim.apply_event(&events[next_ev].kind)?;
            next_ev += 1;
        }
        let mut k1 = match sim.state_derivatives() {
            Ok(d) => d,
            Err(e) => {
                verdict = Verdict::NumericalFailure {
                    at: sim.t,
                    reason: e.to_string(),
                };
                break;
            }
        };
        if k > 0 && sim.update_discrete() {
            k1 = match sim.state_derivatives() {
                Ok(d) => d,
                Err(e) => {
                    verdict = Verdict::NumericalFailure {
                        at: sim.t,
                        reason: e.to_string(),
                    };
                    break;
                }
            };
        }
        if let Some(v) = sim.violation(criteria) {
            sim.record(&mut tr);
            if sim.cfg.stop_on_violation {
                verdict = v;
                break;
            }
            if verdict.is_stable() {
                verdict = v;
            }
        } else if k % ratio == 0 {
            sim.record(&mut tr);
        }
        if k == n_steps {
            break;
        }
        if let Err(e) = sim.rk4(k1) {
            verdict = Verdict::NumericalFailure {
                at: sim.t,
                reason: e.to_string(),
            };
            break;
        }
    }
    tr.t_clear = sim.t_clear;
    tr.fault_open = !sim.faults.is_empty();
    Ok((tr, verdict))
}

/// Power flow, initialization and a full run in one call.
pub fn simulate(
    case: &NetworkCase,
    events: &[Event],
    config: &SimulationConfig,
    criteria: &StabilityCriteria,
) -> Result<(Trajectory, Verdict), SimError> {
    let pf = solve_powerflow(case, 1e-10, 30)?;
    let sim = initialize_dynamics(case, &pf, config)?;
    simulate_from(sim, events, criteria)
}
