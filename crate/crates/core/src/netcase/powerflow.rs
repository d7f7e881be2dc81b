use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{build_ybus, BusKind, NetError, NetworkCase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub enforce_q_limits: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 30,
            enforce_q_limits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Per generator, in case order.
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub converged: bool,
    pub max_mismatch: f64,
    pub iterations: usize,
    /// Bus types after Q-limit switching.
    pub bus_kinds: Vec<BusKind>,
    /// Max mismatch at the start of every iteration.
    pub trace: Vec<f64>,
}

impl PowerFlowSolution {
    pub fn voltage(&self, idx: usize) -> Complex64 {
        Complex64::from_polar(self.v_mag[idx], self.v_ang[idx])
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        (0..self.v_mag.len()).map(|i| self.voltage(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub s_from: Complex64,
    pub s_to: Complex64,
}

impl BranchFlow {
    /// Larger of the two end MVA flows.
    pub fn mva(&self) -> f64 {
        self.s_from.norm().max(self.s_to.norm())
    }

    pub fn loss(&self) -> Complex64 {
        self.s_from + self.s_to
    }
}

pub fn solve_powerflow(
    case: &NetworkCase,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution, NetError> {
    solve_powerflow_with(
        case,
        &PowerFlowOptions {
            tol,
            max_iter,
            enforce_q_limits: true,
        },
    )
}

struct BusGen {
    p: f64,
    q_min: f64,
    q_max: f64,
    v_set: f64,
}

/// Full Newton-Raphson on the polar power mismatch equations.
pub fn solve_powerflow_with(
    case: &NetworkCase,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, NetError> {
    if !(opts.tol > 0.0) {
        return Err(NetError::Validation("power-flow tolerance must be > 0".into()));
    }
    let n = case.n_buses();
    let y = build_ybus(case);
    let slack = case
        .slack_index()
        .ok_or_else(|| NetError::Validation("case has no slack bus".into()))?;

    let bus_gen: Vec<Option<BusGen>> = case
        .buses
        .iter()
        .map(|b| {
            let mut it = case.generators_at(b.id).peekable();
            let first = it.peek()?.1.v_set;
            let mut acc = BusGen {
                p: 0.0,
                q_min: 0.0,
                q_max: 0.0,
                v_set: first,
            };
            for (_, g) in it {
                acc.p += g.p_set;
                acc.q_min += g.q_min;
                acc.q_max += g.q_max;
            }
            Some(acc)
        })
        .collect();

    let mut kinds: Vec<BusKind> = case.buses.iter().map(|b| b.kind).collect();
    let mut q_fixed: Vec<f64> = vec![0.0; n];
    let mut flips = vec![0usize; n];
    let p_spec: Vec<f64> = case
        .buses
        .iter()
        .zip(&bus_gen)
        .map(|(b, g)| g.as_ref().map_or(0.0, |g| g.p) - b.p_load)
        .collect();

    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    for (i, b) in case.buses.iter().enumerate() {
        if case.seed_profile {
            vm[i] = b.v_mag;
            va[i] = b.v_ang;
        }
        if b.kind == BusKind::Slack {
            va[i] = b.v_ang;
        }
        if let Some(g) = &bus_gen[i] {
            vm[i] = g.v_set;
        }
    }

    let mut trace = Vec::new();
    let mut iterations = 0usize;
    loop {
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        let cur = mat_vec(&y, &v);
        let s: Vec<Complex64> = (0..n).map(|i| v[i] * cur[i].conj()).collect();

        let q_spec = |i: usize, kinds: &[BusKind]| -> f64 {
            let load = case.buses[i].q_load;
            if kinds[i] == BusKind::PQ && case.buses[i].kind == BusKind::PV {
                q_fixed[i] - load
            } else {
                -load
            }
        };
        let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::PQ).collect();

        let mut f = Vec::with_capacity(pvpq.len() + pq.len());
        for &i in &pvpq {
            f.push(s[i].re - p_spec[i]);
        }
        for &i in &pq {
            f.push(s[i].im - q_spec(i, &kinds));
        }
        let max_mis = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        trace.push(max_mis);
        if !max_mis.is_finite() {
            return Err(NetError::NonConvergence {
                iterations,
                last: max_mis,
                trace,
            });
        }

        if max_mis <= opts.tol {
            let switched = opts.enforce_q_limits
                && switch_pass(case, &bus_gen, &s, &vm, &mut kinds, &mut q_fixed, &mut flips);
            if !switched {
                let (p_gen, q_gen) = distribute_generation(case, &s);
                return Ok(PowerFlowSolution {
                    v_mag: vm,
                    v_ang: va,
                    p_gen,
                    q_gen,
                    converged: true,
                    max_mismatch: max_mis,
                    iterations,
                    bus_kinds: kinds,
                    trace,
                });
            }
            for i in 0..n {
                if kinds[i] == BusKind::PV {
                    vm[i] = bus_gen[i].as_ref().map_or(vm[i], |g| g.v_set);
                }
            }
            if iterations >= opts.max_iter {
                return Err(NetError::NonConvergence {
                    iterations,
                    last: max_mis,
                    trace,
                });
            }
            continue;
        }
        if iterations >= opts.max_iter {
            return Err(NetError::NonConvergence {
                iterations,
                last: max_mis,
                trace,
            });
        }

        let jac = jacobian(&y, &v, &cur, &pvpq, &pq);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let Some(dx) = jac.lu().solve(&rhs) else {
            return Err(NetError::NonConvergence {
                iterations,
                last: max_mis,
                trace,
            });
        };
        for (k, &i) in pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + k];
        }
        iterations += 1;
    }
}

const MAX_FLIPS: usize = 4;

/// One PV<->PQ switching pass. Returns whether any bus changed type.
fn switch_pass(
    case: &NetworkCase,
    bus_gen: &[Option<BusGen>],
    s: &[Complex64],
    vm: &[f64],
    kinds: &mut [BusKind],
    q_fixed: &mut [f64],
    flips: &mut [usize],
) -> bool {
    let mut changed = false;
    for (i, b) in case.buses.iter().enumerate() {
        if b.kind != BusKind::PV || flips[i] >= MAX_FLIPS {
            continue;
        }
        let Some(g) = &bus_gen[i] else { continue };
        match kinds[i] {
            BusKind::PV => {
                let q = s[i].im + b.q_load;
                if q > g.q_max + 1e-9 {
                    kinds[i] = BusKind::PQ;
                    q_fixed[i] = g.q_max;
                } else if q < g.q_min - 1e-9 {
                    kinds[i] = BusKind::PQ;
                    q_fixed[i] = g.q_min;
                } else {
                    continue;
                }
            }
            BusKind::PQ => {
                let at_max = q_fixed[i] == g.q_max;
                let back = if at_max {
                    vm[i] > g.v_set + 1e-9
                } else {
                    vm[i] < g.v_set - 1e-9
                };
                if !back {
                    continue;
                }
                kinds[i] = BusKind::PV;
            }
            BusKind::Slack => continue,
        }
        flips[i] += 1;
        changed = true;
    }
    changed
}

fn distribute_generation(case: &NetworkCase, s: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let ng = case.generators.len();
    let mut p_gen = vec![0.0; ng];
    let mut q_gen = vec![0.0; ng];
    for (i, b) in case.buses.iter().enumerate() {
        let gens: Vec<usize> = case.generators_at(b.id).map(|(k, _)| k).collect();
        if gens.is_empty() {
            continue;
        }
        let p_total = s[i].re + b.p_load;
        let q_total = s[i].im + b.q_load;
        if b.kind == BusKind::Slack {
            let base: f64 = gens.iter().map(|&k| case.generators[k].mva_base).sum();
            for &k in &gens {
                p_gen[k] = p_total * case.generators[k].mva_base / base;
            }
        } else {
            for &k in &gens {
                p_gen[k] = case.generators[k].p_set;
            }
        }
        let span: f64 = gens
            .iter()
            .map(|&k| case.generators[k].q_max - case.generators[k].q_min)
            .sum();
        for &k in &gens {
            q_gen[k] = if span > 0.0 {
                q_total * (case.generators[k].q_max - case.generators[k].q_min) / span
            } else {
                q_total / gens.len() as f64
            };
        }
    }
    (p_gen, q_gen)
}

fn mat_vec(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| (0..n).map(|k| y[(i, k)] * v[k]).sum())
        .collect()
}

fn jacobian(
    y: &DMatrix<Complex64>,
    v: &[Complex64],
    cur: &[Complex64],
    pvpq: &[usize],
    pq: &[usize],
) -> DMatrix<f64> {
    let j = Complex64::new(0.0, 1.0);
    // dS_i/dVa_k = j V_i conj(delta_ik I_i - Y_ik V_k)
    let ds_dva = |i: usize, k: usize| -> Complex64 {
        let mut inner = -y[(i, k)] * v[k];
        if i == k {
            inner += cur[i];
        }
        j * v[i] * inner.conj()
    };
    // dS_i/dVm_k = V_i conj(Y_ik Vn_k) + delta_ik conj(I_i) Vn_i
    let ds_dvm = |i: usize, k: usize| -> Complex64 {
        let vn_k = v[k] / v[k].norm();
        let mut out = v[i] * (y[(i, k)] * vn_k).conj();
        if i == k {
            out += cur[i].conj() * vn_k;
        }
        out
    };
    let na = pvpq.len();
    let dim = na + pq.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for (r, &i) in pvpq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(r, c)] = ds_dva(i, k).re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, na + c)] = ds_dvm(i, k).re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(na + r, c)] = ds_dva(i, k).im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(na + r, na + c)] = ds_dvm(i, k).im;
        }
    }
    jac
}

/// Complex power flowing into each end of every branch (zero when out of service).
pub fn branch_flows(case: &NetworkCase, v_mag: &[f64], v_ang: &[f64]) -> Vec<BranchFlow> {
    case.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return BranchFlow {
                    s_from: Complex64::new(0.0, 0.0),
                    s_to: Complex64::new(0.0, 0.0),
                };
            }
            let f = case.bus_index(br.from).expect("validated case");
            let t = case.bus_index(br.to).expect("validated case");
            let vf = Complex64::from_polar(v_mag[f], v_ang[f]);
            let vt = Complex64::from_polar(v_mag[t], v_ang[t]);
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let ych = Complex64::new(0.0, br.b_charging / 2.0);
            let i_f = (ys + ych) / (br.tap * br.tap) * vf - ys / br.tap * vt;
            let i_t = (ys + ych) * vt - ys / br.tap * vf;
            BranchFlow {
                s_from: vf * i_f.conj(),
                s_to: vt * i_t.conj(),
            }
        })
        .collect()
}

/// Net complex power injected into the network at each bus, from `V conj(Y V)`.
pub fn bus_injections(case: &NetworkCase, sol: &PowerFlowSolution) -> Vec<Complex64> {
    let y = build_ybus(case);
    let v = sol.voltages();
    let cur = mat_vec(&y, &v);
    v.iter().zip(&cur).map(|(v, i)| v * i.conj()).collect()
}

/// Largest bus power imbalance of a solution, evaluated branch by branch.
///
/// Generation minus load minus shunt consumption minus the sum of branch
/// flows leaving the bus. Independent of the admittance-matrix assembly.
pub fn mismatch_residual(case: &NetworkCase, sol: &PowerFlowSolution) -> f64 {
    let n = case.n_buses();
    let mut bal: Vec<Complex64> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let shunt = Complex64::new(0.0, -b.shunt_b * sol.v_mag[i] * sol.v_mag[i]);
            -Complex64::new(b.p_load, b.q_load) - shunt
        })
        .collect();
    for (k, g) in case.generators.iter().enumerate() {
        let i = case.bus_index(g.bus).expect("validated case");
        bal[i] += Complex64::new(sol.p_gen[k], sol.q_gen[k]);
    }
    let flows = branch_flows(case, &sol.v_mag, &sol.v_ang);
    for (br, fl) in case.branches.iter().zip(&flows) {
        if !br.in_service {
            continue;
        }
        let f = case.bus_index(br.from).expect("validated case");
        let t = case.bus_index(br.to).expect("validated case");
        bal[f] -= fl.s_from;
        bal[t] -= fl.s_to;
    }
    (0..n).fold(0.0f64, |m, i| m.max(bal[i].re.abs()).max(bal[i].im.abs()))
}
