use rayon::prelude::*;

use super::{
    ContingencyOutcome, Criterion, FaultEnd, LimitResult, StaticOutcome, StepRecord, TransferError,
    TransferStudy,
};
use crate::netcase::{
    apply_contingency, branch_flows, solve_powerflow, BranchId, NetError, NetworkCase, PowerFlowSolution,
};
use crate::tdsim::{initialize_dynamics, simulate_from, Event, EventKind, Trajectory, Verdict};

const PF_TOL: f64 = 1e-8;
const PF_MAX_ITER: usize = 30;

/// Case with the sink at `p_level` MW (constant power factor) and the
/// increase over the base level shared by the source generators in
/// proportion to their scheduled output.
pub fn scale_operating_point(
    case: &NetworkCase,
    study: &TransferStudy,
    p_level: f64,
) -> Result<NetworkCase, TransferError> {
    let base = study.base_level(case)?;
    if p_level < base - 1e-9 {
        return Err(TransferError::InvalidStudy(format!(
            "level {p_level} MW below base {base} MW"
        )));
    }
    let s = case.system_mva_base;
    let mut out = case.clone();
    let bus = out.bus_mut(study.sink_bus).ok_or(NetError::NoSuchBus(study.sink_bus))?;
    let p_new = p_level / s;
    if bus.p_load != 0.0 {
        bus.q_load *= p_new / bus.p_load;
    }
    bus.p_load = p_new;

    let idx: Vec<usize> = case
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| study.source_gens.contains(&g.bus))
        .map(|(k, _)| k)
        .collect();
    let total: f64 = idx.iter().map(|&k| case.generators[k].p_set.max(0.0)).sum();
    let extra = (p_level - base) / s;
    for &k in &idx {
        let share = if total > 0.0 {
            case.generators[k].p_set.max(0.0) / total
        } else {
            1.0 / idx.len() as f64
        };
        let g = &mut out.generators[k];
        g.p_set += extra * share;
        if let Some(cap) = g.p_max {
            if g.p_set > cap + 1e-12 {
                return Err(TransferError::SourceCapacityExceeded {
                    bus: g.bus,
                    p_mw: g.p_set * s,
                    p_max_mw: cap * s,
                });
            }
        }
    }
    Ok(out)
}

/// Screened branches in branch order.
pub fn contingency_list(case: &NetworkCase, study: &TransferStudy) -> Result<Vec<BranchId>, TransferError> {
    let mut out: Vec<BranchId> = match &study.contingencies {
        Some(list) => list
            .iter()
            .map(|&[a, b]| {
                case.find_branch(a, b)
                    .ok_or_else(|| TransferError::InvalidStudy(format!("no branch {a}-{b}")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..case.branches.len()).filter(|&k| case.branches[k].in_service).collect(),
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn ends(case: &NetworkCase, k: BranchId) -> [u32; 2] {
    [case.branches[k].from, case.branches[k].to]
}

/// Most loaded in-service branch above its rating.
fn thermal_violation(case: &NetworkCase, pf: &PowerFlowSolution) -> Option<StaticOutcome> {
    let flows = branch_flows(case, &pf.v_mag, &pf.v_ang);
    let mut worst: Option<(f64, BranchId)> = None;
    for (k, (br, fl)) in case.branches.iter().zip(&flows).enumerate() {
        if !br.in_service || !(br.rating > 0.0) {
            continue;
        }
        let loading = fl.mva() / br.rating;
        if loading > 1.0 && worst.is_none_or(|(w, _)| loading > w) {
            worst = Some((loading, k));
        }
    }
    worst.map(|(loading, k)| StaticOutcome::Thermal {
        branch: ends(case, k),
        loading,
    })
}

fn contingency_events(case: &NetworkCase, study: &TransferStudy, k: BranchId) -> Vec<Event> {
    let f = &study.fault;
    let br = &case.branches[k];
    let bus = match f.end {
        FaultEnd::From => br.from,
        FaultEnd::To => br.to,
    };
    let t_clear = f.t_fault + f.clear_after;
    vec![
        Event {
            time: f.t_fault,
            kind: EventKind::ThreePhaseFault {
                bus,
                fault_admittance: f.fault_admittance,
            },
        },
        Event {
            time: t_clear,
            kind: EventKind::FaultClear,
        },
        Event {
            time: t_clear,
            kind: EventKind::BranchTrip { branch: k },
        },
    ]
}

fn run_dynamic(
    case: &NetworkCase,
    pf: &PowerFlowSolution,
    study: &TransferStudy,
    k: BranchId,
) -> Result<(Trajectory, Verdict), crate::tdsim::SimError> {
    let sim = initialize_dynamics(case, pf, &study.sim)?;
    simulate_from(sim, &contingency_events(case, study, k), &study.criteria)
}

fn screen_contingency(
    case: &NetworkCase,
    pf: &PowerFlowSolution,
    study: &TransferStudy,
    k: BranchId,
) -> ContingencyOutcome {
    let branch = Some(ends(case, k));
    let post = match apply_contingency(case, k) {
        Ok(c) => c,
        Err(e) => {
            let static_outcome = match e {
                NetError::Islanding { .. } => StaticOutcome::Islanding,
                _ => StaticOutcome::PowerFlowDiverged,
            };
            return ContingencyOutcome {
                branch,
                static_outcome,
                dynamic: None,
                detail: Some(e.to_string()),
            };
        }
    };
    let static_outcome = match solve_powerflow(&post, PF_TOL, PF_MAX_ITER) {
        Err(_) => StaticOutcome::PowerFlowDiverged,
        Ok(sol) if study.check_thermal => thermal_violation(&post, &sol).unwrap_or(StaticOutcome::Ok),
        Ok(_) => StaticOutcome::Ok,
    };
    let mut out = ContingencyOutcome {
        branch,
        static_outcome,
        dynamic: None,
        detail: None,
    };
    if study.check_dynamic && out.static_outcome == StaticOutcome::Ok {
        match run_dynamic(case, pf, study, k) {
            Ok((_, v)) => {
                if let Verdict::NumericalFailure { reason, .. } = &v {
                    out.detail = Some(reason.clone());
                }
                out.dynamic = Some(v.label().to_string());
            }
            Err(e) => {
                out.dynamic = Some("NumericalFailure".to_string());
                out.detail = Some(e.to_string());
            }
        }
    }
    out
}

fn record(study: &TransferStudy, p_level: f64, outcomes: Vec<ContingencyOutcome>) -> StepRecord {
    let first = outcomes
        .iter()
        .find_map(|o| o.criterion(study.exclude_islanding).map(|c| (o.branch, c)));
    let static_ok = outcomes.iter().all(|o| {
        !matches!(
            o.criterion(study.exclude_islanding),
            Some(Criterion::Thermal | Criterion::PowerFlowDiverged | Criterion::Islanding)
        )
    });
    StepRecord {
        p_level,
        feasible: first.is_none(),
        static_ok,
        worst_contingency: first.and_then(|f| f.0),
        binding_criterion: first.map(|f| f.1),
        outcomes,
    }
}

/// Screen one transfer level: intact-network power flow and thermal check,
/// then for every contingency a post-outage power flow with thermal check
/// and a fault-and-trip simulation.
pub fn assess_point(case: &NetworkCase, study: &TransferStudy, p_level: f64) -> Result<StepRecord, TransferError> {
    let scaled = match scale_operating_point(case, study, p_level) {
        Ok(c) => c,
        Err(TransferError::SourceCapacityExceeded { bus, p_mw, p_max_mw }) => {
            return Ok(StepRecord {
                p_level,
                feasible: false,
                static_ok: false,
                worst_contingency: None,
                binding_criterion: Some(Criterion::SourceCapacity),
                outcomes: vec![ContingencyOutcome {
                    branch: None,
                    static_outcome: StaticOutcome::Ok,
                    dynamic: None,
                    detail: Some(format!("generator at bus {bus}: {p_mw:.1} MW > {p_max_mw:.1} MW")),
                }],
            })
        }
        Err(e) => return Err(e),
    };
    let contingencies = contingency_list(&scaled, study)?;
    let pf = match solve_powerflow(&scaled, PF_TOL, PF_MAX_ITER) {
        Ok(pf) => pf,
        Err(e) => {
            let base = ContingencyOutcome {
                branch: None,
                static_outcome: StaticOutcome::PowerFlowDiverged,
                dynamic: None,
                detail: Some(e.to_string()),
            };
            return Ok(record(study, p_level, vec![base]));
        }
    };
    let base = ContingencyOutcome {
        branch: None,
        static_outcome: match study.check_thermal {
            true => thermal_violation(&scaled, &pf).unwrap_or(StaticOutcome::Ok),
            false => StaticOutcome::Ok,
        },
        dynamic: None,
        detail: None,
    };
    if base.static_outcome != StaticOutcome::Ok {
        return Ok(record(study, p_level, vec![base]));
    }
    let mut outcomes = vec![base];
    outcomes.extend(
        contingencies
            .par_iter()
            .map(|&k| screen_contingency(&scaled, &pf, study, k))
            .collect::<Vec<_>>(),
    );
    Ok(record(study, p_level, outcomes))
}

fn levels(case: &NetworkCase, study: &TransferStudy) -> Result<Vec<f64>, TransferError> {
    study.validate(case)?;
    let base = study.base_level(case)?;
    let n = ((study.p_cap - base) / study.delta_p + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| base + k as f64 * study.delta_p).collect())
}

pub(crate) fn model_label(case: &NetworkCase, study: &TransferStudy) -> String {
    match case.load_models.get(&study.sink_bus) {
        Some(crate::loadmodels::LoadModelSpec::StaticPreset { name }) => name.clone(),
        Some(spec) => spec.family().to_string(),
        None => "none".to_string(),
    }
}

fn summarize(case: &NetworkCase, study: &TransferStudy, steps: Vec<StepRecord>) -> Result<LimitResult, TransferError> {
    let first_bad = steps.iter().position(|s| !s.feasible);
    if first_bad == Some(0) {
        let rec = steps.into_iter().next().expect("non-empty");
        return Err(TransferError::BaseInfeasible {
            p_base: rec.p_level,
            criterion: rec.binding_criterion,
            record: Box::new(rec),
        });
    }
    let (p_max, binding_contingency, binding_criterion, unbounded, non_monotone) = match first_bad {
        Some(i) => (
            steps[i - 1].p_level,
            steps[i].worst_contingency,
            steps[i].binding_criterion,
            false,
            steps[i..].iter().filter(|s| s.feasible).map(|s| s.p_level).collect(),
        ),
        None => (steps.last().map(|s| s.p_level).unwrap_or(0.0), None, None, true, Vec::new()),
    };
    Ok(LimitResult {
        study: study.name.clone(),
        model: model_label(case, study),
        p_max,
        delta_p: study.delta_p,
        binding_contingency,
        binding_criterion,
        unbounded_at_cap: unbounded,
        non_monotone,
        base_infeasible: false,
        steps,
    })
}

/// Ascending sweep from the base level in `delta_p` steps. The limit is
/// the last feasible level below the first infeasible one. Without
/// `assume_monotone` every level up to the cap is assessed and feasible
/// levels above the limit are reported in `non_monotone`.
pub fn find_limit(case: &NetworkCase, study: &TransferStudy) -> Result<LimitResult, TransferError> {
    let lv = levels(case, study)?;
    let steps = if study.assume_monotone {
        let mut steps = Vec::new();
        for &p in &lv {
            let r = assess_point(case, study, p)?;
            let stop = !r.feasible;
            steps.push(r);
            if stop {
                break;
            }
        }
        steps
    } else {
        lv.par_iter()
            .map(|&p| assess_point(case, study, p))
            .collect::<Result<Vec<_>, _>>()?
    };
    summarize(case, study, steps)
}

/// Bisection over the same level lattice, assuming feasibility is monotone.
/// Agrees with [`find_limit`] whenever that assumption holds.
pub fn find_limit_bisect(case: &NetworkCase, study: &TransferStudy) -> Result<LimitResult, TransferError> {
    let lv = levels(case, study)?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let check = |k: usize, steps: &mut Vec<StepRecord>| -> Result<bool, TransferError> {
        let r = assess_point(case, study, lv[k])?;
        let ok = r.feasible;
        steps.push(r);
        Ok(ok)
    };
    let top = lv.len() - 1;
    if !check(0, &mut steps)? || top == 0 || check(top, &mut steps)? {
        steps.sort_by(|a, b| a.p_level.total_cmp(&b.p_level));
        return summarize(case, study, steps);
    }
    let (mut lo, mut hi) = (0, top);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if check(mid, &mut steps)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    steps.sort_by(|a, b| a.p_level.total_cmp(&b.p_level));
    // Only the bracketing pair decides the limit; drop records outside it
    // from the monotone reading so the summary sees lo then hi.
    let keep: Vec<StepRecord> = steps
        .into_iter()
        .filter(|s| s.p_level <= lv[hi] + 1e-9)
        .collect();
    let mut res = summarize(case, study, keep)?;
    res.non_monotone.clear();
    Ok(res)
}

/// Dynamic run of one contingency at `p_level`.
pub fn contingency_trajectory(
    case: &NetworkCase,
    study: &TransferStudy,
    p_level: f64,
    branch: [u32; 2],
) -> Result<(Trajectory, Verdict), TransferError> {
    let scaled = scale_operating_point(case, study, p_level)?;
    let pf = solve_powerflow(&scaled, PF_TOL, PF_MAX_ITER)?;
    let k = scaled
        .find_branch(branch[0], branch[1])
        .ok_or_else(|| TransferError::InvalidStudy(format!("no branch {}-{}", branch[0], branch[1])))?;
    Ok(run_dynamic(&scaled, &pf, study, k)?)
}

/// Every dynamic contingency run at `p_level`, labelled `from-to`.
pub fn binding_trajectories(
    case: &NetworkCase,
    study: &TransferStudy,
    p_level: f64,
) -> Result<Vec<(String, Trajectory, Verdict)>, TransferError> {
    let scaled = scale_operating_point(case, study, p_level)?;
    let pf = solve_powerflow(&scaled, PF_TOL, PF_MAX_ITER)?;
    let list: Vec<BranchId> = contingency_list(&scaled, study)?
        .into_iter()
        .filter(|&k| apply_contingency(&scaled, k).is_ok())
        .collect();
    list.par_iter()
        .map(|&k| {
            let [a, b] = ends(&scaled, k);
            let (tr, v) = run_dynamic(&scaled, &pf, study, k)?;
            Ok((format!("{a}-{b}"), tr, v))
        })
        .collect()
}
