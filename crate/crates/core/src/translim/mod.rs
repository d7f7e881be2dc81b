//! Transfer limits between areas: ramp a sink bus, redispatch the source
//! generators, and screen each level with static and dynamic N-1 checks.
//!
//! Powers in a [`TransferStudy`] are in MW; the case stays in per unit.

mod assess;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcase::{NetError, NetworkCase};
use crate::tdsim::{SimulationConfig, StabilityCriteria, DEFAULT_FAULT_ADMITTANCE};
use num_complex::Complex64;

pub use assess::{
    assess_point, binding_trajectories, contingency_list, contingency_trajectory, find_limit, find_limit_bisect,
    scale_operating_point,
};
pub use report::{trend_report, TrendRow, TrendTable};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("network: {0}")]
    Network(#[from] NetError),
    #[error("generator at bus {bus} would run at {p_mw:.1} MW, above its {p_max_mw:.1} MW ceiling")]
    SourceCapacityExceeded { bus: u32, p_mw: f64, p_max_mw: f64 },
    #[error("base level {p_base} MW already violates limits ({criterion:?})")]
    BaseInfeasible {
        p_base: f64,
        criterion: Option<Criterion>,
        record: Box<StepRecord>,
    },
    #[error("simulation: {0}")]
    Simulation(#[from] crate::tdsim::SimError),
}

/// Which end of the outaged branch is faulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultEnd {
    From,
    To,
}

/// Fault applied for every dynamic contingency: three-phase fault at one
/// end of the branch, branch tripped when the fault clears.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultTemplate {
    pub t_fault: f64,
    pub clear_after: f64,
    pub end: FaultEnd,
    pub fault_admittance: Complex64,
}

impl Default for FaultTemplate {
    fn default() -> Self {
        Self {
            t_fault: 0.1,
            clear_after: 5.0 / 60.0,
            end: FaultEnd::From,
            fault_admittance: DEFAULT_FAULT_ADMITTANCE,
        }
    }
}

fn default_sim() -> SimulationConfig {
    SimulationConfig {
        t_end: 3.0,
        record_dt: 1.0 / 60.0,
        ..SimulationConfig::default()
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferStudy {
    #[serde(default)]
    pub name: String,
    /// Buses whose generators absorb the ramp.
    pub source_gens: Vec<u32>,
    pub sink_bus: u32,
    /// Informative; reported alongside the limit.
    #[serde(default)]
    pub tie_lines: Vec<[u32; 2]>,
    /// Starting sink load, MW. Defaults to the case value.
    #[serde(default)]
    pub p_base: Option<f64>,
    pub delta_p: f64,
    pub p_cap: f64,
    /// Outaged branches as `[from, to]`. Absent means every in-service
    /// branch whose loss does not island the network.
    #[serde(default)]
    pub contingencies: Option<Vec<[u32; 2]>>,
    #[serde(default)]
    pub fault: FaultTemplate,
    #[serde(default)]
    pub criteria: StabilityCriteria,
    #[serde(default = "default_sim")]
    pub sim: SimulationConfig,
    #[serde(default = "default_true")]
    pub check_thermal: bool,
    #[serde(default = "default_true")]
    pub check_dynamic: bool,
    /// Islanding contingencies do not count against a level.
    #[serde(default = "default_true")]
    pub exclude_islanding: bool,
    /// Stop the sweep at the first infeasible level.
    #[serde(default)]
    pub assume_monotone: bool,
}

impl TransferStudy {
    pub fn new(source_gens: Vec<u32>, sink_bus: u32, delta_p: f64, p_cap: f64) -> Self {
        Self {
            name: String::new(),
            source_gens,
            sink_bus,
            tie_lines: Vec::new(),
            p_base: None,
            delta_p,
            p_cap,
            contingencies: None,
            fault: FaultTemplate::default(),
            criteria: StabilityCriteria::default(),
            sim: default_sim(),
            check_thermal: true,
            check_dynamic: true,
            exclude_islanding: true,
            assume_monotone: false,
        }
    }

    pub fn validate(&self, case: &NetworkCase) -> Result<(), TransferError> {
        let bad = |m: String| Err(TransferError::InvalidStudy(m));
        if !(self.delta_p > 0.0) {
            return bad(format!("delta_p must be > 0, got {}", self.delta_p));
        }
        let p_base = self.base_level(case)?;
        if !(self.p_cap >= p_base) {
            return bad(format!("p_cap {} below p_base {p_base}", self.p_cap));
        }
        if !case.load_models.contains_key(&self.sink_bus) {
            return bad(format!("sink bus {} carries no load model", self.sink_bus));
        }
        if self.source_gens.is_empty() {
            return bad("no source generators".into());
        }
        for &b in &self.source_gens {
            if case.generators_at(b).next().is_none() {
                return bad(format!("no generator at source bus {b}"));
            }
        }
        for [a, b] in self.contingencies.iter().flatten() {
            if case.find_branch(*a, *b).is_none() {
                return bad(format!("contingency branch {a}-{b} does not exist"));
            }
        }
        self.sim.validate().map_err(|e| TransferError::InvalidStudy(e.to_string()))?;
        Ok(())
    }

    /// Sink load at the base level, MW.
    pub fn base_level(&self, case: &NetworkCase) -> Result<f64, TransferError> {
        match self.p_base {
            Some(p) => Ok(p),
            None => {
                let bus = case
                    .bus(self.sink_bus)
                    .ok_or_else(|| TransferError::InvalidStudy(format!("no sink bus {}", self.sink_bus)))?;
                Ok(bus.p_load * case.system_mva_base)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Thermal,
    AngleUnstable,
    VoltageUnstable,
    PowerFlowDiverged,
    /// The dynamic run could not be completed (initialization or network
    /// solution failure).
    NumericalFailure,
    /// A contingency that splits the network, counted only when
    /// islanding is not excluded.
    Islanding,
    /// The redispatch would push a source above its declared ceiling.
    SourceCapacity,
}

/// Static screening result of one contingency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StaticOutcome {
    Ok,
    Thermal { branch: [u32; 2], loading: f64 },
    PowerFlowDiverged,
    Islanding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyOutcome {
    /// `None` for the intact network.
    pub branch: Option<[u32; 2]>,
    pub static_outcome: StaticOutcome,
    /// Verdict label of the dynamic run, when one was made.
    pub dynamic: Option<String>,
    #[serde(default)]
    pub detail: Option<String>,
}

impl ContingencyOutcome {
    /// The violated criterion, if any.
    pub fn criterion(&self, exclude_islanding: bool) -> Option<Criterion> {
        match &self.static_outcome {
            StaticOutcome::Thermal { .. } => return Some(Criterion::Thermal),
            StaticOutcome::PowerFlowDiverged => return Some(Criterion::PowerFlowDiverged),
            StaticOutcome::Islanding => return (!exclude_islanding).then_some(Criterion::Islanding),
            StaticOutcome::Ok => {}
        }
        match self.dynamic.as_deref() {
            Some("AngleUnstable") => Some(Criterion::AngleUnstable),
            Some("VoltageUnstable") => Some(Criterion::VoltageUnstable),
            Some("NumericalFailure") => Some(Criterion::NumericalFailure),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self.branch {
            Some([a, b]) => format!("{a}-{b}"),
            None => "base".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub p_level: f64,
    pub feasible: bool,
    pub static_ok: bool,
    /// First violating contingency in branch order (`None` with a
    /// violation means the intact network).
    pub worst_contingency: Option<[u32; 2]>,
    pub binding_criterion: Option<Criterion>,
    pub outcomes: Vec<ContingencyOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub study: String,
    pub model: String,
    pub p_max: f64,
    pub delta_p: f64,
    pub binding_contingency: Option<[u32; 2]>,
    pub binding_criterion: Option<Criterion>,
    /// Feasible all the way to `p_cap`.
    pub unbounded_at_cap: bool,
    /// Feasible levels found above an infeasible one.
    pub non_monotone: Vec<f64>,
    /// The base level itself failed, so the limit lies below `p_max`.
    #[serde(default)]
    pub base_infeasible: bool,
    pub steps: Vec<StepRecord>,
}

impl LimitResult {
    /// Record of a study whose base level already fails: `p_max` holds the
    /// base level as an upper bound.
    pub fn below_base(study: &str, model: &str, delta_p: f64, record: StepRecord) -> Self {
        Self {
            study: study.to_string(),
            model: model.to_string(),
            p_max: record.p_level,
            delta_p,
            binding_contingency: record.worst_contingency,
            binding_criterion: record.binding_criterion,
            unbounded_at_cap: false,
            non_monotone: Vec::new(),
            base_infeasible: true,
            steps: vec![record],
        }
    }

    /// Sort key for comparisons: a base-infeasible result sits half a step
    /// below its base level.
    pub fn rank_level(&self) -> f64 {
        if self.base_infeasible {
            self.p_max - 0.5 * self.delta_p
        } else {
            self.p_max
        }
    }

    /// `p_max` as printed, with a `<` prefix when only an upper bound is known.
    pub fn display_p_max(&self) -> String {
        if self.base_infeasible {
            format!("<{:.1}", self.p_max)
        } else {
            format!("{:.1}", self.p_max)
        }
    }
}
