//! Fixed-step transient simulation: classical generators, dynamic loads,
//! and an algebraic network solved at every integration stage.
//!
//! ```no_run
//! use tslim::netcase::load_case;
//! use tslim::tdsim::{fault_sequence, simulate, SimulationConfig, StabilityCriteria};
//!
//! let case = load_case("data/ieee39.json").unwrap();
//! let events = fault_sequence(6, 0.1, 5.0 / 60.0, None);
//! let (traj, verdict) = simulate(&case, &events, &SimulationConfig::default(),
//!     &StabilityCriteria::default()).unwrap();
//! println!("{verdict:?}, {} samples", traj.times.len());
//! ```

mod network;
mod sim;
mod trajectory;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loadmodels::LoadModelError;
use crate::netcase::{BranchId, NetError};

pub use sim::{initialize_dynamics, simulate, simulate_from, Simulator};
pub use trajectory::{check_stability, Trajectory};

pub const DEFAULT_FAULT_ADMITTANCE: Complex64 = Complex64 { re: 0.0, im: -1e5 };

#[derive(Debug, Error)]
pub enum SimError {
    #[error("power flow: {0}")]
    PowerFlow(#[from] NetError),
    #[error("load model at bus {bus}: {source}")]
    Init {
        bus: u32,
        #[source]
        source: LoadModelError,
    },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("network solution diverged at t = {t:.4} s (residual {residual:.3e})")]
    AlgebraicDivergence { t: f64, residual: f64 },
    #[error("trajectory file: {0}")]
    Trajectory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorState {
    pub delta: f64,
    pub omega: f64,
    pub e_prime: f64,
}

fn default_fault_admittance() -> Complex64 {
    DEFAULT_FAULT_ADMITTANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    ThreePhaseFault {
        bus: u32,
        #[serde(default = "default_fault_admittance")]
        fault_admittance: Complex64,
    },
    BranchTrip {
        branch: BranchId,
    },
    /// Removes every active fault.
    FaultClear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Fault at `bus`, cleared after `clear_after` seconds, optionally tripping
/// `trip` at the clearing instant.
pub fn fault_sequence(bus: u32, t_fault: f64, clear_after: f64, trip: Option<BranchId>) -> Vec<Event> {
    let t_clear = t_fault + clear_after;
    let mut ev = vec![
        Event {
            time: t_fault,
            kind: EventKind::ThreePhaseFault {
                bus,
                fault_admittance: DEFAULT_FAULT_ADMITTANCE,
            },
        },
        Event {
            time: t_clear,
            kind: EventKind::FaultClear,
        },
    ];
    if let Some(branch) = trip {
        ev.push(Event {
            time: t_clear,
            kind: EventKind::BranchTrip { branch },
        });
    }
    ev
}

/// Events must be time-ordered and every fault must be cleared later.
pub fn validate_events(events: &[Event]) -> Result<(), SimError> {
    let mut open = 0usize;
    for (k, e) in events.iter().enumerate() {
        if !(e.time >= 0.0) || !e.time.is_finite() {
            return Err(SimError::InvalidEvent(format!("event {k}: time {} < 0", e.time)));
        }
        if k > 0 && e.time < events[k - 1].time {
            return Err(SimError::InvalidEvent(format!("event {k}: not time-ordered")));
        }
        match e.kind {
            EventKind::ThreePhaseFault { .. } => open += 1,
            EventKind::FaultClear => open = 0,
            EventKind::BranchTrip { .. } => {}
        }
    }
    if open > 0 {
        return Err(SimError::InvalidEvent("fault without a clear event".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_dt: f64,
    /// Largest acceptable network current mismatch, per unit.
    pub solver_tol: f64,
    pub max_alg_iter: usize,
    /// Buses to record; empty means every load-model bus (or, when the case
    /// has none, every bus carrying load).
    pub monitored: Vec<u32>,
    /// Stop integrating at the first stability violation.
    pub stop_on_violation: bool,
    /// Accept events that are never cleared (the verdict then skips the
    /// voltage-recovery check).
    pub allow_uncleared: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            t_end: 5.0,
            record_dt: 1.0 / 240.0,
            solver_tol: 1e-9,
            max_alg_iter: 30,
            monitored: Vec::new(),
            stop_on_violation: true,
            allow_uncleared: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<usize, SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt <= self.record_dt) {
            return bad(format!("need 0 < dt <= record_dt, got {} and {}", self.dt, self.record_dt));
        }
        if !(self.t_end > 0.0) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        if !(self.solver_tol > 0.0) || self.max_alg_iter == 0 {
            return bad("solver_tol and max_alg_iter must be positive".into());
        }
        let ratio = self.record_dt / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!("record_dt {} is not a multiple of dt {}", self.record_dt, self.dt));
        }
        Ok(ratio.round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityCriteria {
    pub max_angle_spread: f64,
    pub v_recovery_floor: f64,
    pub v_recovery_deadline: f64,
    pub check_angle: bool,
    pub check_voltage: bool,
}

impl Default for StabilityCriteria {
    fn default() -> Self {
        Self {
            max_angle_spread: std::f64::consts::PI,
            v_recovery_floor: 0.8,
            v_recovery_deadline: 2.0,
            check_angle: true,
            check_voltage: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Stable,
    AngleUnstable { at: f64 },
    VoltageUnstable { at: f64 },
    NumericalFailure { at: f64, reason: String },
}

impl Verdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, Verdict::Stable)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Stable => "Stable",
            Verdict::AngleUnstable { .. } => "AngleUnstable",
            Verdict::VoltageUnstable { .. } => "VoltageUnstable",
            Verdict::NumericalFailure { .. } => "NumericalFailure",
        }
    }
}
