//! Network case data, admittance matrix, steady-state power flow and
//! single-branch outages.
//!
//! Everything inside a [`NetworkCase`] is per unit on the fixed system base
//! (100 MVA). Physical-unit case files are converted once, at ingest.

mod contingency;
mod io;
mod powerflow;
mod ybus;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loadmodels::LoadModelSpec;

pub use contingency::{apply_contingency, connected_components, is_connected};
pub use io::{case_from_json, case_to_json, load_case, CaseFile, SystemSection, Units};
pub use powerflow::{
    branch_flows, bus_injections, mismatch_residual, solve_powerflow, solve_powerflow_with,
    BranchFlow, PowerFlowOptions, PowerFlowSolution,
};
pub use ybus::{build_ybus, Ybus};

/// Fixed system MVA base.
pub const SYSTEM_MVA_BASE: f64 = 100.0;

/// Index of a branch inside [`NetworkCase::branches`].
pub type BranchId = usize;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("outage of branch {branch} ({from}-{to}) islands the network")]
    Islanding { branch: BranchId, from: u32, to: u32 },
    #[error("branch {0} does not exist")]
    NoSuchBranch(BranchId),
    #[error("branch {0} is already out of service")]
    BranchOutOfService(BranchId),
    #[error("power flow did not converge in {iterations} iterations (last mismatch {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },
    #[error("bus {0} does not exist")]
    NoSuchBus(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub v_mag: f64,
    /// Radians once inside a case.
    pub v_ang: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub shunt_b: f64,
    pub area: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub rating: f64,
    pub tap: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub p_set: f64,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Machine base for `h`, `xdp` and `d`.
    pub mva_base: f64,
    pub h: f64,
    pub xdp: f64,
    pub d: f64,
    /// Optional dispatch ceiling (system p.u.).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
}

impl Generator {
    /// Inertia constant on the system base.
    pub fn h_sys(&self) -> f64 {
        self.h * self.mva_base / SYSTEM_MVA_BASE
    }

    /// Transient reactance on the system base.
    pub fn xdp_sys(&self) -> f64 {
        self.xdp * SYSTEM_MVA_BASE / self.mva_base
    }

    /// Damping on the system base.
    pub fn d_sys(&self) -> f64 {
        self.d * self.mva_base / SYSTEM_MVA_BASE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub system_mva_base: f64,
    pub frequency_hz: f64,
    pub areas: Vec<u32>,
    /// Use the bus `v_mag`/`v_ang` fields as the power-flow starting point.
    pub seed_profile: bool,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub load_models: BTreeMap<u32, LoadModelSpec>,
}

impl NetworkCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn try_bus_index(&self, id: u32) -> Result<usize, NetError> {
        self.bus_index(id).ok_or(NetError::NoSuchBus(id))
    }

    pub fn bus(&self, id: u32) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_mut(&mut self, id: u32) -> Option<&mut Bus> {
        self.buses.iter_mut().find(|b| b.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// First in-service branch joining `a` and `b` in either direction.
    pub fn find_branch(&self, a: u32, b: u32) -> Option<BranchId> {
        self.branches.iter().position(|br| {
            br.in_service && ((br.from == a && br.to == b) || (br.from == b && br.to == a))
        })
    }

    pub fn generators_at(&self, bus: u32) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.bus == bus)
    }

    /// Check every structural invariant of the case.
    pub fn validate(&self) -> Result<(), NetError> {
        let invalid = |msg: String| Err(NetError::Validation(msg));
        if self.buses.is_empty() {
            return invalid("case has no buses".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return invalid(format!("bus {}: duplicate id", b.id));
            }
            if !(b.v_mag > 0.0) || !b.v_mag.is_finite() {
                return invalid(format!("bus {}: v_mag must be > 0", b.id));
            }
            if !self.areas.is_empty() && !self.areas.contains(&b.area) {
                return invalid(format!("bus {}: area {} not declared", b.id, b.area));
            }
        }
        let slacks: Vec<u32> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            1 => {}
            0 => return invalid("case has no slack bus".into()),
            _ => return invalid(format!("duplicate slack buses {slacks:?}")),
        }
        for (k, br) in self.branches.iter().enumerate() {
            let tag = format!("branch {k} ({}-{})", br.from, br.to);
            if br.from == br.to {
                return invalid(format!("{tag}: from == to"));
            }
            if !seen.contains(&br.from) || !seen.contains(&br.to) {
                return invalid(format!("{tag}: endpoint does not exist"));
            }
            if br.x == 0.0 || !br.x.is_finite() {
                return invalid(format!("{tag}: x must be non-zero"));
            }
            if !(br.rating > 0.0) {
                return invalid(format!("{tag}: rating must be > 0"));
            }
            if !(br.tap > 0.0) {
                return invalid(format!("{tag}: tap must be > 0"));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let tag = format!("generator {k} (bus {})", g.bus);
            let Some(bus) = self.bus(g.bus) else {
                return invalid(format!("{tag}: bus does not exist"));
            };
            if bus.kind == BusKind::PQ {
                return invalid(format!("{tag}: generator bus must be PV or Slack"));
            }
            if !(g.h > 0.0) {
                return invalid(format!("{tag}: h must be > 0"));
            }
            if !(g.xdp > 0.0) {
                return invalid(format!("{tag}: xdp must be > 0"));
            }
            if g.q_min > g.q_max {
                return invalid(format!("{tag}: q_min > q_max"));
            }
            if !(g.mva_base > 0.0) {
                return invalid(format!("{tag}: mva_base must be > 0"));
            }
        }
        for b in &self.buses {
            if b.kind != BusKind::PQ && self.generators_at(b.id).next().is_none() {
                return invalid(format!("bus {}: {:?} bus without a generator", b.id, b.kind));
            }
        }
        for bus in self.load_models.keys() {
            if !seen.contains(bus) {
                return invalid(format!("load model at bus {bus}: bus does not exist"));
            }
        }
        if !is_connected(self) {
            return invalid("network graph over in-service branches is not connected".into());
        }
        Ok(())
    }
}
