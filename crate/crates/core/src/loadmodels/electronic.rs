use serde::{Deserialize, Serialize};

use super::LoadModelError;

/// Voltage breakpoints of the electronic load, as carried in a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronicSpec {
    pub v_full: f64,
    pub v_off: f64,
}

impl Default for ElectronicSpec {
    fn default() -> Self {
        Self {
            v_full: 0.7,
            v_off: 0.5,
        }
    }
}

impl ElectronicSpec {
    pub fn validate(&self) -> Result<(), LoadModelError> {
        if !(0.0 <= self.v_off && self.v_off < self.v_full) {
            return Err(LoadModelError::InvalidParameter(format!(
                "electronic load needs 0 <= v_off < v_full, got {} and {}",
                self.v_off, self.v_full
            )));
        }
        Ok(())
    }
}

/// Unity power factor load that ramps linearly to zero between `v_full` and `v_off`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronicLoadParams {
    pub p0: f64,
    pub q0: f64,
    pub v_full: f64,
    pub v_off: f64,
}

impl ElectronicLoadParams {
    /// Sized so that it draws `p` at voltage `v`.
    pub fn drawing(spec: &ElectronicSpec, p: f64, v: f64) -> Result<Self, LoadModelError> {
        spec.validate()?;
        let unit = Self {
            p0: 1.0,
            q0: 0.0,
            v_full: spec.v_full,
            v_off: spec.v_off,
        };
        let share = electronic_pq(&unit, v).0;
        if share <= 0.0 {
            return Err(LoadModelError::Init(format!(
                "electronic load cannot draw power at v = {v}"
            )));
        }
        Ok(Self {
            p0: p / share,
            ..unit
        })
    }
}

pub fn electronic_pq(ep: &ElectronicLoadParams, v: f64) -> (f64, f64) {
    let p = if v >= ep.v_full {
        ep.p0
    } else if v <= ep.v_off {
        0.0
    } else {
        ep.p0 * (v - ep.v_off) / (ep.v_full - ep.v_off)
    };
    (p, 0.0)
}
