//! Single-phase compressor motor as a three-rule performance model:
//! run at constant power, stall after a sustained low-voltage spell, and
//! let a fixed fraction restart once voltage recovers.

use serde::{Deserialize, Serialize};

use super::{zip_pq_lv, LoadModelError, ZipFractions, ZipParams, LV_BREAKPOINT};

/// Stall behaviour as carried in a spec. `g_stall` and `b_stall` are per
/// unit of the motor's running active power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhaseSpec {
    pub pf: f64,
    pub v_stall: f64,
    pub t_stall: f64,
    pub g_stall: f64,
    pub b_stall: f64,
    pub f_restart: f64,
    pub v_restart: f64,
}

impl Default for SinglePhaseSpec {
    fn default() -> Self {
        Self {
            pf: 0.98,
            v_stall: 0.55,
            t_stall: 0.033,
            g_stall: 5.0,
            b_stall: 5.0,
            f_restart: 0.2,
            v_restart: 0.95,
        }
    }
}

impl SinglePhaseSpec {
    pub fn validate(&self) -> Result<(), LoadModelError> {
        let bad = |m: String| Err(LoadModelError::InvalidParameter(format!("single-phase motor: {m}")));
        if !(self.pf > 0.0 && self.pf <= 1.0) {
            return bad(format!("power factor {} outside (0, 1]", self.pf));
        }
        if !(0.0..=1.0).contains(&self.f_restart) {
            return bad(format!("f_restart {} outside [0, 1]", self.f_restart));
        }
        if !(self.v_stall < self.v_restart) {
            return bad(format!(
                "v_stall {} must be below v_restart {}",
                self.v_stall, self.v_restart
            ));
        }
        if !(self.t_stall >= 0.0 && self.g_stall >= 0.0 && self.b_stall >= 0.0) {
            return bad("stall time and admittance must be >= 0".into());
        }
        Ok(())
    }

    pub fn params(&self, p0: f64, v0: f64) -> SinglePhaseImParams {
        let q0 = p0 * (1.0 / (self.pf * self.pf) - 1.0).max(0.0).sqrt();
        SinglePhaseImParams {
            p0,
            q0,
            v0,
            v_stall: self.v_stall,
            t_stall: self.t_stall,
            g_stall: self.g_stall * p0,
            b_stall: self.b_stall * p0,
            f_restart: self.f_restart,
            v_restart: self.v_restart,
        }
    }
}

/// Bound single-phase motor; `g_stall`, `b_stall` in system per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhaseImParams {
    pub p0: f64,
    pub q0: f64,
    pub v0: f64,
    pub v_stall: f64,
    pub t_stall: f64,
    pub g_stall: f64,
    pub b_stall: f64,
    pub f_restart: f64,
    pub v_restart: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpState {
    /// Time spent continuously below `v_stall`.
    pub timer: f64,
    /// Fraction of the motor population currently stalled.
    pub stalled: f64,
    pub restarted: bool,
}

/// Consumption for a given stall state.
pub fn sp_im_pq(sp: &SinglePhaseImParams, st: &SpState, v: f64) -> (f64, f64) {
    let running = ZipParams::new(sp.p0, sp.q0, sp.v0, ZipFractions::uniform(0.0, 0.0, 1.0));
    let (pr, qr) = zip_pq_lv(&running, v, LV_BREAKPOINT);
    let run = 1.0 - st.stalled;
    let v2 = v * v;
    (
        run * pr + st.stalled * sp.g_stall * v2,
        run * qr + st.stalled * sp.b_stall * v2,
    )
}

/// Advance the stall logic by `dt` at voltage `v`; returns the new state
/// and the consumption under it.
pub fn sp_im_update(
    sp: &SinglePhaseImParams,
    st: &SpState,
    v: f64,
    dt: f64,
) -> (SpState, f64, f64) {
    let mut next = *st;
    if v < sp.v_stall {
        next.timer += dt;
    } else {
        next.timer = 0.0;
    }
    // tolerance absorbs accumulation error in the timer
    if next.timer >= sp.t_stall - 1e-9 && next.stalled < 1.0 {
        next.stalled = 1.0;
    }
    if next.stalled > 0.0 && !next.restarted && v > sp.v_restart {
        next.stalled *= 1.0 - sp.f_restart;
        next.restarted = true;
    }
    let (p, q) = sp_im_pq(sp, &next, v);
    (next, p, q)
}
