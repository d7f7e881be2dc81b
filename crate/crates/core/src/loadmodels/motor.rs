//! Third-order induction motor: transient internal voltage `v'` on the d/q
//! axes plus slip.
//!
//! Electrical quantities are per unit on the motor's own base
//! (`mva_base`); [`im_pq`] converts the consumption to the system base.
//! The flux equations are written in per-unit time in their usual printed
//! form, so their right-hand sides are scaled by `omega_base` to advance
//! in seconds.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::LoadModelError;
use crate::netcase::SYSTEM_MVA_BASE;

pub const OMEGA_60HZ: f64 = 2.0 * PI * 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImParams {
    pub rs: f64,
    pub xs: f64,
    pub rr: f64,
    pub xr: f64,
    pub xm: f64,
    /// Inertia constant, s.
    pub h: f64,
    /// Mechanical torque at zero slip; set by [`im_init`].
    pub tm0: f64,
    /// Short-circuit reactance `xs + xm*xr/(xm+xr)`.
    pub xprime: f64,
    pub mva_base: f64,
    /// Mechanical torque goes as `(1 - s)^torque_exp`.
    pub torque_exp: f64,
    pub omega_base: f64,
}

/// Motor data as carried in a load-model spec: impedances on the motor's
/// own base, which is sized from its share of the load and `load_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorSpec {
    pub rs: f64,
    pub xs: f64,
    pub rr: f64,
    pub xr: f64,
    pub xm: f64,
    pub h: f64,
    pub load_factor: f64,
    #[serde(default = "default_torque_exp")]
    pub torque_exp: f64,
}

fn default_torque_exp() -> f64 {
    2.0
}

impl MotorSpec {
    /// Read `<prefix>.rs`, `<prefix>.xs`, ... from a flat parameter map.
    pub fn from_params(
        prefix: &str,
        params: &std::collections::BTreeMap<String, f64>,
    ) -> Result<Self, LoadModelError> {
        let get = |k: &str| {
            let key = format!("{prefix}.{k}");
            params
                .get(&key)
                .copied()
                .ok_or_else(|| LoadModelError::InvalidParameter(format!("missing {key}")))
        };
        Ok(Self {
            rs: get("rs")?,
            xs: get("xs")?,
            rr: get("rr")?,
            xr: get("xr")?,
            xm: get("xm")?,
            h: get("h")?,
            load_factor: get("lf")?,
            torque_exp: get("etrq")?,
        })
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        if !(self.load_factor > 0.0 && self.load_factor <= 1.5) {
            return Err(LoadModelError::InvalidParameter(format!(
                "motor load factor {} outside (0, 1.5]",
                self.load_factor
            )));
        }
        self.params(1.0).map(|_| ())
    }

    /// Motor rated to draw `p_share` (system per unit) at its load factor.
    pub fn params(&self, p_share: f64) -> Result<ImParams, LoadModelError> {
        let mva = p_share * SYSTEM_MVA_BASE / self.load_factor;
        Ok(ImParams::new(self.rs, self.xs, self.rr, self.xr, self.xm, self.h, mva)?
            .with_torque_exp(self.torque_exp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImState {
    pub vdp: f64,
    pub vqp: f64,
    pub slip: f64,
}

impl ImState {
    pub fn to_array(self) -> [f64; 3] {
        [self.vdp, self.vqp, self.slip]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            vdp: x[0],
            vqp: x[1],
            slip: x[2],
        }
    }

    pub fn vprime(&self) -> Complex64 {
        Complex64::new(self.vdp, self.vqp)
    }
}

impl ImParams {
    pub fn new(
        rs: f64,
        xs: f64,
        rr: f64,
        xr: f64,
        xm: f64,
        h: f64,
        mva_base: f64,
    ) -> Result<Self, LoadModelError> {
        let p = Self {
            rs,
            xs,
            rr,
            xr,
            xm,
            h,
            tm0: 0.0,
            xprime: xs + xm * xr / (xm + xr),
            mva_base,
            torque_exp: 2.0,
            omega_base: OMEGA_60HZ,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_torque_exp(mut self, e: f64) -> Self {
        self.torque_exp = e;
        self
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        let bad = |m: &str| Err(LoadModelError::InvalidParameter(format!("motor: {m}")));
        if !(self.xs > 0.0 && self.xr > 0.0 && self.xm > 0.0) {
            return bad("reactances must be > 0");
        }
        if !(self.rs >= 0.0 && self.rr > 0.0) {
            return bad("rs must be >= 0 and rr > 0");
        }
        if !(self.h > 0.0) {
            return bad("h must be > 0");
        }
        if !(self.mva_base > 0.0) {
            return bad("mva_base must be > 0");
        }
        if !(self.torque_exp >= 0.0) {
            return bad("torque exponent must be >= 0");
        }
        let xp = self.xs + self.xm * self.xr / (self.xm + self.xr);
        if (xp - self.xprime).abs() > 1e-12 * xp.max(1.0) {
            return bad("xprime inconsistent with xs, xm, xr");
        }
        Ok(())
    }

    /// `xm^2 / (xr + xm)`, the gap between open-circuit and short-circuit reactance.
    fn coupling(&self) -> f64 {
        self.xm * self.xm / (self.xr + self.xm)
    }

    fn rotor_rate(&self) -> f64 {
        self.rr / (self.xr + self.xm)
    }

    fn z_short(&self) -> Complex64 {
        Complex64::new(self.rs, self.xprime)
    }

    /// Motor base over system base.
    pub fn base_ratio(&self) -> f64 {
        self.mva_base / SYSTEM_MVA_BASE
    }

    pub fn mech_torque(&self, slip: f64) -> f64 {
        let w = 1.0 - slip;
        let e = self.torque_exp;
        let scale = if e == 0.0 {
            1.0
        } else if e == 1.0 {
            w
        } else if e == 2.0 {
            w * w
        } else {
            w.max(0.0).powf(e)
        };
        self.tm0 * scale
    }

    /// Steady-state input impedance at `slip` (motor base).
    pub fn steady_state_impedance(&self, slip: f64) -> Complex64 {
        let k = slip / self.rotor_rate();
        self.z_short() + Complex64::new(0.0, self.coupling()) / Complex64::new(1.0, k)
    }
}

/// Stator current drawn by the motor, motor base.
pub fn stator_current(imp: &ImParams, st: &ImState, u: Complex64) -> Complex64 {
    (u - st.vprime()) / imp.z_short()
}

pub fn electrical_torque(imp: &ImParams, st: &ImState, u: Complex64) -> f64 {
    let i = stator_current(imp, st, u);
    st.vdp * i.re + st.vqp * i.im
}

/// Flux and slip derivatives, per second.
pub fn im_derivatives(imp: &ImParams, st: &ImState, u: Complex64) -> ImState {
    let i = stator_current(imp, st, u);
    let (id, iq) = (i.re, i.im);
    let a = imp.rotor_rate();
    let c = imp.coupling();
    let w = imp.omega_base;
    ImState {
        vdp: w * (-a * (st.vdp + c * iq) + st.slip * st.vqp),
        vqp: w * (-a * (st.vqp - c * id) - st.slip * st.vdp),
        slip: (imp.mech_torque(st.slip) - (st.vdp * id + st.vqp * iq)) / (2.0 * imp.h),
    }
}

/// Active and reactive consumption on the system base.
///
/// Numerators are expanded from `u * conj((u - v') / (rs + j x'))`.
/// Analytic `d(im_derivatives)/d(vdp, vqp, slip)`, row per derivative.
pub fn im_jacobian(imp: &ImParams, st: &ImState, u: Complex64) -> [[f64; 3]; 3] {
    let i = stator_current(imp, st, u);
    let g = 1.0 / imp.z_short();
    let (gr, gi) = (g.re, g.im);
    let a = imp.rotor_rate();
    let c = imp.coupling();
    let w = imp.omega_base;
    let s = st.slip;
    // dTe/dvdp, dTe/dvqp with i = g (u - v').
    let dte_d = i.re - st.vdp * gr - st.vqp * gi;
    let dte_q = st.vdp * gi + i.im - st.vqp * gr;
    let e = imp.torque_exp;
    let dtm = if e == 0.0 {
        0.0
    } else {
        -imp.tm0 * e * (1.0 - s).max(0.0).powf(e - 1.0)
    };
    let h2 = 2.0 * imp.h;
    [
        [w * (-a + a * c * gi), w * (a * c * gr + s), w * st.vqp],
        [w * (-a * c * gr - s), w * (-a + a * c * gi), -w * st.vdp],
        [-dte_d / h2, -dte_q / h2, dtm / h2],
    ]
}

pub fn im_pq(imp: &ImParams, st: &ImState, u: Complex64) -> (f64, f64) {
    let (ud, uq) = (u.re, u.im);
    let a = ud * (ud - st.vdp) + uq * (uq - st.vqp);
    let b = ud * st.vqp - uq * st.vdp;
    let den = imp.rs * imp.rs + imp.xprime * imp.xprime;
    let k = imp.base_ratio();
    (
        k * (imp.rs * a - imp.xprime * b) / den,
        k * (imp.xprime * a + imp.rs * b) / den,
    )
}

/// Steady-state operating point of the motor at `slip` with terminal voltage `u`.
fn steady_point(imp: &ImParams, u: Complex64, slip: f64) -> (ImState, Complex64) {
    let i = u / imp.steady_state_impedance(slip);
    let vp = u - imp.z_short() * i;
    (
        ImState {
            vdp: vp.re,
            vqp: vp.im,
            slip,
        },
        i,
    )
}

fn torque_at(imp: &ImParams, u: Complex64, slip: f64) -> f64 {
    let (st, i) = steady_point(imp, u, slip);
    st.vdp * i.re + st.vqp * i.im
}

fn power_at(imp: &ImParams, u: Complex64, slip: f64) -> f64 {
    let (_, i) = steady_point(imp, u, slip);
    (u * i.conj()).re
}

/// Slip of maximum electrical torque on (0, 1].
pub fn pullout_slip(imp: &ImParams, u: Complex64) -> f64 {
    let n = 400;
    let grid = |k: usize| 1e-5 * (1e5f64).powf(k as f64 / n as f64);
    let mut best = 0;
    for k in 1..=n {
        if torque_at(imp, u, grid(k)) > torque_at(imp, u, grid(best)) {
            best = k;
        }
    }
    let (mut lo, mut hi) = (grid(best.saturating_sub(1)), grid((best + 1).min(n)));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if torque_at(imp, u, a) < torque_at(imp, u, b) {
            lo = a;
        } else {
            hi = b;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Equilibrium of a motor drawing `p_target` (system base) at terminal voltage `u`.
///
/// Takes the smallest slip whose steady-state input power equals the
/// target, then sets `tm0` so the mechanical torque balances the
/// electrical torque there.
pub fn im_init(
    imp: &ImParams,
    u: Complex64,
    p_target: f64,
) -> Result<(ImParams, ImState), LoadModelError> {
    if !(p_target > 0.0) {
        return Err(LoadModelError::InvalidParameter(format!(
            "motor target power must be > 0, got {p_target}"
        )));
    }
    let p_m = p_target / imp.base_ratio();
    let s_pk = pullout_slip(imp, u);
    let p_pk = power_at(imp, u, s_pk);
    if p_pk < p_m {
        return Err(LoadModelError::NoEquilibrium {
            demand: p_target,
            pullout: p_pk * imp.base_ratio(),
        });
    }
    let f = |s: f64| power_at(imp, u, s) - p_m;
    let (mut lo, mut hi) = (0.0, s_pk);
    // first sign change on a log grid keeps us on the stable branch
    let n = 200;
    let mut prev = 0.0;
    for k in 1..=n {
        let s = s_pk * (1e-7f64).powf(1.0 - k as f64 / n as f64);
        if f(s) >= 0.0 {
            lo = prev;
            hi = s;
            break;
        }
        prev = s;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    let slip = 0.5 * (lo + hi);
    let (st, i) = steady_point(imp, u, slip);
    let te = st.vdp * i.re + st.vqp * i.im;
    let mut out = *imp;
    let probe = ImParams { tm0: 1.0, ..*imp };
    out.tm0 = te / probe.mech_torque(slip);
    Ok((out, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn typical(mva_base: f64) -> ImParams {
        ImParams::new(0.03, 0.08, 0.024, 0.084, 1.72, 0.5, mva_base).unwrap()
    }

    /// Air-gap torque from the textbook equivalent circuit: stator branch,
    /// magnetizing branch, rotor branch rr/s + j xr.
    fn circuit_torque(imp: &ImParams, v: f64, s: f64) -> f64 {
        let zs = Complex64::new(imp.rs, imp.xs);
        let zm = Complex64::new(0.0, imp.xm);
        let zr = Complex64::new(imp.rr / s, imp.xr);
        let zin = zs + zm * zr / (zm + zr);
        let is = Complex64::new(v, 0.0) / zin;
        let ir = is * zm / (zm + zr);
        ir.norm_sqr() * imp.rr / s
    }

    #[test]
    fn light_load_small_slip_and_equilibrium() {
        let imp = typical(100.0);
        let u = Complex64::new(1.0, 0.0);
        let (imp, st) = im_init(&imp, u, 0.5).unwrap();
        assert!(st.slip > 0.0 && st.slip < 0.05, "slip {}", st.slip);
        let d = im_derivatives(&imp, &st, u);
        for x in d.to_array() {
            assert!(x.abs() <= 1e-9, "derivative {x}");
        }
        let (p, _) = im_pq(&imp, &st, u);
        assert!((p - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn equilibrium_holds_at_rotated_terminal_voltage() {
        let imp = typical(80.0).with_torque_exp(0.0);
        let u = Complex64::from_polar(0.97, -0.4);
        let (imp, st) = im_init(&imp, u, 0.6).unwrap();
        for x in im_derivatives(&imp, &st, u).to_array() {
            assert!(x.abs() <= 1e-9);
        }
    }

    #[test]
    fn pullout_boundary() {
        let imp = typical(100.0);
        let u = Complex64::new(1.0, 0.0);
        // pull-out from a dense scan of the circuit torque
        let mut best_s = 0.0;
        let mut best_t = 0.0;
        for k in 1..=200_000 {
            let s = k as f64 / 200_000.0;
            let t = circuit_torque(&imp, 1.0, s);
            if t > best_t {
                best_t = t;
                best_s = s;
            }
        }
        let (st, i) = steady_point(&imp, u, best_s);
        let _ = st;
        let p_pk = (u * i.conj()).re;
        assert!(im_init(&imp, u, p_pk * 1.01).is_err());
        assert!(matches!(
            im_init(&imp, u, p_pk * 1.01),
            Err(LoadModelError::NoEquilibrium { .. })
        ));
        assert!(im_init(&imp, u, p_pk * 0.98).is_ok());
    }

    #[test]
    fn base_change_identity() {
        let u = Complex64::new(1.0, 0.0);
        let (a, sa) = im_init(&typical(50.0), u, 0.3).unwrap();
        let (b, sb) = im_init(&typical(100.0), u, 0.6).unwrap();
        assert!((sa.slip - sb.slip).abs() < 1e-14);
        assert!((a.tm0 - b.tm0).abs() < 1e-12);
        let pa = im_pq(&a, &sa, u);
        let pb = im_pq(&b, &sb, u);
        assert!((2.0 * pa.0 - pb.0).abs() < 1e-12);
        assert!((2.0 * pa.1 - pb.1).abs() < 1e-12);
    }

    #[test]
    fn zero_stator_current_draws_nothing() {
        let imp = typical(100.0);
        let st = ImState {
            vdp: 0.8,
            vqp: -0.3,
            slip: 0.02,
        };
        let (p, q) = im_pq(&imp, &st, st.vprime());
        assert_eq!((p, q), (0.0, 0.0));
    }

    #[test]
    fn voltage_drop_decelerates() {
        let imp = typical(100.0);
        let u = Complex64::new(1.0, 0.0);
        let (imp, st) = im_init(&imp, u, 0.7).unwrap();
        let d = im_derivatives(&imp, &st, u * 0.8);
        assert!(d.slip > 0.0);
    }

    #[test]
    fn slip_matches_circuit_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let imp = ImParams::new(
                rng.gen_range(0.01..0.05),
                rng.gen_range(0.05..0.12),
                rng.gen_range(0.01..0.05),
                rng.gen_range(0.05..0.12),
                rng.gen_range(1.5..3.0),
                rng.gen_range(0.1..1.0),
                100.0,
            )
            .unwrap();
            let v = rng.gen_range(0.95..1.05);
            let u = Complex64::new(v, 0.0);
            let (imp, st) = im_init(&imp, u, rng.gen_range(0.2..0.8)).unwrap();
            let g = |s: f64| imp.mech_torque(s) - circuit_torque(&imp, v, s);
            let (mut lo, mut hi) = (1e-9, st.slip * 2.0);
            assert!(g(lo) > 0.0 && g(hi) < 0.0);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if g(m) > 0.0 {
                    lo = m
                } else {
                    hi = m
                }
            }
            assert!((0.5 * (lo + hi) - st.slip).abs() < 1e-8);
        }
    }
}
