//! Composite loads: ZIP plus one induction motor, and CLM-lite.
//!
//! CLM-lite puts an ideal fixed-tap substation transformer, a low-side
//! shunt and a series feeder between the bus and an end-use node that
//! carries six components: three three-phase motors (Ma, Mb, Mc), a
//! single-phase motor (Md), an electronic load and a ZIP load.

use std::cell::Cell;
use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::electronic::{electronic_pq, ElectronicLoadParams, ElectronicSpec};
use super::motor::{im_derivatives, im_init, im_pq, ImParams, ImState, MotorSpec};
use super::single_phase::{sp_im_pq, sp_im_update, SinglePhaseImParams, SinglePhaseSpec, SpState};
use super::{check_simplex, zip_pq_lv, DynamicLoad, LoadModelError, ZipFractions, ZipParams, LV_BREAKPOINT};

/// Load base of the feeder impedance is the load MW over this power factor.
const FEEDER_BASE_PF: f64 = 0.8;

fn param(params: &BTreeMap<String, f64>, key: &str) -> Result<f64, LoadModelError> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| LoadModelError::InvalidParameter(format!("missing {key}")))
}

/// ZIP fractions from `zip.p1c`, `zip.p2c`, `zip.q1c`, `zip.q2c`; the
/// constant-power share takes the remainder.
pub fn zip_from_params(params: &BTreeMap<String, f64>) -> Result<ZipFractions, LoadModelError> {
    let (p1, p2) = (param(params, "zip.p1c")?, param(params, "zip.p2c")?);
    let (q1, q2) = (param(params, "zip.q1c")?, param(params, "zip.q2c")?);
    let f = ZipFractions::from_channels([p1, p2, 1.0 - p1 - p2], [q1, q2, 1.0 - q1 - q2]);
    f.validate()?;
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipImParams {
    pub f_zip: f64,
    pub f_im: f64,
    pub zip: ZipFractions,
    pub motor: MotorSpec,
}

impl ZipImParams {
    /// Build from a flat parameter map (`im.*`, `zip.*` keys).
    pub fn from_params(
        f_zip: f64,
        f_im: f64,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, LoadModelError> {
        let p = Self {
            f_zip,
            f_im,
            zip: zip_from_params(params)?,
            motor: MotorSpec::from_params("im", params)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        check_simplex(&[self.f_zip, self.f_im])?;
        self.zip.validate()?;
        self.motor.validate()
    }
}

/// ZIP+IM bound to an operating point. The ZIP part absorbs whatever
/// reactive power the motor does not draw.
#[derive(Debug, Clone)]
pub struct ZipImLoad {
    pub zip: ZipParams,
    pub motor: Option<ImParams>,
    x0: Vec<f64>,
}

impl ZipImLoad {
    pub fn init(
        p: &ZipImParams,
        v0: Complex64,
        p0: f64,
        q0: f64,
    ) -> Result<Self, LoadModelError> {
        let p_im = p.f_im * p0;
        let (motor, x0, q_im) = if p_im > 0.0 {
            let (imp, st) = im_init(&p.motor.params(p_im)?, v0, p_im)?;
            let q = im_pq(&imp, &st, v0).1;
            (Some(imp), st.to_array().to_vec(), q)
        } else {
            (None, Vec::new(), 0.0)
        };
        Ok(Self {
            zip: ZipParams::new(p.f_zip * p0, q0 - q_im, v0.norm(), p.zip),
            motor,
            x0,
        })
    }
}

impl DynamicLoad for ZipImLoad {
    fn n_states(&self) -> usize {
        self.x0.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn evaluate(&self, x: &[f64], v: Complex64, dx: Option<&mut [f64]>) -> (f64, f64) {
        let (mut p, mut q) = zip_pq_lv(&self.zip, v.norm(), LV_BREAKPOINT);
        if let Some(imp) = &self.motor {
            let st = ImState::from_slice(x);
            let (pm, qm) = im_pq(imp, &st, v);
            p += pm;
            q += qm;
            if let Some(dx) = dx {
                dx.copy_from_slice(&im_derivatives(imp, &st, v).to_array());
            }
        }
        (p, q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClmLiteParams {
    /// Shares of Ma, Mb, Mc, Md, Elec, ZIP.
    pub fractions: [f64; 6],
    /// Feeder series impedance on the load base (load MW / 0.8).
    pub feeder_r: f64,
    pub feeder_x: f64,
    /// Low-side shunt, system per unit. `None` sizes it at initialization
    /// so the substation draws exactly the bus reactive load.
    pub shunt_b: Option<f64>,
    pub tap: f64,
    pub ma: MotorSpec,
    pub mb: MotorSpec,
    pub mc: MotorSpec,
    pub md: SinglePhaseSpec,
    pub elec: ElectronicSpec,
    pub zip: ZipFractions,
    /// Power factor of the ZIP component when the shunt is sized automatically.
    pub zip_pf: f64,
}

impl ClmLiteParams {
    /// Build from a flat parameter map (`ma.*`, `mb.*`, `mc.*`, `md.*`,
    /// `elec.*`, `zip.*`, `feeder.*`, `sub.tap`).
    pub fn from_params(
        fractions: [f64; 6],
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, LoadModelError> {
        let md = SinglePhaseSpec {
            pf: param(params, "md.pf")?,
            v_stall: param(params, "md.v_stall")?,
            t_stall: param(params, "md.t_stall")?,
            g_stall: param(params, "md.g_stall")?,
            b_stall: param(params, "md.b_stall")?,
            f_restart: param(params, "md.f_restart")?,
            v_restart: param(params, "md.v_restart")?,
        };
        let p = Self {
            fractions,
            feeder_r: param(params, "feeder.r")?,
            feeder_x: param(params, "feeder.x")?,
            shunt_b: None,
            tap: param(params, "sub.tap")?,
            ma: MotorSpec::from_params("ma", params)?,
            mb: MotorSpec::from_params("mb", params)?,
            mc: MotorSpec::from_params("mc", params)?,
            md,
            elec: ElectronicSpec {
                v_full: param(params, "elec.v_full")?,
                v_off: param(params, "elec.v_off")?,
            },
            zip: zip_from_params(params)?,
            zip_pf: param(params, "zip.pf")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        check_simplex(&self.fractions)?;
        if !(self.feeder_r >= 0.0 && self.feeder_x >= 0.0) {
            return Err(LoadModelError::InvalidParameter(
                "feeder impedance must be >= 0".into(),
            ));
        }
        if !(self.tap > 0.0) {
            return Err(LoadModelError::InvalidParameter("tap must be > 0".into()));
        }
        if !(self.zip_pf > 0.0 && self.zip_pf <= 1.0) {
            return Err(LoadModelError::InvalidParameter(format!(
                "ZIP power factor {} outside (0, 1]",
                self.zip_pf
            )));
        }
        for m in [&self.ma, &self.mb, &self.mc] {
            m.validate()?;
        }
        self.md.validate()?;
        self.elec.validate()?;
        self.zip.validate()
    }

    fn motor(&self, k: usize) -> &MotorSpec {
        [&self.ma, &self.mb, &self.mc][k]
    }
}

/// Components at the end-use node, each sized for its share of `p_end`.
#[derive(Debug, Clone)]
struct EndUse {
    motors: Vec<ImParams>,
    x0: Vec<f64>,
    md: Option<SinglePhaseImParams>,
    elec: Option<ElectronicLoadParams>,
    zip: Option<ZipParams>,
}

impl EndUse {
    fn build(
        p: &ClmLiteParams,
        ve: Complex64,
        p_end: f64,
        q_zip: f64,
    ) -> Result<Self, LoadModelError> {
        let vm = ve.norm();
        let mut motors = Vec::new();
        let mut x0 = Vec::new();
        for k in 0..3 {
            let share = p.fractions[k] * p_end;
            if share > 0.0 {
                let (imp, st) = im_init(&p.motor(k).params(share)?, ve, share)?;
                motors.push(imp);
                x0.extend(st.to_array());
            }
        }
        let md = (p.fractions[3] > 0.0).then(|| p.md.params(p.fractions[3] * p_end, vm));
        let elec = if p.fractions[4] > 0.0 {
            Some(ElectronicLoadParams::drawing(&p.elec, p.fractions[4] * p_end, vm)?)
        } else {
            None
        };
        let zip = (p.fractions[5] > 0.0)
            .then(|| ZipParams::new(p.fractions[5] * p_end, q_zip, vm, p.zip));
        Ok(Self {
            motors,
            x0,
            md,
            elec,
            zip,
        })
    }

    fn consumption(
        &self,
        x: &[f64],
        md_state: &SpState,
        ve: Complex64,
        mut dx: Option<&mut [f64]>,
    ) -> Complex64 {
        let vm = ve.norm();
        let mut s = Complex64::new(0.0, 0.0);
        for (k, imp) in self.motors.iter().enumerate() {
            let st = ImState::from_slice(&x[3 * k..3 * k + 3]);
            let (p, q) = im_pq(imp, &st, ve);
            s += Complex64::new(p, q);
            if let Some(dx) = dx.as_deref_mut() {
                dx[3 * k..3 * k + 3].copy_from_slice(&im_derivatives(imp, &st, ve).to_array());
            }
        }
        if let Some(md) = &self.md {
            let (p, q) = sp_im_pq(md, md_state, vm);
            s += Complex64::new(p, q);
        }
        if let Some(e) = &self.elec {
            let (p, q) = electronic_pq(e, vm);
            s += Complex64::new(p, q);
        }
        if let Some(z) = &self.zip {
            let (p, q) = zip_pq_lv(z, vm, LV_BREAKPOINT);
            s += Complex64::new(p, q);
        }
        s
    }
}

/// CLM-lite bound to an operating point.
#[derive(Debug, Clone)]
pub struct ClmLiteLoad {
    pub tap: f64,
    /// Low-side shunt actually used (sized or fixed), system per unit.
    pub shunt_b: f64,
    /// Feeder impedance on the system base.
    pub z_feeder: Complex64,
    /// Active power drawn at the end-use node at initialization.
    pub p_end: f64,
    end: EndUse,
    md_state: SpState,
    v_end: Cell<Complex64>,
}

impl ClmLiteLoad {
    pub fn init(
        p: &ClmLiteParams,
        v0: Complex64,
        p0: f64,
        q0: f64,
    ) -> Result<Self, LoadModelError> {
        if !(p0 > 0.0) {
            return Err(LoadModelError::Init(format!(
                "CLM-lite needs a positive active load, got {p0}"
            )));
        }
        let v_low = v0 / p.tap;
        let z_f = Complex64::new(p.feeder_r, p.feeder_x) / (p0 / FEEDER_BASE_PF);
        let zip_tan = (1.0 / (p.zip_pf * p.zip_pf) - 1.0).max(0.0).sqrt();
        let vl2 = v_low.norm_sqr();

        let mut p_end = p0;
        let mut q_zip = p.fractions[5] * p0 * zip_tan;
        let mut ve = v_low;
        let mut b = p.shunt_b.unwrap_or(0.0);
        let mut settled = false;
        for _ in 0..500 {
            let eu = EndUse::build(p, ve, p_end, q_zip)?;
            let s_e = eu.consumption(&eu.x0, &SpState::default(), ve, None);
            let mut ve_new = ve;
            for _ in 0..200 {
                let next = v_low - z_f * (s_e / ve_new).conj();
                let step = (next - ve_new).norm();
                ve_new = next;
                if step < 1e-15 {
                    break;
                }
            }
            let s_feed = v_low * s_e / ve_new;
            let dp = p0 - s_feed.re;
            let dq = match p.shunt_b {
                None => {
                    b = (s_feed.im - q0) / vl2;
                    0.0
                }
                Some(b) => q0 - (s_feed.im - b * vl2),
            };
            p_end += dp;
            if p.fractions[5] > 0.0 {
                q_zip += dq;
            }
            let moved = (ve_new - ve).norm();
            ve = ve_new;
            if dp.abs() < 1e-14 && dq.abs() < 1e-14 && moved < 1e-14 {
                settled = true;
                break;
            }
        }
        let end = EndUse::build(p, ve, p_end, q_zip)?;
        let out = Self {
            tap: p.tap,
            shunt_b: b,
            z_feeder: z_f,
            p_end,
            end,
            md_state: SpState::default(),
            v_end: Cell::new(ve),
        };
        let (pc, qc) = out.power(&out.end.x0, v0);
        if !settled && ((pc - p0).abs() > 1e-9 || (qc - q0).abs() > 1e-9) {
            return Err(LoadModelError::Init(format!(
                "CLM-lite cannot match ({p0}, {q0}); reached ({pc}, {qc})"
            )));
        }
        Ok(out)
    }

    /// End-use node voltage that balances the feeder for states `x`.
    pub fn end_voltage(&self, x: &[f64], v_low: Complex64) -> Complex64 {
        if self.z_feeder.norm() == 0.0 || v_low.norm() < 1e-9 {
            return v_low;
        }
        let resid = |ve: Complex64| {
            let s = self.end.consumption(x, &self.md_state, ve, None);
            ve + self.z_feeder * (s / ve).conj() - v_low
        };
        let mut ve = self.v_end.get();
        if !(ve.norm() > 1e-6) || resid(v_low).norm() < resid(ve).norm() {
            ve = v_low;
        }
        let mut f = resid(ve);
        for _ in 0..50 {
            if f.norm() < 1e-13 {
                break;
            }
            let h = 1e-7 * ve.norm().max(1e-3);
            let fr = (resid(ve + Complex64::new(h, 0.0)) - f) / h;
            let fi = (resid(ve + Complex64::new(0.0, h)) - f) / h;
            let det = fr.re * fi.im - fi.re * fr.im;
            if det.abs() < 1e-300 {
                break;
            }
            let dre = (-f.re * fi.im + fi.re * f.im) / det;
            let dim = (-fr.re * f.im + fr.im * f.re) / det;
            let step = Complex64::new(dre, dim);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let trial = ve + step * lambda;
                let ft = resid(trial);
                if ft.norm() < f.norm() {
                    ve = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        self.v_end.set(ve);
        ve
    }

    pub fn stall_state(&self) -> SpState {
        self.md_state
    }
}

impl DynamicLoad for ClmLiteLoad {
    fn n_states(&self) -> usize {
        self.end.x0.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.end.x0.clone()
    }

    fn evaluate(&self, x: &[f64], v: Complex64, dx: Option<&mut [f64]>) -> (f64, f64) {
        let v_low = v / self.tap;
        let ve = self.end_voltage(x, v_low);
        let s_e = self.end.consumption(x, &self.md_state, ve, dx);
        if v_low.norm() < 1e-9 {
            return (0.0, 0.0);
        }
        let shunt = self.shunt_b * v_low.norm_sqr();
        let s_feed = if self.z_feeder.norm() == 0.0 {
            s_e
        } else {
            v_low * s_e / ve
        };
        (s_feed.re, s_feed.im - shunt)
    }

    fn update_discrete(&mut self, x: &[f64], v: Complex64, dt: f64) -> bool {
        let Some(md) = &self.end.md else {
            return false;
        };
        let ve = self.end_voltage(x, v / self.tap);
        let next = sp_im_update(md, &self.md_state, ve.norm(), dt).0;
        let changed = next.stalled != self.md_state.stalled;
        self.md_state = next;
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loadmodels::motor::im_pq;
    use crate::loadmodels::ParamRanges;

    fn mid() -> BTreeMap<String, f64> {
        ParamRanges::default().midpoints()
    }

    fn reference() -> ClmLiteParams {
        ClmLiteParams::from_params(crate::loadmodels::reference_clm_fractions(), &mid()).unwrap()
    }

    #[test]
    fn zip_im_without_motor_is_zip() {
        let p = ZipImParams::from_params(1.0, 0.0, &mid()).unwrap();
        let v0 = Complex64::new(1.01, 0.0);
        let l = ZipImLoad::init(&p, v0, 2.0, 0.6).unwrap();
        let zip = ZipParams::new(2.0, 0.6, 1.01, p.zip);
        for k in 0..30 {
            let v = 0.3 + 0.03 * k as f64;
            assert_eq!(l.power(&[], Complex64::new(v, 0.0)), zip_pq_lv(&zip, v, LV_BREAKPOINT));
        }
    }

    #[test]
    fn zip_im_all_motor_is_pure_motor() {
        let p = ZipImParams::from_params(0.0, 1.0, &mid()).unwrap();
        let v0 = Complex64::new(1.0, 0.0);
        let imp = p.motor.params(1.5).unwrap();
        let (imp, st) = im_init(&imp, v0, 1.5).unwrap();
        let q_im = im_pq(&imp, &st, v0).1;
        let l = ZipImLoad::init(&p, v0, 1.5, q_im).unwrap();
        assert_eq!(l.zip.p0, 0.0);
        assert!(l.zip.q0.abs() < 1e-15);
        let x = l.initial_state();
        for v in [0.5, 0.8, 1.05] {
            let u = Complex64::new(v, 0.1);
            let a = l.power(&x, u);
            let b = im_pq(&imp, &st, u);
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn clm_all_zip_without_network_equals_zip() {
        let mut p = reference();
        p.fractions = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        p.feeder_r = 0.0;
        p.feeder_x = 0.0;
        p.tap = 1.0;
        p.shunt_b = Some(0.0);
        let v0 = Complex64::from_polar(0.98, 0.2);
        let l = ClmLiteLoad::init(&p, v0, 1.2, 0.35).unwrap();
        let zip = ZipParams::new(1.2, 0.35, 0.98, p.zip);
        for k in 0..40 {
            let v = 0.2 + 0.025 * k as f64;
            let a = l.power(&[], Complex64::new(v, 0.0));
            let b = zip_pq_lv(&zip, v, LV_BREAKPOINT);
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12, "v = {v}");
        }
    }

    #[test]
    fn reference_composition_initializes_at_equilibrium() {
        let v0 = Complex64::from_polar(1.0, -0.1);
        let l = ClmLiteLoad::init(&reference(), v0, 6.28, 1.03).unwrap();
        let x = l.initial_state();
        assert_eq!(x.len(), 9);
        let mut dx = vec![0.0; 9];
        let (p, q) = l.evaluate(&x, v0, Some(&mut dx));
        assert!((p - 6.28).abs() < 1e-9 && (q - 1.03).abs() < 1e-9);
        assert!(dx.iter().all(|d| d.abs() < 1e-9), "{dx:?}");
        assert!(l.p_end < 6.28, "feeder losses come out of the end-use load");
    }

    #[test]
    fn fixed_shunt_without_zip_cannot_match_arbitrary_q() {
        let mut p = reference();
        p.fractions = [0.3, 0.3, 0.2, 0.2, 0.0, 0.0];
        p.shunt_b = Some(0.0);
        assert!(ClmLiteLoad::init(&p, Complex64::new(1.0, 0.0), 2.0, -3.0).is_err());
    }

    #[test]
    fn sustained_low_voltage_stalls_single_phase_motors() {
        let v0 = Complex64::new(1.0, 0.0);
        let mut l = ClmLiteLoad::init(&reference(), v0, 2.0, 0.4).unwrap();
        let x = l.initial_state();
        let low = Complex64::new(0.45, 0.0);
        let before = l.power(&x, low).0;
        for _ in 0..40 {
            l.update_discrete(&x, low, 1.0 / 240.0);
        }
        assert_eq!(l.stall_state().stalled, 1.0);
        assert!(l.power(&x, low).0 > before);
    }
}
