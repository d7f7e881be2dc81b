//! Load models: static ZIP, ZIP plus a third-order induction motor, and a
//! reduced composite load ("CLM-lite") with substation, feeder and six
//! end-use components.
//!
//! A [`LoadModelSpec`] is configuration only. Binding it to an operating
//! point with [`LoadModelSpec::instantiate`] yields a [`LoadInstance`]
//! whose continuous states live outside it (so an integrator can own them)
//! and whose discrete states (single-phase motor stall timers) live inside.
//!
//! All powers are consumption, per unit on the system base.

pub mod composite;
pub mod electronic;
pub mod motor;
pub mod ranges;
pub mod single_phase;
pub mod zip;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use composite::{ClmLiteLoad, ClmLiteParams, ZipImLoad, ZipImParams};
pub use electronic::{electronic_pq, ElectronicLoadParams, ElectronicSpec};
pub use motor::{im_derivatives, im_init, im_jacobian, im_pq, ImParams, ImState, MotorSpec};
pub use ranges::ParamRanges;
pub use single_phase::{sp_im_pq, sp_im_update, SinglePhaseImParams, SinglePhaseSpec, SpState};
pub use zip::{zip_pq, zip_pq_lv, ZipFractions, ZipParams};

/// Below this voltage, constant-current and constant-power terms are
/// evaluated as constant impedance during dynamic simulation.
pub const LV_BREAKPOINT: f64 = 0.7;

pub const CLM_LABELS: [&str; 6] = ["Ma", "Mb", "Mc", "Md", "Elec", "ZIP"];
pub const ZIP_IM_LABELS: [&str; 2] = ["ZIP", "IM"];
pub const ZIP_LABELS: [&str; 3] = ["Z", "I", "P"];

/// Reference composite-load mix over [`CLM_LABELS`] as commonly quoted,
/// `[0.1, 0.15, 0.1, 0.2, 0.1, 0.45]`. Those shares add up to 1.1, so
/// they are scaled proportionally onto the simplex.
pub fn reference_clm_fractions() -> [f64; 6] {
    let raw = [0.1, 0.15, 0.1, 0.2, 0.1, 0.45];
    let sum: f64 = raw.iter().sum();
    raw.map(|f| f / sum)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadModelError {
    #[error("invalid load-model parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown static preset {0:?}")]
    UnknownPreset(String),
    #[error("motor demand {demand:.6} exceeds pull-out power {pullout:.6}")]
    NoEquilibrium { demand: f64, pullout: f64 },
    #[error("load initialization failed: {0}")]
    Init(String),
}

/// Fractions of a load over named components (a point on the simplex).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadComposition {
    pub labels: Vec<String>,
    pub f: Vec<f64>,
}

impl LoadComposition {
    pub fn new(labels: &[&str], f: Vec<f64>) -> Result<Self, LoadModelError> {
        let c = Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            f,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn uniform(labels: &[&str]) -> Self {
        let n = labels.len();
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            f: vec![1.0 / n as f64; n],
        }
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        check_simplex(&self.f)?;
        if self.labels.len() != self.f.len() {
            return Err(LoadModelError::InvalidParameter(format!(
                "{} labels for {} fractions",
                self.labels.len(),
                self.f.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_simplex(f: &[f64]) -> Result<(), LoadModelError> {
    if f.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(LoadModelError::InvalidParameter(format!(
            "fractions {f:?} outside [0, 1]"
        )));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(LoadModelError::InvalidParameter(format!(
            "fractions {f:?} sum to {sum}"
        )));
    }
    Ok(())
}

/// Load model attached to a bus in a case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LoadModelSpec {
    Zip(ZipFractions),
    ZipIm(ZipImParams),
    ClmLite(ClmLiteParams),
    StaticPreset { name: String },
}

impl LoadModelSpec {
    pub fn static_preset(name: &str) -> Self {
        Self::StaticPreset {
            name: name.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        match self {
            Self::Zip(f) => f.validate(),
            Self::ZipIm(p) => p.validate(),
            Self::ClmLite(p) => p.validate(),
            Self::StaticPreset { name } => ZipFractions::from_preset(name).map(|_| ()),
        }
    }

    /// Short family name used in reports.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Zip(_) => "ZIP",
            Self::ZipIm(_) => "ZIP+IM",
            Self::ClmLite(_) => "CLM-lite",
            Self::StaticPreset { .. } => "static",
        }
    }

    /// Bind to an operating point: terminal voltage `v0`, consumption `p0 + j q0`.
    pub fn instantiate(
        &self,
        v0: Complex64,
        p0: f64,
        q0: f64,
    ) -> Result<LoadInstance, LoadModelError> {
        self.validate()?;
        let vm = v0.norm();
        if !(vm > 0.0) {
            return Err(LoadModelError::Init(format!("terminal voltage {vm} <= 0")));
        }
        Ok(match self {
            Self::Zip(f) => LoadInstance::Zip(ZipParams::new(p0, q0, vm, *f)),
            Self::StaticPreset { name } => {
                LoadInstance::Zip(ZipParams::new(p0, q0, vm, ZipFractions::from_preset(name)?))
            }
            Self::ZipIm(p) => LoadInstance::ZipIm(ZipImLoad::init(p, v0, p0, q0)?),
            Self::ClmLite(p) => LoadInstance::ClmLite(Box::new(ClmLiteLoad::init(p, v0, p0, q0)?)),
        })
    }
}

/// Behavioural contract shared by every bound load model.
///
/// `x` is the model's slice of continuous states. `power` and
/// `derivatives` are pure in `x` and `v`; `update_discrete` advances
/// switching logic once per accepted time step.
pub trait DynamicLoad {
    fn n_states(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    /// Consumption and, when `dx` is given, state derivatives.
    fn evaluate(&self, x: &[f64], v: Complex64, dx: Option<&mut [f64]>) -> (f64, f64);
    /// Returns true when the switching state changed.
    fn update_discrete(&mut self, _x: &[f64], _v: Complex64, _dt: f64) -> bool {
        false
    }

    fn power(&self, x: &[f64], v: Complex64) -> (f64, f64) {
        self.evaluate(x, v, None)
    }

    fn derivatives(&self, x: &[f64], v: Complex64, dx: &mut [f64]) {
        self.evaluate(x, v, Some(dx));
    }
}

impl DynamicLoad for ZipParams {
    fn n_states(&self) -> usize {
        0
    }

    fn initial_state(&self) -> Vec<f64> {
        Vec::new()
    }

    fn evaluate(&self, _x: &[f64], v: Complex64, _dx: Option<&mut [f64]>) -> (f64, f64) {
        zip_pq_lv(self, v.norm(), LV_BREAKPOINT)
    }
}

#[derive(Debug, Clone)]
pub enum LoadInstance {
    Zip(ZipParams),
    ZipIm(ZipImLoad),
    ClmLite(Box<ClmLiteLoad>),
}

impl LoadInstance {
    fn inner(&self) -> &dyn DynamicLoad {
        match self {
            Self::Zip(z) => z,
            Self::ZipIm(l) => l,
            Self::ClmLite(l) => l.as_ref(),
        }
    }

    fn inner_mut(&mut self) -> &mut dyn DynamicLoad {
        match self {
            Self::Zip(z) => z,
            Self::ZipIm(l) => l,
            Self::ClmLite(l) => l.as_mut(),
        }
    }
}

impl DynamicLoad for LoadInstance {
    fn n_states(&self) -> usize {
        self.inner().n_states()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.inner().initial_state()
    }

    fn evaluate(&self, x: &[f64], v: Complex64, dx: Option<&mut [f64]>) -> (f64, f64) {
        self.inner().evaluate(x, v, dx)
    }

    fn update_discrete(&mut self, x: &[f64], v: Complex64, dt: f64) -> bool {
        self.inner_mut().update_discrete(x, v, dt)
    }
}
