//! Load-model fitting: a deep Q-learning search over load compositions
//! (stage one) followed by Monte-Carlo refinement of the remaining
//! parameters (stage two).
//!
//! The agent's state is a composition on the probability simplex and each
//! action moves a fixed share between two components. A composition is
//! scored by simulating the recorded disturbance with parameter sets drawn
//! uniformly from the range table and averaging the trajectory loss over
//! the draws. Simulations replay the recorded bus voltage into the load
//! model alone (see [`playback`]).
//!
//! ```no_run
//! use tslim::ddqnfit::{train_stage_one, FitProblem, HyperParams, LossConfig, ModelFamily};
//! use tslim::loadmodels::ParamRanges;
//! use tslim::tdsim::Trajectory;
//!
//! let reference = Trajectory::load_csv("reference.csv".as_ref()).unwrap();
//! let problem = FitProblem::new(ModelFamily::Zip, reference, 20, vec![], ParamRanges::default()).unwrap();
//! let out = train_stage_one(&problem, &HyperParams::default(), &LossConfig::default(), 7).unwrap();
//! println!("{:?}", out.candidates[0].composition);
//! ```

mod action;
mod agent;
mod fit;
mod loss;
mod mlp;
pub mod playback;
pub mod seeds;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loadmodels::{LoadComposition, ParamRanges, CLM_LABELS, ZIP_IM_LABELS, ZIP_LABELS};
use crate::tdsim::{Event, Trajectory};

pub use action::{action_index, action_space, apply_action, compensated_sum, FractionAction};
pub use agent::{
    ddqn_update, epsilon, td_loss_and_grad, td_target, train_agent, Environment, EpisodeRecord,
    QFunctionPair, ReplayBuffer, Step, TabularQPair, Transition,
};
pub use fit::{
    build_spec, evaluate_composition, fitted_spec, rank_candidates, reward, stage_two_monte_carlo,
    train_stage_one, Evaluation, Evaluator, StageOneResult, StageTwoResult,
};
pub use loss::{
    channel_loss, empirical_quantile, pinball, pinball_score, pq_loss, rmse, LossConfig,
    PinballConfig,
};
pub use mlp::{Mlp, Tape};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("trajectory length mismatch: fit {fit}, reference {reference}")]
    LengthMismatch { fit: usize, reference: usize },
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("no composition scored below the failure penalty {penalty}")]
    NoCandidate { penalty: f64 },
    #[error("all {0} parameter draws failed to simulate")]
    AllFailed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "ZIP")]
    Zip,
    #[serde(rename = "ZIP+IM")]
    ZipIm,
    #[serde(rename = "CLM-lite")]
    ClmLite,
}

impl ModelFamily {
    pub fn labels(&self) -> &'static [&'static str] {
        match self {
            Self::Zip => &ZIP_LABELS,
            Self::ZipIm => &ZIP_IM_LABELS,
            Self::ClmLite => &CLM_LABELS,
        }
    }

    pub fn n_components(&self) -> usize {
        self.labels().len()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zip => "ZIP",
            Self::ZipIm => "ZIP+IM",
            Self::ClmLite => "CLM-lite",
        }
    }

    /// Whether any parameter beyond the composition is drawn from ranges.
    pub fn has_free_parameters(&self) -> bool {
        !matches!(self, Self::Zip)
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, FitError> {
        match s.to_ascii_lowercase().as_str() {
            "zip" => Ok(Self::Zip),
            "zip+im" | "zip_im" | "zipim" => Ok(Self::ZipIm),
            "clm-lite" | "clm_lite" | "clm" => Ok(Self::ClmLite),
            _ => Err(FitError::InvalidConfig(format!("unknown model family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub lr_alpha: f64,
    pub gamma: f64,
    pub delta_f: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_update_interval: usize,
    pub episodes: usize,
    pub max_steps_per_episode: usize,
    pub m_samples: usize,
    pub loss_threshold: f64,
    /// Number of distinct compositions returned by stage one.
    pub top_k: usize,
    pub hidden: Vec<usize>,
    /// Select the bootstrap action with the online network instead of
    /// maximizing the delayed one.
    pub double_dqn_canonical: bool,
    /// Lower bound of the loss assigned to a failed simulation.
    pub penalty_floor: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lr_alpha: 1e-3,
            gamma: 0.9,
            delta_f: 0.05,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 200,
            replay_capacity: 20_000,
            batch_size: 32,
            target_update_interval: 200,
            episodes: 300,
            max_steps_per_episode: 100,
            m_samples: 10,
            loss_threshold: 1e-6,
            top_k: 5,
            hidden: vec![64, 64],
            double_dqn_canonical: false,
            penalty_floor: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: &str| Err(FitError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.lr_alpha > 0.0) {
            return bad("lr_alpha must be > 0");
        }
        if !(self.delta_f > 0.0 && self.delta_f <= 0.5) {
            return bad("delta_f must lie in (0, 0.5]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon bounds must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if self.m_samples == 0 || self.top_k == 0 || self.max_steps_per_episode == 0 {
            return bad("m_samples, top_k and max_steps_per_episode must be > 0");
        }
        if !(self.penalty_floor > 0.0) {
            return bad("penalty_floor must be > 0");
        }
        Ok(())
    }
}

/// What to fit and against which recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub family: ModelFamily,
    /// Must record `bus`, including its voltage angle.
    pub reference: Trajectory,
    pub bus: u32,
    /// Disturbance that produced the reference; marks topology changes.
    pub events: Vec<Event>,
    pub ranges: ParamRanges,
    pub n_components: usize,
}

impl FitProblem {
    pub fn new(
        family: ModelFamily,
        reference: Trajectory,
        bus: u32,
        events: Vec<Event>,
        ranges: ParamRanges,
    ) -> Result<Self, FitError> {
        let p = Self {
            n_components: family.n_components(),
            family,
            reference,
            bus,
            events,
            ranges,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.n_components != self.family.n_components() {
            return Err(FitError::InvalidProblem(format!(
                "{} has {} components, problem declares {}",
                self.family.name(),
                self.family.n_components(),
                self.n_components
            )));
        }
        let slot = self
            .reference
            .bus_slot(self.bus)
            .ok_or_else(|| FitError::InvalidProblem(format!("reference does not record bus {}", self.bus)))?;
        let n = self.reference.len();
        let r = &self.reference;
        let complete = [&r.v_mag, &r.v_ang, &r.p_load, &r.q_load]
            .iter()
            .all(|s| s.get(slot).is_some_and(|x| x.len() == n));
        if n < 2 || !complete || r.has_non_finite() {
            return Err(FitError::InvalidProblem("reference series incomplete".into()));
        }
        self.ranges
            .validate()
            .map_err(|e| FitError::InvalidProblem(e.to_string()))
    }

    /// Reference `(P, Q)` at the fitted bus.
    pub fn reference_pq(&self) -> (&[f64], &[f64]) {
        let slot = self.reference.bus_slot(self.bus).expect("validated");
        (&self.reference.p_load[slot], &self.reference.q_load[slot])
    }
}

/// One simulated response of a candidate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleTrajectory {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    /// Component shares; for ZIP the active-power split.
    pub composition: LoadComposition,
    /// ZIP only: the reactive-power split.
    #[serde(default)]
    pub q_composition: Option<LoadComposition>,
    pub mean_loss: f64,
    #[serde(default)]
    pub pinball_score: Option<f64>,
    #[serde(default)]
    pub best_params: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(default)]
    pub final_loss: Option<f64>,
    #[serde(default)]
    pub samples: Vec<SampleTrajectory>,
}
