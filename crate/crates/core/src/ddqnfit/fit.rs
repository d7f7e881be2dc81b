use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::action::{action_space, apply_action, FractionAction};
use super::agent::{train_agent, Environment, EpisodeRecord, Step};
use super::loss::{channel_loss, pinball_score, LossConfig, PinballConfig};
use super::playback::{playback, VoltageRecord};
use super::seeds::{rng_for, sub_seed};
use super::{CandidateSolution, FitError, FitProblem, HyperParams, ModelFamily, SampleTrajectory};
use crate::loadmodels::{
    ClmLiteParams, LoadComposition, LoadModelSpec, ParamRanges, ZipFractions, ZipImParams,
};

/// Model for a composition and a flat parameter map. For ZIP the
/// composition is the active-power split and `q_comp` the reactive one
/// (defaulting to the same split).
pub fn build_spec(
    family: ModelFamily,
    comp: &[f64],
    q_comp: Option<&[f64]>,
    params: &BTreeMap<String, f64>,
) -> Result<LoadModelSpec, FitError> {
    let bad = |e: crate::loadmodels::LoadModelError| FitError::InvalidProblem(e.to_string());
    if comp.len() != family.n_components() {
        return Err(FitError::InvalidProblem(format!(
            "{} needs {} shares, got {}",
            family.name(),
            family.n_components(),
            comp.len()
        )));
    }
    Ok(match family {
        ModelFamily::Zip => {
            let q = q_comp.unwrap_or(comp);
            let f = ZipFractions::from_channels([comp[0], comp[1], comp[2]], [q[0], q[1], q[2]]);
            f.validate().map_err(bad)?;
            LoadModelSpec::Zip(f)
        }
        ModelFamily::ZipIm => LoadModelSpec::ZipIm(ZipImParams::from_params(comp[0], comp[1], params).map_err(bad)?),
        ModelFamily::ClmLite => {
            let f: [f64; 6] = comp.try_into().expect("length checked");
            LoadModelSpec::ClmLite(ClmLiteParams::from_params(f, params).map_err(bad)?)
        }
    })
}

/// The fitted model of a candidate; needs stage-two parameters unless the
/// family has none.
pub fn fitted_spec(family: ModelFamily, c: &CandidateSolution) -> Result<LoadModelSpec, FitError> {
    let empty = BTreeMap::new();
    let params = match (&c.best_params, family.has_free_parameters()) {
        (Some(p), _) => p,
        (None, false) => &empty,
        (None, true) => {
            return Err(FitError::InvalidProblem(format!(
                "{} candidate has no refined parameters",
                family.name()
            )))
        }
    };
    build_spec(family, &c.composition.f, c.q_composition.as_ref().map(|q| q.f.as_slice()), params)
}

/// `(-mean_loss, false)`, or `(1 - mean_loss, true)` below the threshold.
pub fn reward(mean_loss: f64, loss_threshold: f64) -> (f64, bool) {
    if mean_loss < loss_threshold {
        (1.0 - mean_loss, true)
    } else {
        (-mean_loss, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean over draws of the P loss plus `w_q` times the Q loss.
    pub mean_loss: f64,
    pub loss_p: f64,
    pub loss_q: f64,
    pub failures: usize,
    pub samples: Vec<SampleTrajectory>,
}

fn relevant_ranges(family: ModelFamily, ranges: &ParamRanges) -> ParamRanges {
    let keep = |k: &str| match family {
        ModelFamily::Zip => false,
        ModelFamily::ZipIm => k.starts_with("im.") || k.starts_with("zip."),
        ModelFamily::ClmLite => !k.starts_with("im."),
    };
    ParamRanges(ranges.0.iter().filter(|(k, _)| keep(k)).map(|(k, v)| (k.clone(), *v)).collect())
}

/// Scores compositions of one problem. Failed simulations cost
/// `max(penalty_floor, 10 * worst valid loss seen so far)`.
pub struct Evaluator<'a> {
    problem: &'a FitProblem,
    loss: LossConfig,
    rec: VoltageRecord,
    ranges: ParamRanges,
    penalty_floor: f64,
    worst_valid: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a FitProblem, loss: LossConfig, penalty_floor: f64) -> Result<Self, FitError> {
        problem.validate()?;
        loss.validate()?;
        Ok(Self {
            rec: VoltageRecord::from_trajectory(&problem.reference, problem.bus, &problem.events)?,
            ranges: relevant_ranges(problem.family, &problem.ranges),
            problem,
            loss,
            penalty_floor,
            worst_valid: 0.0,
        })
    }

    pub fn penalty(&self) -> f64 {
        self.penalty_floor.max(10.0 * self.worst_valid)
    }

    /// Draw count after collapsing degenerate parameter spaces to one.
    pub fn effective_draws(&self, m: usize) -> usize {
        if self.ranges.0.is_empty() || self.ranges.is_point() {
            1
        } else {
            m
        }
    }

    /// Parameter set number `j` of the stream for `seed`.
    pub fn draw(&self, seed: u64, j: usize) -> BTreeMap<String, f64> {
        self.ranges.sample(&mut rng_for(sub_seed(seed, "evaluate", 0), "draw", j as u64))
    }

    /// Replay the recorded voltage into `spec`.
    pub fn simulate(&self, spec: &LoadModelSpec) -> Result<SampleTrajectory, FitError> {
        let (p_ref, q_ref) = self.problem.reference_pq();
        let (p, q) = playback(spec, &self.rec, p_ref[0], q_ref[0])?;
        Ok(SampleTrajectory { p, q })
    }

    pub fn channel_losses(&self, s: &SampleTrajectory) -> Result<(f64, f64), FitError> {
        let (p_ref, q_ref) = self.problem.reference_pq();
        Ok((channel_loss(&s.p, p_ref, &self.loss)?, channel_loss(&s.q, q_ref, &self.loss)?))
    }

    fn run_draw(
        &self,
        comp: &[f64],
        q_comp: Option<&[f64]>,
        params: &BTreeMap<String, f64>,
    ) -> Result<(SampleTrajectory, f64, f64), FitError> {
        let spec = build_spec(self.problem.family, comp, q_comp, params)?;
        let s = self.simulate(&spec)?;
        let (lp, lq) = self.channel_losses(&s)?;
        if !(lp.is_finite() && lq.is_finite()) {
            return Err(FitError::Simulation("non-finite loss".into()));
        }
        Ok((s, lp, lq))
    }

    /// Mean loss of `comp` over `m` parameter draws.
    pub fn evaluate(&mut self, comp: &[f64], q_comp: Option<&[f64]>, m: usize, seed: u64) -> Evaluation {
        let m = self.effective_draws(m.max(1));
        let draws: Vec<BTreeMap<String, f64>> = (0..m).map(|j| self.draw(seed, j)).collect();
        let this = &*self;
        let results: Vec<_> = draws.par_iter().map(|p| this.run_draw(comp, q_comp, p)).collect();
        for (_, lp, lq) in results.iter().flatten() {
            self.worst_valid = self.worst_valid.max(lp + self.loss.w_q * lq);
        }
        let penalty = self.penalty();
        let (mut sp, mut sq, mut failures) = (0.0, 0.0, 0);
        let mut samples = Vec::with_capacity(m);
        for r in results {
            match r {
                Ok((s, lp, lq)) => {
                    sp += lp;
                    sq += lq;
                    samples.push(s);
                }
                Err(_) => {
                    sp += penalty;
                    sq += penalty;
                    failures += 1;
                }
            }
        }
        let (loss_p, loss_q) = (sp / m as f64, sq / m as f64);
        Evaluation {
            mean_loss: loss_p + self.loss.w_q * loss_q,
            loss_p,
            loss_q,
            failures,
            samples,
        }
    }
}

/// One-shot [`Evaluator::evaluate`] with the default penalty floor.
pub fn evaluate_composition(
    problem: &FitProblem,
    loss: &LossConfig,
    comp: &[f64],
    q_comp: Option<&[f64]>,
    m: usize,
    seed: u64,
) -> Result<Evaluation, FitError> {
    let mut ev = Evaluator::new(problem, *loss, HyperParams::default().penalty_floor)?;
    Ok(ev.evaluate(comp, q_comp, m, seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Channel {
    Total,
    P,
    Q,
}

fn key(f: &[f64]) -> Vec<i64> {
    f.iter().map(|x| (x * 1e9).round() as i64).collect()
}

struct CompositionEnv<'e, 'a> {
    ev: &'e mut Evaluator<'a>,
    channel: Channel,
    actions: Vec<FractionAction>,
    start: Vec<f64>,
    state: Vec<f64>,
    threshold: f64,
    m: usize,
    seed: u64,
    cache: HashMap<Vec<i64>, f64>,
    visited: BTreeMap<Vec<i64>, (Vec<f64>, f64)>,
}

impl CompositionEnv<'_, '_> {
    fn score(&mut self, f: &[f64]) -> f64 {
        let k = key(f);
        if let Some(&l) = self.cache.get(&k) {
            return l;
        }
        let e = self.ev.evaluate(f, None, self.m, self.seed);
        let l = match self.channel {
            Channel::Total => e.mean_loss,
            Channel::P => e.loss_p,
            Channel::Q => e.loss_q,
        };
        self.cache.insert(k.clone(), l);
        self.visited.insert(k, (f.to_vec(), l));
        l
    }

    /// Best `k` distinct visited compositions, ties by composition.
    fn top(&self, k: usize) -> Vec<(Vec<f64>, f64)> {
        let mut all: Vec<_> = self.visited.values().cloned().collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_lex(&a.0, &b.0)));
        all.truncate(k);
        all
    }
}

impl Environment for CompositionEnv<'_, '_> {
    fn state_dim(&self) -> usize {
        self.start.len()
    }

    fn n_actions(&self) -> usize {
        self.actions.len()
    }

    fn reset<R: Rng>(&mut self, _rng: &mut R) -> Vec<f64> {
        self.state = self.start.clone();
        let s = self.state.clone();
        self.score(&s);
        s
    }

    fn step(&mut self, action: usize) -> Step {
        let (next, _) = apply_action(&self.state, &self.actions[action]);
        let loss = self.score(&next);
        let (reward, done) = reward(loss, self.threshold);
        self.state = next.clone();
        Step {
            state: next,
            reward,
            done,
        }
    }
}

fn cmp_lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

type ChannelRun = (Vec<(Vec<f64>, f64)>, Vec<EpisodeRecord>, usize);

fn run_channel(ev: &mut Evaluator, channel: Channel, n: usize, hp: &HyperParams, seed: u64, tag: &str) -> ChannelRun {
    let mut env = CompositionEnv {
        ev,
        channel,
        actions: action_space(n, hp.delta_f),
        start: vec![1.0 / n as f64; n],
        state: Vec::new(),
        threshold: hp.loss_threshold,
        m: hp.m_samples,
        seed,
        cache: HashMap::new(),
        visited: BTreeMap::new(),
    };
    let mut rng = rng_for(seed, tag, 0);
    let (_, trace) = train_agent(&mut env, hp, &mut rng);
    (env.top(hp.top_k), trace, env.visited.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneResult {
    /// Ascending by mean loss.
    pub candidates: Vec<CandidateSolution>,
    pub trace: Vec<EpisodeRecord>,
    /// Distinct compositions simulated.
    pub evaluations: usize,
}

fn composition(family: ModelFamily, f: Vec<f64>) -> LoadComposition {
    LoadComposition {
        labels: family.labels().iter().map(|s| s.to_string()).collect(),
        f,
    }
}

/// Search compositions with the Q-learning agent and return the best
/// distinct ones seen. ZIP splits into independent searches over the
/// active and reactive splits (each channel depends only on its own split).
pub fn train_stage_one(
    problem: &FitProblem,
    hp: &HyperParams,
    loss: &LossConfig,
    seed: u64,
) -> Result<StageOneResult, FitError> {
    hp.validate()?;
    let mut ev = Evaluator::new(problem, *loss, hp.penalty_floor)?;
    let n = problem.n_components;
    let family = problem.family;
    let (pairs, trace, evaluations): (Vec<(Vec<f64>, Option<Vec<f64>>)>, _, _) = match family {
        ModelFamily::Zip => {
            let (tp, trace_p, np) = run_channel(&mut ev, Channel::P, n, hp, seed, "agent-p");
            let (tq, trace_q, nq) = run_channel(&mut ev, Channel::Q, n, hp, seed, "agent-q");
            let mut combos = Vec::new();
            for (fp, lp) in &tp {
                for (fq, lq) in &tq {
                    combos.push((lp + loss.w_q * lq, fp.clone(), fq.clone()));
                }
            }
            combos.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| cmp_lex(&a.1, &b.1))
                    .then_with(|| cmp_lex(&a.2, &b.2))
            });
            combos.truncate(hp.top_k);
            let mut best = f64::NEG_INFINITY;
            let trace = trace_p
                .iter()
                .zip(&trace_q)
                .map(|(a, b)| {
                    let r = a.reward + b.reward;
                    best = best.max(r);
                    EpisodeRecord {
                        episode: a.episode,
                        reward: r,
                        running_best: best,
                    }
                })
                .collect();
            (combos.into_iter().map(|(_, p, q)| (p, Some(q))).collect(), trace, np + nq)
        }
        _ => {
            let (top, trace, count) = run_channel(&mut ev, Channel::Total, n, hp, seed, "agent");
            (top.into_iter().map(|(f, _)| (f, None)).collect(), trace, count)
        }
    };
    let mut candidates = Vec::with_capacity(pairs.len());
    for (f, q) in pairs {
        let e = ev.evaluate(&f, q.as_deref(), hp.m_samples, seed);
        candidates.push(CandidateSolution {
            composition: composition(family, f),
            q_composition: q.map(|q| composition(family, q)),
            mean_loss: e.mean_loss,
            pinball_score: None,
            best_params: None,
            final_loss: None,
            samples: e.samples,
        });
    }
    candidates.sort_by(|a, b| a.mean_loss.total_cmp(&b.mean_loss).then_with(|| cmp_candidates(a, b)));
    let penalty = ev.penalty();
    if candidates.first().is_none_or(|c| !(c.mean_loss < penalty) || c.samples.is_empty()) {
        return Err(FitError::NoCandidate { penalty });
    }
    Ok(StageOneResult {
        candidates,
        trace,
        evaluations,
    })
}

fn cmp_candidates(a: &CandidateSolution, b: &CandidateSolution) -> std::cmp::Ordering {
    let qa = a.q_composition.as_ref().map(|c| c.f.as_slice()).unwrap_or(&[]);
    let qb = b.q_composition.as_ref().map(|c| c.f.as_slice()).unwrap_or(&[]);
    cmp_lex(&a.composition.f, &b.composition.f).then_with(|| cmp_lex(qa, qb))
}

/// Score every candidate by the mean pinball loss of its per-snapshot
/// sample quantile against the reference and sort ascending (ties by mean
/// loss, then composition).
pub fn rank_candidates(
    mut candidates: Vec<CandidateSolution>,
    reference: (&[f64], &[f64]),
    cfg: &PinballConfig,
) -> Result<Vec<CandidateSolution>, FitError> {
    cfg.validate()?;
    let refs = vec![reference.0.to_vec(), reference.1.to_vec()];
    for c in &mut candidates {
        if c.samples.is_empty() {
            return Err(FitError::InvalidProblem("candidate carries no sample trajectories".into()));
        }
        let samples: Vec<Vec<Vec<f64>>> = c.samples.iter().map(|s| vec![s.p.clone(), s.q.clone()]).collect();
        for s in &samples {
            if s[0].len() != refs[0].len() || s[1].len() != refs[1].len() {
                return Err(FitError::LengthMismatch {
                    fit: s[0].len(),
                    reference: refs[0].len(),
                });
            }
        }
        c.pinball_score = Some(pinball_score(&samples, &refs, cfg));
    }
    candidates.sort_by(|a, b| {
        a.pinball_score
            .unwrap()
            .total_cmp(&b.pinball_score.unwrap())
            .then_with(|| a.mean_loss.total_cmp(&b.mean_loss))
            .then_with(|| cmp_candidates(a, b))
    });
    Ok(candidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTwoResult {
    pub params: BTreeMap<String, f64>,
    pub loss: f64,
    pub draws: usize,
    pub failures: usize,
    pub sample: SampleTrajectory,
}

/// Best of `n_draws` parameter sets for a fixed composition. Draw `j` is
/// the same set stage one used as its `j`-th sample for the same seed, so
/// the result never loses to the stage-one mean.
pub fn stage_two_monte_carlo(
    problem: &FitProblem,
    loss: &LossConfig,
    comp: &[f64],
    q_comp: Option<&[f64]>,
    n_draws: usize,
    seed: u64,
) -> Result<StageTwoResult, FitError> {
    let ev = Evaluator::new(problem, *loss, HyperParams::default().penalty_floor)?;
    let n = ev.effective_draws(n_draws.max(1));
    let results: Vec<_> = (0..n)
        .into_par_iter()
        .map(|j| {
            let params = ev.draw(seed, j);
            ev.run_draw(comp, q_comp, &params).map(|(s, lp, lq)| (params, s, lp + loss.w_q * lq))
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    let best = results
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.2 < a.2 { b } else { a })
        .ok_or(FitError::AllFailed(n))?;
    Ok(StageTwoResult {
        params: best.0,
        loss: best.2,
        draws: n,
        failures,
        sample: best.1,
    })
}
