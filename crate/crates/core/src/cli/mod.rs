//! End-to-end workflow: record a reference disturbance, fit every target
//! load model to it, then compute transfer limits with each fitted model
//! at the sink bus. Also hosts the job formats used by the `tslim` binary.
//!
//! A run writes:
//!
//! ```text
//! out/reference.csv            reference trajectory
//! out/fits/<model>.json        fitted model, losses and search summary
//! out/fits/<model>_fit.csv     reference against fitted P and Q
//! out/fits/<model>_convergence.csv
//! out/limits/<model>.json      full limit record
//! out/limits/<model>_binding.csv   binding contingency run, when dynamic
//! out/tables/fit_table.{csv,txt}
//! out/tables/transfer_limits.{csv,txt}
//! ```

mod tables;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddqnfit::seeds::sub_seed;
use crate::ddqnfit::{
    build_spec, evaluate_composition, fitted_spec, rank_candidates, rmse, stage_two_monte_carlo,
    train_stage_one, CandidateSolution, EpisodeRecord, FitProblem, HyperParams, LossConfig,
    ModelFamily, PinballConfig, SampleTrajectory,
};
use crate::loadmodels::{LoadComposition, LoadModelSpec, ParamRanges};
use crate::netcase::{load_case, NetworkCase};
use crate::tdsim::{
    fault_sequence, simulate, Event, SimulationConfig, StabilityCriteria, Trajectory, Verdict,
};
use crate::translim::{
    contingency_trajectory, find_limit, find_limit_bisect, trend_report, Criterion, LimitResult,
    TransferError, TransferStudy, TrendTable,
};

pub use tables::{emit_convergence_csv, emit_fit_table, fit_table_text, FitRow};

/// A failed pipeline stage, named for diagnosis.
#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self {
            stage,
            message: e.to_string(),
        }
    }
}

/// Fault that produces the reference recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventSpec {
    pub fault_bus: u32,
    pub t_fault: f64,
    pub clear_after: f64,
    /// Branch tripped at clearing, as `[from, to]`.
    pub trip: Option<[u32; 2]>,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for EventSpec {
    fn default() -> Self {
        Self {
            fault_bus: 6,
            t_fault: 0.1,
            clear_after: 5.0 / 60.0,
            trip: None,
            t_end: 3.0,
            dt: 1.0 / 240.0,
        }
    }
}

impl EventSpec {
    /// Event list; `case` resolves the tripped branch, if any.
    pub fn events(&self, case: Option<&NetworkCase>) -> Result<Vec<Event>, String> {
        let trip = match (self.trip, case) {
            (Some([a, b]), Some(c)) => Some(c.find_branch(a, b).ok_or(format!("no branch {a}-{b}"))?),
            (Some(_), None) => return Err("a tripped branch needs the case file".into()),
            (None, _) => None,
        };
        Ok(fault_sequence(self.fault_bus, self.t_fault, self.clear_after, trip))
    }

    /// Recording of `bus` at every integration step.
    pub fn sim_config(&self, bus: u32) -> SimulationConfig {
        SimulationConfig {
            dt: self.dt,
            t_end: self.t_end,
            record_dt: self.dt,
            monitored: vec![bus],
            stop_on_violation: false,
            ..SimulationConfig::default()
        }
    }
}

/// A concrete load model given by family, composition and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub family: ModelFamily,
    pub composition: Vec<f64>,
    #[serde(default)]
    pub q_composition: Option<Vec<f64>>,
    /// Overrides on top of the range midpoints.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelChoice {
    pub fn spec(&self, ranges: &ParamRanges) -> Result<LoadModelSpec, String> {
        let mut params = ranges.midpoints();
        params.extend(self.params.iter().map(|(k, v)| (k.clone(), *v)));
        build_spec(self.family, &self.composition, self.q_composition.as_deref(), &params)
            .map_err(|e| e.to_string())
    }
}

/// One model to compare: either fitted from a family or a fixed static preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    #[serde(default)]
    pub family: Option<ModelFamily>,
    #[serde(default)]
    pub preset: Option<String>,
    /// Fixes the composition; only parameters are refined.
    #[serde(default)]
    pub composition: Option<Vec<f64>>,
    /// Range overrides for this target, e.g. to give the motor another profile.
    #[serde(default)]
    pub ranges: BTreeMap<String, [f64; 2]>,
}

impl Target {
    pub fn fitted(name: &str, family: ModelFamily) -> Self {
        Self {
            name: name.to_string(),
            family: Some(family),
            preset: None,
            composition: None,
            ranges: BTreeMap::new(),
        }
    }

    pub fn preset(name: &str) -> Self {
        Self {
            name: name.to_string(),
            family: None,
            preset: Some(name.to_string()),
            composition: None,
            ranges: BTreeMap::new(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match (&self.family, &self.preset) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(format!("target {:?} needs exactly one of family and preset", self.name)),
        }
    }
}

/// Settings shared by every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitJob {
    pub hyper: HyperParams,
    pub loss: LossConfig,
    pub pinball: PinballConfig,
    /// Parameter draws for the refinement stage.
    pub stage_two_draws: usize,
    /// Range table; the shipped one when absent.
    pub ranges: Option<PathBuf>,
}

impl Default for FitJob {
    fn default() -> Self {
        Self {
            hyper: HyperParams::default(),
            loss: LossConfig::default(),
            pinball: PinballConfig::default(),
            stage_two_draws: 200,
            ranges: None,
        }
    }
}

impl FitJob {
    pub fn load_ranges(&self) -> Result<ParamRanges, String> {
        match &self.ranges {
            Some(p) => ParamRanges::load(p).map_err(|e| e.to_string()),
            None => Ok(ParamRanges::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub case: PathBuf,
    /// Bus whose load is recorded and fitted.
    pub load_bus: u32,
    pub reference: ModelChoice,
    #[serde(default)]
    pub event: EventSpec,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub fit: FitJob,
    pub study: TransferStudy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Search limits by bisection instead of the linear sweep.
    #[serde(default)]
    pub bisect: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineSpec {
    /// Read a spec; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new("spec", format!("{}: {e}", path.display())))?;
        let mut spec: Self = serde_json::from_str(&text).map_err(|e| PipelineError::new("spec", e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        spec.case = resolve(dir, &spec.case);
        spec.fit.ranges = spec.fit.ranges.map(|p| resolve(dir, &p));
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::new("spec", m));
        if !self.case.exists() {
            return bad(format!("case file {} does not exist", self.case.display()));
        }
        if self.targets.is_empty() {
            return bad("no targets".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for t in &self.targets {
            t.validate().map_err(|m| PipelineError::new("spec", m))?;
            if !names.insert(slug(&t.name)) {
                return bad(format!("duplicate target name {:?}", t.name));
            }
        }
        self.fit.hyper.validate().map_err(|e| PipelineError::new("spec", e))?;
        self.fit.loss.validate().map_err(|e| PipelineError::new("spec", e))?;
        self.fit.pinball.validate().map_err(|e| PipelineError::new("spec", e))?;
        Ok(())
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// File-name-safe form of a model name.
pub fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    let mut out = String::new();
    for part in s.split('_').filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push('_');
        }
        out.push_str(part);
    }
    out
}

/// Result of fitting one family to the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub name: String,
    pub family: ModelFamily,
    /// Chosen candidate, without its sample trajectories.
    pub candidate: CandidateSolution,
    pub spec: LoadModelSpec,
    pub rmse_p: f64,
    pub rmse_q: f64,
    /// Distinct compositions simulated during the search.
    pub evaluations: usize,
    #[serde(skip)]
    pub trace: Vec<EpisodeRecord>,
    /// Stage-one candidates in rank order, with their samples.
    #[serde(skip)]
    pub ranked: Vec<CandidateSolution>,
    #[serde(skip)]
    pub fitted: SampleTrajectory,
}

/// Search the composition (unless `fixed`), pick the best-ranked candidate
/// and refine its parameters.
pub fn fit_model(
    name: &str,
    problem: &FitProblem,
    fixed: Option<&[f64]>,
    job: &FitJob,
    seed: u64,
) -> Result<FitOutcome, PipelineError> {
    let err = |e: crate::ddqnfit::FitError| PipelineError::new("fit", format!("{name}: {e}"));
    let family = problem.family;
    let (candidate, trace, evaluations, ranked) = match fixed {
        Some(f) => {
            let e = evaluate_composition(problem, &job.loss, f, None, job.hyper.m_samples, seed).map_err(err)?;
            let c = CandidateSolution {
                composition: LoadComposition {
                    labels: family.labels().iter().map(|s| s.to_string()).collect(),
                    f: f.to_vec(),
                },
                q_composition: None,
                mean_loss: e.mean_loss,
                pinball_score: None,
                best_params: None,
                final_loss: None,
                samples: e.samples,
            };
            (c.clone(), Vec::new(), 1, vec![c])
        }
        None => {
            let s1 = train_stage_one(problem, &job.hyper, &job.loss, seed).map_err(err)?;
            let ranked = rank_candidates(s1.candidates, problem.reference_pq(), &job.pinball).map_err(err)?;
            let best = ranked[0].clone();
            (best, s1.trace, s1.evaluations, ranked)
        }
    };
    let mut candidate = candidate;
    let q = candidate.q_composition.as_ref().map(|q| q.f.clone());
    let s2 = stage_two_monte_carlo(problem, &job.loss, &candidate.composition.f, q.as_deref(), job.stage_two_draws, seed)
        .map_err(err)?;
    candidate.best_params = family.has_free_parameters().then_some(s2.params);
    candidate.final_loss = Some(s2.loss);
    candidate.samples.clear();
    let spec = fitted_spec(family, &candidate).map_err(err)?;
    let (p_ref, q_ref) = problem.reference_pq();
    Ok(FitOutcome {
        name: name.to_string(),
        family,
        rmse_p: rmse(&s2.sample.p, p_ref),
        rmse_q: rmse(&s2.sample.q, q_ref),
        candidate,
        spec,
        evaluations,
        trace,
        ranked,
        fitted: s2.sample,
    })
}

/// Reference and fitted P and Q on the reference time grid.
pub fn fit_trajectory_csv(times: &[f64], reference: (&[f64], &[f64]), fitted: &SampleTrajectory) -> String {
    let mut out = String::from("t,p_ref,p_fit,q_ref,q_fit\n");
    for (k, t) in times.iter().enumerate() {
        let _ = writeln!(
            out,
            "{t:.6},{:.9e},{:.9e},{:.9e},{:.9e}",
            reference.0[k], fitted.p[k], reference.1[k], fitted.q[k]
        );
    }
    out
}

/// Limit for one model, turning an infeasible base level into a bounded result.
pub fn limit_for_model(
    case: &NetworkCase,
    study: &TransferStudy,
    name: &str,
    spec: LoadModelSpec,
    bisect: bool,
) -> Result<LimitResult, TransferError> {
    let mut c = case.clone();
    c.load_models.insert(study.sink_bus, spec);
    let r = if bisect { find_limit_bisect(&c, study) } else { find_limit(&c, study) };
    match r {
        Ok(mut r) => {
            r.model = name.to_string();
            Ok(r)
        }
        Err(TransferError::BaseInfeasible { record, .. }) => Ok(LimitResult::below_base(&study.name, name, study.delta_p, *record)),
        Err(e) => Err(e),
    }
}

/// Dynamic run of the binding contingency at the first failing level.
pub fn binding_run(
    case: &NetworkCase,
    study: &TransferStudy,
    spec: &LoadModelSpec,
    r: &LimitResult,
) -> Option<(Trajectory, Verdict)> {
    let dynamic = matches!(
        r.binding_criterion,
        Some(Criterion::AngleUnstable | Criterion::VoltageUnstable | Criterion::NumericalFailure)
    );
    let branch = r.binding_contingency?;
    let level = r.steps.iter().find(|s| !s.feasible)?.p_level;
    if !dynamic {
        return None;
    }
    let mut c = case.clone();
    c.load_models.insert(study.sink_bus, spec.clone());
    contingency_trajectory(&c, study, level, branch).ok()
}

/// Stand-alone fit of one target to a recorded trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJobFile {
    /// Trajectory CSV with angle columns for `bus`.
    pub reference: PathBuf,
    pub bus: u32,
    /// Needed only when the event trips a branch.
    #[serde(default)]
    pub case: Option<PathBuf>,
    #[serde(default)]
    pub event: EventSpec,
    pub target: Target,
    #[serde(default)]
    pub fit: FitJob,
    #[serde(default)]
    pub seed: u64,
}

impl FitJobFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new("spec", format!("{}: {e}", path.display())))?;
        let mut job: Self = serde_json::from_str(&text).map_err(|e| PipelineError::new("spec", e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        job.reference = resolve(dir, &job.reference);
        job.case = job.case.map(|p| resolve(dir, &p));
        job.fit.ranges = job.fit.ranges.map(|p| resolve(dir, &p));
        Ok(job)
    }

    fn events(&self) -> Result<Vec<Event>, PipelineError> {
        let case = match &self.case {
            Some(p) => Some(load_case(p).map_err(|e| PipelineError::new("case", e))?),
            None => None,
        };
        self.event.events(case.as_ref()).map_err(|m| PipelineError::new("spec", m))
    }
}

/// Fit the job's target and write `candidates.json`, `fitted.json`,
/// `fit.csv` and `convergence.csv` under `out`.
pub fn run_fit_job(job: &FitJobFile, out: &Path) -> Result<FitOutcome, PipelineError> {
    job.target.validate().map_err(|m| PipelineError::new("spec", m))?;
    let family = job
        .target
        .family
        .ok_or_else(|| PipelineError::new("spec", "static presets need no fitting"))?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::new("output", format!("{}: {e}", out.display())))?;
    let reference = Trajectory::load_csv(&job.reference).map_err(|e| PipelineError::new("reference", e))?;
    let mut ranges = job.fit.load_ranges().map_err(|m| PipelineError::new("spec", m))?;
    ranges.0.extend(job.target.ranges.iter().map(|(k, v)| (k.clone(), *v)));
    let problem = FitProblem::new(family, reference, job.bus, job.events()?, ranges)
        .map_err(|e| PipelineError::new("fit", e))?;
    let seed = sub_seed(job.seed, &format!("fit:{}", job.target.name), 0);
    let f = fit_model(&job.target.name, &problem, job.target.composition.as_deref(), &job.fit, seed)?;
    write(&out.join("candidates.json"), &json(&f.ranked))?;
    write(&out.join("fitted.json"), &json(&f))?;
    write(&out.join("fit.csv"), &fit_trajectory_csv(&problem.reference.times, problem.reference_pq(), &f.fitted))?;
    write(&out.join("convergence.csv"), &emit_convergence_csv(&f.trace))?;
    Ok(f)
}

/// What a pipeline run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub reference_verdict: Verdict,
    pub fits: Vec<FitRow>,
    pub limits: Vec<(String, LimitResult)>,
    pub table: TrendTable,
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::new("output", format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn trajectory_csv(tr: &Trajectory) -> Result<String, PipelineError> {
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).map_err(|e| PipelineError::new("output", e))?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Run all three steps and write the artifact tree under `spec.out`.
pub fn run_pipeline(spec: &PipelineSpec) -> Result<PipelineReport, PipelineError> {
    spec.validate()?;
    let out = &spec.out;
    for d in ["fits", "limits", "tables"] {
        std::fs::create_dir_all(out.join(d)).map_err(|e| PipelineError::new("output", format!("{}: {e}", out.display())))?;
    }
    let case = load_case(&spec.case).map_err(|e| PipelineError::new("case", e))?;
    let ranges = spec.fit.load_ranges().map_err(|m| PipelineError::new("spec", m))?;
    spec.study.validate(&{
        let mut c = case.clone();
        c.load_models.insert(spec.study.sink_bus, LoadModelSpec::static_preset("100Z"));
        c
    })
    .map_err(|e| PipelineError::new("spec", e))?;

    // Step 1: reference recording.
    let ref_spec = spec.reference.spec(&ranges).map_err(|m| PipelineError::new("reference", m))?;
    let mut ref_case = case.clone();
    ref_case.load_models.insert(spec.load_bus, ref_spec.clone());
    let events = spec.event.events(Some(&case)).map_err(|m| PipelineError::new("reference", m))?;
    let (reference, reference_verdict) = simulate(
        &ref_case,
        &events,
        &spec.event.sim_config(spec.load_bus),
        &StabilityCriteria::default(),
    )
    .map_err(|e| PipelineError::new("reference", e))?;
    write(&out.join("reference.csv"), &trajectory_csv(&reference)?)?;
    write(&out.join("reference_model.json"), &json(&ref_spec))?;
    log::info!("reference: {} samples, {}", reference.len(), reference_verdict.label());

    // Step 2: fits, in parallel over targets.
    let fits: Vec<Option<FitOutcome>> = spec
        .targets
        .par_iter()
        .map(|t| {
            let Some(family) = t.family else { return Ok(None) };
            let mut r = ranges.clone();
            r.0.extend(t.ranges.iter().map(|(k, v)| (k.clone(), *v)));
            let problem = FitProblem::new(family, reference.clone(), spec.load_bus, events.clone(), r)
                .map_err(|e| PipelineError::new("fit", format!("{}: {e}", t.name)))?;
            let seed = sub_seed(spec.seed, &format!("fit:{}", t.name), 0);
            fit_model(&t.name, &problem, t.composition.as_deref(), &spec.fit, seed).map(Some)
        })
        .collect::<Result<_, _>>()?;
    let slot = reference.bus_slot(spec.load_bus).expect("recorded");
    let pq = (reference.p_load[slot].as_slice(), reference.q_load[slot].as_slice());
    let mut fit_rows = Vec::new();
    for f in fits.iter().flatten() {
        let s = slug(&f.name);
        write(&out.join(format!("fits/{s}.json")), &json(f))?;
        write(&out.join(format!("fits/{s}_fit.csv")), &fit_trajectory_csv(&reference.times, pq, &f.fitted))?;
        write(&out.join(format!("fits/{s}_convergence.csv")), &emit_convergence_csv(&f.trace))?;
        fit_rows.push(FitRow {
            model: f.name.clone(),
            rmse_p: f.rmse_p,
            rmse_q: f.rmse_q,
        });
        log::info!("fit {}: RMSE_P {:.4} RMSE_Q {:.4}", f.name, f.rmse_p, f.rmse_q);
    }
    write(&out.join("tables/fit_table.csv"), &emit_fit_table(&fit_rows))?;
    write(&out.join("tables/fit_table.txt"), &fit_table_text(&fit_rows))?;

    // Step 3: limits, in parallel over models.
    let models: Vec<(String, LoadModelSpec)> = spec
        .targets
        .iter()
        .zip(&fits)
        .map(|(t, f)| match (f, &t.preset) {
            (Some(f), _) => (t.name.clone(), f.spec.clone()),
            (None, Some(p)) => (t.name.clone(), LoadModelSpec::static_preset(p)),
            (None, None) => unreachable!("validated"),
        })
        .collect();
    let limits: Vec<(String, LimitResult)> = models
        .par_iter()
        .map(|(name, m)| {
            limit_for_model(&case, &spec.study, name, m.clone(), spec.bisect)
                .map(|r| (name.clone(), r))
                .map_err(|e| PipelineError::new("limits", format!("{name}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    for ((name, r), (_, m)) in limits.iter().zip(&models) {
        let s = slug(name);
        write(&out.join(format!("limits/{s}.json")), &json(r))?;
        if let Some((tr, _)) = binding_run(&case, &spec.study, m, r) {
            write(&out.join(format!("limits/{s}_binding.csv")), &trajectory_csv(&tr)?)?;
        }
        log::info!("limit {name}: {} MW", r.display_p_max());
    }
    let study_name = if spec.study.name.is_empty() { "study".to_string() } else { spec.study.name.clone() };
    let table = trend_report(&[(study_name, limits.clone())]);
    write(&out.join("tables/transfer_limits.csv"), &table.to_csv())?;
    write(&out.join("tables/transfer_limits.txt"), &table.to_text())?;
    Ok(PipelineReport {
        reference_verdict,
        fits: fit_rows,
        limits,
        table,
    })
}
