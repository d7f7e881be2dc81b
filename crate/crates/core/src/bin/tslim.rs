use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tslim::cli::{
    limit_for_model, run_fit_job, run_pipeline, slug, FitJobFile, PipelineSpec,
};
use tslim::ddqnfit::{rank_candidates, CandidateSolution, PinballConfig};
use tslim::loadmodels::LoadModelSpec;
use tslim::netcase::{load_case, solve_powerflow};
use tslim::tdsim::{fault_sequence, simulate, Event, SimulationConfig, StabilityCriteria, Trajectory};
use tslim::translim::{assess_point, trend_report, LimitResult, TransferStudy};

#[derive(Parser)]
#[command(name = "tslim", version, about = "Load-model fitting and transfer-limit screening")]
struct Cli {
    /// Seed for every random draw (overrides the job file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the power flow of a case.
    Powerflow {
        case: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 30)]
        max_iter: usize,
    },
    /// Simulate a disturbance and write the trajectory.
    Simulate {
        case: PathBuf,
        /// JSON list of events.
        #[arg(long, conflicts_with = "fault_bus")]
        events: Option<PathBuf>,
        /// Three-phase fault at this bus, applied at 0.1 s.
        #[arg(long)]
        fault_bus: Option<u32>,
        #[arg(long, default_value_t = 5.0)]
        clear_cycles: f64,
        /// Branch tripped at clearing, as FROM-TO.
        #[arg(long)]
        trip: Option<String>,
        /// Load model for a bus: BUS=FILE.json with a model spec.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0 / 240.0)]
        dt: f64,
        #[arg(long)]
        record_dt: Option<f64>,
        /// Buses to record, comma separated.
        #[arg(long, value_delimiter = ',')]
        monitor: Vec<u32>,
    },
    /// Fit one load model to a recorded trajectory.
    Fit { job: PathBuf },
    /// Rank candidates by quantile score against a reference.
    Rank {
        candidates: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        bus: u32,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 0.5)]
        quantile: f64,
    },
    /// Transfer limit of one study under one sink load model.
    Assess {
        case: PathBuf,
        study: PathBuf,
        /// Sink load model spec (JSON).
        #[arg(long, conflicts_with = "preset")]
        model: Option<PathBuf>,
        /// Static sink preset such as 30Z30I40P.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        bisect: bool,
        /// Assess this single level (MW) instead of searching.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Compare limit records across models and studies.
    TrendReport { limits: Vec<PathBuf> },
    /// Reference event, fits and limits in one run.
    Pipeline { spec: PathBuf },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Write to `out/name` when an output directory is given, else to stdout.
fn emit(out: &Option<PathBuf>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let p = dir.join(name);
            std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            log::info!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn parse_pair(s: &str) -> Result<[u32; 2]> {
    let (a, b) = s.split_once('-').context("expected FROM-TO")?;
    Ok([a.trim().parse()?, b.trim().parse()?])
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.cmd {
        Cmd::Powerflow { case, tol, max_iter } => {
            let c = load_case(&case)?;
            let sol = solve_powerflow(&c, tol, max_iter)?;
            emit(&cli.out, "powerflow.json", &pretty(&sol))?;
        }
        Cmd::Simulate {
            case,
            events,
            fault_bus,
            clear_cycles,
            trip,
            models,
            t_end,
            dt,
            record_dt,
            monitor,
        } => {
            let mut c = load_case(&case)?;
            for m in &models {
                let (bus, file) = m.split_once('=').context("expected BUS=FILE")?;
                let spec: LoadModelSpec = read_json(Path::new(file))?;
                c.load_models.insert(bus.parse()?, spec);
            }
            let ev: Vec<Event> = match (events, fault_bus) {
                (Some(p), _) => read_json(&p)?,
                (None, Some(bus)) => {
                    let k = match &trip {
                        Some(s) => {
                            let [a, b] = parse_pair(s)?;
                            Some(c.find_branch(a, b).with_context(|| format!("no branch {a}-{b}"))?)
                        }
                        None => None,
                    };
                    fault_sequence(bus, 0.1, clear_cycles / c.frequency_hz, k)
                }
                (None, None) => Vec::new(),
            };
            let cfg = SimulationConfig {
                dt,
                t_end,
                record_dt: record_dt.unwrap_or(dt),
                monitored: monitor,
                ..SimulationConfig::default()
            };
            let (tr, verdict) = simulate(&c, &ev, &cfg, &StabilityCriteria::default())?;
            let mut buf = Vec::new();
            tr.write_csv(&mut buf)?;
            emit(&cli.out, "trajectory.csv", &String::from_utf8(buf)?)?;
            match &cli.out {
                Some(_) => emit(&cli.out, "verdict.json", &pretty(&verdict))?,
                None => eprintln!("{}", verdict.label()),
            }
        }
        Cmd::Fit { job } => {
            let mut j = FitJobFile::load(&job)?;
            if let Some(s) = cli.seed {
                j.seed = s;
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(slug(&j.target.name)));
            let f = run_fit_job(&j, &out)?;
            println!(
                "{}: {:?} RMSE_P {:.6} RMSE_Q {:.6} -> {}",
                f.name,
                f.candidate.composition.f,
                f.rmse_p,
                f.rmse_q,
                out.display()
            );
        }
        Cmd::Rank {
            candidates,
            reference,
            bus,
            tau,
            quantile,
        } => {
            let cands: Vec<CandidateSolution> = read_json(&candidates)?;
            let tr = Trajectory::load_csv(&reference)?;
            let slot = tr.bus_slot(bus).with_context(|| format!("reference does not record bus {bus}"))?;
            let ranked = rank_candidates(
                cands,
                (&tr.p_load[slot], &tr.q_load[slot]),
                &PinballConfig { tau, quantile },
            )?;
            let mut text = String::from("rank,pinball,mean_loss,composition\n");
            for (k, c) in ranked.iter().enumerate() {
                let f: Vec<String> = c.composition.f.iter().map(|x| format!("{x:.4}")).collect();
                text += &format!(
                    "{},{:.6e},{:.6e},{}\n",
                    k + 1,
                    c.pinball_score.unwrap_or(f64::NAN),
                    c.mean_loss,
                    f.join(" ")
                );
            }
            emit(&cli.out, "ranked.csv", &text)?;
            if cli.out.is_some() {
                emit(&cli.out, "ranked.json", &pretty(&ranked))?;
            }
        }
        Cmd::Assess {
            case,
            study,
            model,
            preset,
            bisect,
            level,
        } => {
            let mut c = load_case(&case)?;
            let st: TransferStudy = read_json(&study)?;
            let (name, spec) = match (model, preset) {
                (Some(p), _) => {
                    let s: LoadModelSpec = read_json(&p)?;
                    (s.family().to_string(), s)
                }
                (None, Some(p)) => (p.clone(), LoadModelSpec::static_preset(&p)),
                (None, None) => match c.load_models.get(&st.sink_bus) {
                    Some(s) => (s.family().to_string(), s.clone()),
                    None => bail!("sink bus {} has no load model; pass --model or --preset", st.sink_bus),
                },
            };
            if let Some(p) = level {
                c.load_models.insert(st.sink_bus, spec);
                let r = assess_point(&c, &st, p)?;
                emit(&cli.out, "step.json", &pretty(&r))?;
            } else {
                let r = limit_for_model(&c, &st, &name, spec, bisect)?;
                eprintln!("{name}: P_max {} MW", r.display_p_max());
                emit(&cli.out, &format!("{}.json", slug(&name)), &pretty(&r))?;
            }
        }
        Cmd::TrendReport { limits } => {
            let mut grouped: Vec<(String, Vec<(String, LimitResult)>)> = Vec::new();
            for p in &limits {
                let r: LimitResult = read_json(p)?;
                let study = if r.study.is_empty() { "study".to_string() } else { r.study.clone() };
                match grouped.iter_mut().find(|(s, _)| *s == study) {
                    Some((_, v)) => v.push((r.model.clone(), r)),
                    None => grouped.push((study, vec![(r.model.clone(), r)])),
                }
            }
            let t = trend_report(&grouped);
            emit(&cli.out, "transfer_limits.txt", &t.to_text())?;
            if cli.out.is_some() {
                emit(&cli.out, "transfer_limits.csv", &t.to_csv())?;
            }
        }
        Cmd::Pipeline { spec } => {
            let mut s = PipelineSpec::load(&spec)?;
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            if let Some(o) = cli.out {
                s.out = o;
            }
            let r = run_pipeline(&s)?;
            println!("{}", r.table.to_text());
            println!("artifacts in {}", s.out.display());
        }
    }
    Ok(())
}
