//! Recover a ZIP composition from a simulated fault response with the
//! stage-one agent, then compare against the known truth.
//!
//! cargo run --release --example ddqn_fit [episodes]

use tslim::ddqnfit::{rmse, stage_two_monte_carlo, train_stage_one, FitProblem, HyperParams, LossConfig, ModelFamily};
use tslim::loadmodels::{LoadModelSpec, ParamRanges, ZipFractions};
use tslim::netcase::load_case;
use tslim::tdsim::{fault_sequence, simulate, SimulationConfig, StabilityCriteria};

fn main() -> anyhow::Result<()> {
    let episodes = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let mut case = load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json"))?;
    let truth = ZipFractions::from_channels([0.15, 0.35, 0.5], [0.45, 0.2, 0.35]);
    case.load_models.insert(20, LoadModelSpec::Zip(truth));
    let events = fault_sequence(6, 0.1, 5.0 / 60.0, None);
    let cfg = SimulationConfig { t_end: 3.0, monitored: vec![20], ..Default::default() };
    let (reference, _) = simulate(&case, &events, &cfg, &StabilityCriteria::default())?;

    let problem = FitProblem::new(ModelFamily::Zip, reference, 20, events, ParamRanges::default())?;
    let hp = HyperParams { episodes, ..Default::default() };
    let loss = LossConfig::default();
    let r = train_stage_one(&problem, &hp, &loss, 11)?;
    for e in r.trace.iter().step_by((episodes / 10).max(1)) {
        println!("episode {:4}  reward {:7.4}  best {:7.4}", e.episode, e.reward, e.running_best);
    }
    let best = &r.candidates[0];
    let q = best.q_composition.as_ref().map(|c| c.f.clone());
    println!("truth  P {:?}  Q {:?}", truth.p(), truth.q());
    println!("fitted P {:.3?}  Q {:.3?}", best.composition.f, q.as_deref().unwrap_or(&[]));
    let s2 = stage_two_monte_carlo(&problem, &loss, &best.composition.f, q.as_deref(), 1, 11)?;
    let (p_ref, q_ref) = problem.reference_pq();
    println!("RMSE_P {:.5}  RMSE_Q {:.5}  ({} evaluations)", rmse(&s2.sample.p, p_ref), rmse(&s2.sample.q, q_ref), r.evaluations);
    Ok(())
}
