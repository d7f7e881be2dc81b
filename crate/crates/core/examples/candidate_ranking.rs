//! Rank stage-one ZIP+IM candidates by their pinball score against a
//! composite-load reference, at three quantile levels.
//!
//! cargo run --release --example candidate_ranking

use tslim::ddqnfit::{rank_candidates, train_stage_one, FitProblem, HyperParams, LossConfig, ModelFamily, PinballConfig};
use tslim::loadmodels::{reference_clm_fractions, ClmLiteParams, LoadModelSpec, ParamRanges};
use tslim::netcase::load_case;
use tslim::tdsim::{fault_sequence, simulate, SimulationConfig, StabilityCriteria};

fn main() -> anyhow::Result<()> {
    let mut case = load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json"))?;
    let ranges = ParamRanges::default();
    let clm = ClmLiteParams::from_params(reference_clm_fractions(), &ranges.midpoints())?;
    case.load_models.insert(20, LoadModelSpec::ClmLite(clm));
    let events = fault_sequence(6, 0.1, 5.0 / 60.0, None);
    let cfg = SimulationConfig { t_end: 3.0, monitored: vec![20], stop_on_violation: false, ..Default::default() };
    let (reference, _) = simulate(&case, &events, &cfg, &StabilityCriteria::default())?;

    let problem = FitProblem::new(ModelFamily::ZipIm, reference, 20, events, ranges)?;
    let hp = HyperParams { episodes: 30, max_steps_per_episode: 30, epsilon_decay_episodes: 20, ..Default::default() };
    let stage_one = train_stage_one(&problem, &hp, &LossConfig::default(), 3)?;
    for quantile in [0.1, 0.5, 0.9] {
        let cfg = PinballConfig { tau: quantile, quantile };
        let ranked = rank_candidates(stage_one.candidates.clone(), problem.reference_pq(), &cfg)?;
        println!("quantile {quantile}:");
        for c in &ranked {
            println!("  {:.3?}  pinball {:.5}  mean loss {:.3e}", c.composition.f, c.pinball_score.unwrap_or(f64::NAN), c.mean_loss);
        }
    }
    Ok(())
}
