//! End-to-end run: reference event, fits and limits, with short fitting
//! budgets. Artifacts land in `target/example-pipeline`.
//!
//! cargo run --release --example pipeline

use tslim::cli::{run_pipeline, PipelineSpec};

fn main() -> anyhow::Result<()> {
    let mut spec = PipelineSpec::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/pipeline_case1.json").as_ref())?;
    spec.fit.hyper.episodes = 30;
    spec.fit.hyper.max_steps_per_episode = 30;
    spec.fit.hyper.epsilon_decay_episodes = 20;
    spec.fit.stage_two_draws = 40;
    spec.targets.retain(|t| ["CLM-lite", "ZIP", "ZIP+IM", "30Z30I40P"].contains(&t.name.as_str()));
    spec.out = concat!(env!("CARGO_MANIFEST_DIR"), "/../../target/example-pipeline").into();
    let report = run_pipeline(&spec)?;
    for f in &report.fits {
        println!("{:10} RMSE_P {:.4}  RMSE_Q {:.4}", f.model, f.rmse_p, f.rmse_q);
    }
    print!("{}", report.table.to_text());
    println!("artifacts in {}", spec.out.display());
    Ok(())
}
