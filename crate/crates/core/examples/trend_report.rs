//! Compare transfer limits of one study under several static sink loads
//! and print the comparison table.
//!
//! cargo run --release --example trend_report

use rayon::prelude::*;
use tslim::loadmodels::LoadModelSpec;
use tslim::netcase::load_case;
use tslim::translim::{find_limit, trend_report, TransferStudy};

fn main() -> anyhow::Result<()> {
    let case = load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json"))?;
    let mut study = TransferStudy::new(vec![30, 37, 38], 20, 50.0, 3000.0);
    study.contingencies = Some(vec![
        [14, 15], [15, 16], [16, 17], [16, 19], [16, 21], [16, 24], [19, 20],
        [19, 33], [20, 34], [21, 22], [22, 23], [22, 35], [23, 24], [23, 36],
    ]);
    study.check_thermal = false;
    study.assume_monotone = true;

    let presets = ["100Z", "30Z30I40P", "40Z60P", "100P"];
    let limits: Vec<(String, _)> = presets
        .par_iter()
        .map(|p| {
            let mut c = case.clone();
            c.load_models.insert(20, LoadModelSpec::static_preset(p));
            find_limit(&c, &study).map(|r| (p.to_string(), r))
        })
        .collect::<Result<_, _>>()?;
    let table = trend_report(&[("bus 20 import".to_string(), limits)]);
    print!("{}", table.to_text());
    print!("{}", table.to_csv());
    Ok(())
}
