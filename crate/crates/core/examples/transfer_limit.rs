//! Transfer limit into bus 20 of the 39-bus system under a static sink
//! load, with a linear sweep and with bisection.
//!
//! cargo run --release --example transfer_limit [preset]

use tslim::loadmodels::LoadModelSpec;
use tslim::netcase::load_case;
use tslim::translim::{find_limit, find_limit_bisect, TransferStudy};

fn main() -> anyhow::Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "30Z30I40P".into());
    let mut case = load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json"))?;
    case.load_models.insert(20, LoadModelSpec::static_preset(&preset));

    let mut study = TransferStudy::new(vec![30, 37, 38], 20, 50.0, 3000.0);
    study.name = "area 3 to bus 20".into();
    study.tie_lines = vec![[16, 17]];
    study.contingencies = Some(vec![[16, 17], [16, 19], [16, 21], [19, 20], [21, 22], [23, 24]]);
    study.check_thermal = false;
    study.assume_monotone = true;

    let sweep = find_limit(&case, &study)?;
    for s in &sweep.steps {
        println!("{:7.1} MW  feasible {:5}  {:?}", s.p_level, s.feasible, s.binding_criterion);
    }
    println!(
        "{preset}: P_max {} MW, binding {:?} {:?}",
        sweep.display_p_max(),
        sweep.binding_contingency,
        sweep.binding_criterion
    );
    let fast = find_limit_bisect(&case, &study)?;
    println!("bisection: P_max {} MW after {} levels", fast.display_p_max(), fast.steps.len());
    Ok(())
}
