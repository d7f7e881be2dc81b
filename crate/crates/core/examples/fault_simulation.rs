//! Three-phase fault at bus 6 on the 39-bus system with a composite load
//! at bus 20; prints the bus-20 dip and recovery and the stability verdict.
//!
//! cargo run --release --example fault_simulation

use tslim::loadmodels::{reference_clm_fractions, ClmLiteParams, LoadModelSpec, ParamRanges};
use tslim::netcase::load_case;
use tslim::tdsim::{fault_sequence, simulate, SimulationConfig, StabilityCriteria};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json");
    let mut case = load_case(path)?;
    let clm = ClmLiteParams::from_params(reference_clm_fractions(), &ParamRanges::default().midpoints())?;
    case.load_models.insert(20, LoadModelSpec::ClmLite(clm));

    let events = fault_sequence(6, 0.1, 5.0 / 60.0, None);
    let cfg = SimulationConfig {
        t_end: 3.0,
        ..SimulationConfig::default()
    };
    let started = std::time::Instant::now();
    let (traj, verdict) = simulate(&case, &events, &cfg, &StabilityCriteria::default())?;
    let slot = traj.bus_slot(20).expect("bus 20 is monitored");
    for k in (0..traj.len()).step_by(12) {
        println!(
            "t = {:5.3}  v = {:.4}  p = {:.4}  q = {:.4}",
            traj.times[k], traj.v_mag[slot][k], traj.p_load[slot][k], traj.q_load[slot][k]
        );
    }
    println!("{verdict:?} in {:.2?}", started.elapsed());
    Ok(())
}
