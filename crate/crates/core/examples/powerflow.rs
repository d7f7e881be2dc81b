//! Solve the 39-bus power flow and print bus voltages and the most loaded
//! branches.
//!
//! cargo run --release --example powerflow

use tslim::netcase::{branch_flows, load_case, solve_powerflow};

fn main() -> anyhow::Result<()> {
    let case = load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json"))?;
    let sol = solve_powerflow(&case, 1e-8, 30)?;
    println!("converged in {} iterations", sol.iterations);
    for (b, (vm, va)) in case.buses.iter().zip(sol.v_mag.iter().zip(&sol.v_ang)) {
        println!("bus {:2}  {:.4} pu  {:8.3} deg", b.id, vm, va.to_degrees());
    }
    let flows = branch_flows(&case, &sol.v_mag, &sol.v_ang);
    let mut loading: Vec<_> = case
        .branches
        .iter()
        .zip(&flows)
        .filter(|(br, _)| br.rating > 0.0)
        .map(|(br, f)| (f.mva() / br.rating, br.from, br.to))
        .collect();
    loading.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (l, a, b) in loading.iter().take(5) {
        println!("{a}-{b}: {:.1}% of rating", 100.0 * l);
    }
    Ok(())
}
