//! Static and dynamic load responses to a voltage step, driven directly
//! without a network.
//!
//! cargo run --release --example load_models

use num_complex::Complex64;
use tslim::loadmodels::{im_derivatives, im_init, im_pq, zip_pq, ImParams, ZipFractions, ZipParams};

fn main() -> anyhow::Result<()> {
    for preset in ["100Z", "100I", "100P", "30Z30I40P"] {
        let zp = ZipParams::new(1.0, 0.3, 1.0, ZipFractions::from_preset(preset)?);
        let row: Vec<String> = [1.0, 0.9, 0.7]
            .iter()
            .map(|&v| {
                let (p, q) = zip_pq(&zp, v);
                format!("v={v}: {p:.3}+j{q:.3}")
            })
            .collect();
        println!("{preset:>10}  {}", row.join("  "));
    }

    // A 50 MVA motor drawing 0.4 pu (system base), then a 20% voltage sag.
    let motor = ImParams::new(0.02, 0.1, 0.02, 0.08, 3.0, 0.5, 50.0)?;
    let u0 = Complex64::new(1.0, 0.0);
    let (motor, mut st) = im_init(&motor, u0, 0.4)?;
    println!("initial slip {:.5}", st.slip);
    let u = u0 * 0.8;
    let dt = 1.0 / 2400.0;
    for k in 0..=2400 {
        if k % 240 == 0 {
            let (p, q) = im_pq(&motor, &st, u);
            println!("t={:.2}  slip {:.5}  p {:.4}  q {:.4}", k as f64 * dt, st.slip, p, q);
        }
        let d = im_derivatives(&motor, &st, u);
        st.vdp += dt * d.vdp;
        st.vqp += dt * d.vqp;
        st.slip += dt * d.slip;
    }
    Ok(())
}
