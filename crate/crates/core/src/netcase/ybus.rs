use nalgebra::DMatrix;
use num_complex::Complex64;

use super::NetworkCase;

/// Dense complex bus admittance matrix, rows/columns in case bus order.
pub type Ybus = DMatrix<Complex64>;

/// Assemble the bus admittance matrix from in-service branches and bus shunts.
///
/// Branches use the standard pi model with an off-nominal tap on the
/// from side: `Yff = (ys + jb/2)/t^2`, `Yft = Ytf = -ys/t`, `Ytt = ys + jb/2`.
pub fn build_ybus(case: &NetworkCase) -> Ybus {
    let n = case.n_buses();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in case.branches.iter().filter(|b| b.in_service) {
        let f = case.bus_index(br.from).expect("validated case");
        let t = case.bus_index(br.to).expect("validated case");
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ych = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = br.tap;
        y[(f, f)] += (ys + ych) / (tap * tap);
        y[(t, t)] += ys + ych;
        y[(f, t)] -= ys / tap;
        y[(t, f)] -= ys / tap;
    }
    for (i, b) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(0.0, b.shunt_b);
    }
    y
}
