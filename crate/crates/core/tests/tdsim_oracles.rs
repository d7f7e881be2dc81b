//! Time-domain simulator against an independent two-machine swing model.

use num_complex::Complex64;
use tslim::netcase::{case_from_json, NetworkCase};
use tslim::tdsim::{simulate, Event, EventKind, SimulationConfig, StabilityCriteria};

const X1: f64 = 0.25;
const X2: f64 = 0.3;
const XL: f64 = 0.2;
const H1: f64 = 8.0;
const H2: f64 = 3.5;
const P2: f64 = 0.8;
const OMEGA: f64 = 2.0 * std::f64::consts::PI * 60.0;

fn fault_y() -> Complex64 {
    Complex64::new(0.0, -50.0)
}

fn two_machines() -> NetworkCase {
    let text = format!(
        r#"{{
  "system": {{"units": "pu"}},
  "buses": [
    {{"id": 1, "kind": "Slack", "v_mag": 1.0, "v_ang": 0.0, "p_load": 0.0, "q_load": 0.0, "shunt_b": 0.0, "area": 1}},
    {{"id": 2, "kind": "PV", "v_mag": 1.0, "v_ang": 0.0, "p_load": 0.0, "q_load": 0.0, "shunt_b": 0.0, "area": 1}}
  ],
  "branches": [
    {{"from": 1, "to": 2, "r": 0.0, "x": {XL}, "b_charging": 0.0, "rating": 99.0, "tap": 1.0, "in_service": true}}
  ],
  "generators": [
    {{"bus": 1, "p_set": 0.0, "v_set": 1.0, "q_min": -99, "q_max": 99, "mva_base": 100.0, "h": {H1}, "xdp": {X1}, "d": 0.0}},
    {{"bus": 2, "p_set": {P2}, "v_set": 1.0, "q_min": -99, "q_max": 99, "mva_base": 100.0, "h": {H2}, "xdp": {X2}, "d": 0.0}}
  ]
}}"#
    );
    case_from_json(&text).unwrap()
}

/// Closed-form operating point: internal EMFs and mechanical powers.
fn operating_point() -> ([Complex64; 2], [f64; 2]) {
    let th = (P2 * XL).asin();
    let v = [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, th)];
    let q = (1.0 - th.cos()) / XL;
    let s = [Complex64::new(-P2, q), Complex64::new(P2, q)];
    let x = [X1, X2];
    let e: Vec<Complex64> = (0..2).map(|k| v[k] + Complex64::new(0.0, x[k]) * (s[k] / v[k]).conj()).collect();
    ([e[0], e[1]], [-P2, P2])
}

/// Electrical powers from a direct 2x2 nodal solve.
fn pe(e: [Complex64; 2], faulted: bool) -> [f64; 2] {
    let j = Complex64::i();
    let (y1, y2, yl) = (1.0 / (j * X1), 1.0 / (j * X2), 1.0 / (j * XL));
    let yf = if faulted { fault_y() } else { Complex64::new(0.0, 0.0) };
    let (a, b, c, d) = (y1 + yl, -yl, -yl, y2 + yl + yf);
    let (i1, i2) = (e[0] * y1, e[1] * y2);
    let det = a * d - b * c;
    let v = [(i1 * d - b * i2) / det, (a * i2 - c * i1) / det];
    let x = [X1, X2];
    [0, 1].map(|k| (e[k] * ((e[k] - v[k]) / (j * x[k])).conj()).re)
}

/// Fine-step reference for the swing equations, sampled every `record`.
fn reference(t_fault: f64, t_clear: f64, t_end: f64, record: f64) -> Vec<[f64; 2]> {
    let (e0, pm) = operating_point();
    let mag = [e0[0].norm(), e0[1].norm()];
    let h = [H1, H2];
    let f = |y: [f64; 4], faulted: bool| {
        let e = [Complex64::from_polar(mag[0], y[0]), Complex64::from_polar(mag[1], y[1])];
        let p = pe(e, faulted);
        [OMEGA * (y[2] - 1.0), OMEGA * (y[3] - 1.0), (pm[0] - p[0]) / (2.0 * h[0]), (pm[1] - p[1]) / (2.0 * h[1])]
    };
    let sub = 200;
    let dt = record / sub as f64;
    let mut y = [e0[0].arg(), e0[1].arg(), 1.0, 1.0];
    let mut out = vec![[y[0], y[1]]];
    let n = (t_end / record).round() as usize;
    for k in 0..n {
        let t0 = k as f64 * record;
        let faulted = t0 + 1e-12 >= t_fault && t0 + 1e-12 < t_clear;
        for _ in 0..sub {
            let add = |y: [f64; 4], d: [f64; 4], s: f64| [0, 1, 2, 3].map(|i| y[i] + s * d[i]);
            let k1 = f(y, faulted);
            let k2 = f(add(y, k1, 0.5 * dt), faulted);
            let k3 = f(add(y, k2, 0.5 * dt), faulted);
            let k4 = f(add(y, k3, dt), faulted);
            y = [0, 1, 2, 3].map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        out.push([y[0], y[1]]);
    }
    out
}

fn events(t_fault: f64, t_clear: f64) -> Vec<Event> {
    vec![
        Event { time: t_fault, kind: EventKind::ThreePhaseFault { bus: 2, fault_admittance: fault_y() } },
        Event { time: t_clear, kind: EventKind::FaultClear },
    ]
}

fn max_angle_error(dt: f64) -> f64 {
    let (tf, tc, t_end) = (0.1, 0.2, 1.5);
    let cfg = SimulationConfig {
        dt,
        record_dt: 1.0 / 60.0,
        t_end,
        monitored: vec![2],
        stop_on_violation: false,
        ..Default::default()
    };
    let (tr, verdict) = simulate(&two_machines(), &events(tf, tc), &cfg, &StabilityCriteria::default()).unwrap();
    assert!(verdict.is_stable(), "{verdict:?}");
    let r = reference(tf, tc, t_end, 1.0 / 60.0);
    assert_eq!(tr.len(), r.len());
    (0..r.len())
        .map(|k| {
            // Compare the rotor-angle difference, which the frame choice cannot shift.
            let sim = tr.delta[1][k] - tr.delta[0][k];
            let oracle = r[k][1] - r[k][0];
            (sim - oracle).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn swing_matches_two_machine_oracle() {
    let err = max_angle_error(1.0 / 240.0);
    assert!(err < 1e-6, "max rotor-angle error {err:e} rad");
}

#[test]
fn integrator_is_fourth_order() {
    let coarse = max_angle_error(1.0 / 60.0);
    let fine = max_angle_error(1.0 / 120.0);
    let ratio = coarse / fine;
    assert!((10.0..24.0).contains(&ratio), "error ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn faulted_swing_actually_moves() {
    let cfg = SimulationConfig { t_end: 1.0, monitored: vec![2], stop_on_violation: false, ..Default::default() };
    let (tr, _) = simulate(&two_machines(), &events(0.1, 0.2), &cfg, &StabilityCriteria::default()).unwrap();
    let d: Vec<f64> = (0..tr.len()).map(|k| tr.delta[1][k] - tr.delta[0][k]).collect();
    let swing = d.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)) - d[0];
    assert!(swing > 0.1, "angle swing only {swing}");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let cfg = SimulationConfig { t_end: 1.0, monitored: vec![2], ..Default::default() };
    let run = || simulate(&two_machines(), &events(0.1, 0.2), &cfg, &StabilityCriteria::default()).unwrap().0;
    assert_eq!(run(), run());
}
