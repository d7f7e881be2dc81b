use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimError, StabilityCriteria, Verdict};

/// Recorded simulation output on a common time grid.
///
/// Per-bus series are indexed `[bus][sample]`, per-generator series
/// `[generator][sample]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub buses: Vec<u32>,
    pub v_mag: Vec<Vec<f64>>,
    /// Bus voltage angle in the synchronous frame, radians.
    #[serde(default)]
    pub v_ang: Vec<Vec<f64>>,
    pub p_load: Vec<Vec<f64>>,
    pub q_load: Vec<Vec<f64>>,
    pub gen_labels: Vec<String>,
    pub delta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    /// Time of the last fault clearing or branch trip, if any.
    #[serde(default)]
    pub t_clear: Option<f64>,
    /// A fault was still applied when the run ended.
    #[serde(default)]
    pub fault_open: bool,
}

impl Trajectory {
    pub fn new(buses: Vec<u32>, gen_labels: Vec<String>) -> Self {
        let nb = buses.len();
        let ng = gen_labels.len();
        Self {
            buses,
            gen_labels,
            v_mag: vec![Vec::new(); nb],
            v_ang: vec![Vec::new(); nb],
            p_load: vec![Vec::new(); nb],
            q_load: vec![Vec::new(); nb],
            delta: vec![Vec::new(); ng],
            omega: vec![Vec::new(); ng],
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn bus_slot(&self, bus: u32) -> Option<usize> {
        self.buses.iter().position(|&b| b == bus)
    }

    /// Largest change of any recorded series over the run.
    pub fn max_drift(&self) -> f64 {
        let all = self
            .v_mag
            .iter()
            .chain(&self.v_ang)
            .chain(&self.p_load)
            .chain(&self.q_load)
            .chain(&self.delta)
            .chain(&self.omega);
        all.map(|s| {
            let first = s.first().copied().unwrap_or(0.0);
            s.iter().map(|x| (x - first).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
    }

    pub fn has_non_finite(&self) -> bool {
        let mut all = self
            .v_mag
            .iter()
            .chain(&self.v_ang)
            .chain(&self.p_load)
            .chain(&self.q_load)
            .chain(&self.delta)
            .chain(&self.omega);
        all.any(|s| s.iter().any(|x| !x.is_finite()))
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for b in &self.buses {
            h.push(format!("{b}:v"));
            h.push(format!("{b}:a"));
            h.push(format!("{b}:p"));
            h.push(format!("{b}:q"));
        }
        for g in &self.gen_labels {
            h.push(format!("{g}:delta"));
            h.push(format!("{g}:omega"));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let err = |e: csv::Error| SimError::Trajectory(e.to_string());
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header()).map_err(err)?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.times[k])];
            for b in 0..self.buses.len() {
                row.push(format!("{}", self.v_mag[b][k]));
                row.push(format!("{}", self.v_ang[b][k]));
                row.push(format!("{}", self.p_load[b][k]));
                row.push(format!("{}", self.q_load[b][k]));
            }
            for g in 0..self.gen_labels.len() {
                row.push(format!("{}", self.delta[g][k]));
                row.push(format!("{}", self.omega[g][k]));
            }
            wr.write_record(&row).map_err(err)?;
        }
        wr.flush().map_err(|e| SimError::Trajectory(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path)
            .map_err(|e| SimError::Trajectory(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Trajectory(m);
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("t") {
            return Err(bad("first column must be t".into()));
        }
        // column -> (is_bus, slot, channel)
        let mut cols = Vec::new();
        let mut buses: Vec<u32> = Vec::new();
        let mut gens: Vec<String> = Vec::new();
        for name in &header[1..] {
            let (who, what) = name
                .rsplit_once(':')
                .ok_or_else(|| bad(format!("column {name:?} lacks a channel suffix")))?;
            match what {
                "v" | "a" | "p" | "q" => {
                    let id: u32 = who.parse().map_err(|_| bad(format!("bad bus in {name:?}")))?;
                    let slot = buses.iter().position(|&b| b == id).unwrap_or_else(|| {
                        buses.push(id);
                        buses.len() - 1
                    });
                    cols.push((true, slot, what.to_string()));
                }
                "delta" | "omega" => {
                    let slot = gens.iter().position(|g| g == who).unwrap_or_else(|| {
                        gens.push(who.to_string());
                        gens.len() - 1
                    });
                    cols.push((false, slot, what.to_string()));
                }
                _ => return Err(bad(format!("unknown channel in {name:?}"))),
            }
        }
        let mut tr = Trajectory::new(buses, gens);
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if vals.len() != header.len() {
                return Err(bad("ragged row".into()));
            }
            tr.times.push(vals[0]);
            for ((is_bus, slot, ch), &x) in cols.iter().zip(&vals[1..]) {
                let series = match (is_bus, ch.as_str()) {
                    (true, "v") => &mut tr.v_mag[*slot],
                    (true, "a") => &mut tr.v_ang[*slot],
                    (true, "p") => &mut tr.p_load[*slot],
                    (true, _) => &mut tr.q_load[*slot],
                    (false, "delta") => &mut tr.delta[*slot],
                    (false, _) => &mut tr.omega[*slot],
                };
                series.push(x);
            }
        }
        let n = tr.times.len();
        // Angle columns are optional; magnitude-only records get zero angles.
        for s in tr.v_ang.iter_mut().filter(|s| s.is_empty()) {
            s.resize(n, 0.0);
        }
        let complete = tr
            .v_mag
            .iter()
            .chain(&tr.v_ang)
            .chain(&tr.p_load)
            .chain(&tr.q_load)
            .chain(&tr.delta)
            .chain(&tr.omega)
            .all(|s| s.len() == n);
        if !complete {
            return Err(bad("every bus needs v, p and q columns".into()));
        }
        Ok(tr)
    }

    pub fn load_csv(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path)
            .map_err(|e| SimError::Trajectory(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Angle spread at sample `k`.
pub(crate) fn angle_spread(tr: &Trajectory, k: usize) -> f64 {
    let (lo, hi) = tr.delta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s[k]), hi.max(s[k]))
    });
    if tr.delta.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// First stability violation in a recorded trajectory.
///
/// Voltage recovery is judged from the last clearing (or t = 0 without
/// one) and is skipped while a fault is still applied at the end of the run.
pub fn check_stability(tr: &Trajectory, criteria: &StabilityCriteria) -> Verdict {
    let t_ref = tr.t_clear.unwrap_or(0.0);
    for k in 0..tr.len() {
        let t = tr.times[k];
        if criteria.check_angle && angle_spread(tr, k) > criteria.max_angle_spread {
            return Verdict::AngleUnstable { at: t };
        }
        if criteria.check_voltage
            && !tr.fault_open
            && t > t_ref + criteria.v_recovery_deadline
            && tr.v_mag.iter().any(|s| s[k] < criteria.v_recovery_floor)
        {
            return Verdict::VoltageUnstable { at: t };
        }
    }
    Verdict::Stable
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, dt: f64) -> Trajectory {
        let mut tr = Trajectory::new(vec![20, 6], vec!["g30".into(), "g31".into()]);
        for k in 0..n {
            tr.times.push(k as f64 * dt);
            for b in 0..2 {
                tr.v_mag[b].push(1.0);
                tr.v_ang[b].push(-0.1);
                tr.p_load[b].push(0.5 + b as f64);
                tr.q_load[b].push(0.1);
            }
            tr.delta[0].push(0.3);
            tr.delta[1].push(-0.2);
            tr.omega[0].push(1.0);
            tr.omega[1].push(1.0);
        }
        tr
    }

    #[test]
    fn constant_angles_are_stable() {
        assert_eq!(
            check_stability(&synthetic(100, 0.01), &StabilityCriteria::default()),
            Verdict::Stable
        );
    }

    #[test]
    fn spread_of_181_degrees_is_angle_unstable() {
        let mut tr = synthetic(100, 0.01);
        tr.delta[0][40] = tr.delta[1][40] + 181f64.to_radians();
        assert_eq!(
            check_stability(&tr, &StabilityCriteria::default()),
            Verdict::AngleUnstable { at: tr.times[40] }
        );
    }

    #[test]
    fn delayed_voltage_recovery_is_voltage_unstable() {
        let dt = 0.01;
        let mut tr = synthetic(600, dt);
        tr.t_clear = Some(0.2);
        for k in 0..600 {
            let t = k as f64 * dt;
            if t > 0.2 && t <= 3.2 {
                tr.v_mag[0][k] = 0.7;
            }
        }
        let v = check_stability(&tr, &StabilityCriteria::default());
        assert!(matches!(v, Verdict::VoltageUnstable { at } if at > 2.2 && at < 2.22));
        let lenient = StabilityCriteria {
            check_voltage: false,
            ..StabilityCriteria::default()
        };
        assert_eq!(check_stability(&tr, &lenient), Verdict::Stable);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut tr = synthetic(7, 1.0 / 240.0);
        tr.p_load[1][3] = 0.1 + 0.2;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,20:v,20:a,20:p,20:q,6:v,6:a,6:p,6:q,g30:delta,g30:omega,g31:delta"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.p_load, tr.p_load);
        assert_eq!(back.delta, tr.delta);
        assert_eq!(back.buses, tr.buses);
    }

    #[test]
    fn csv_rejects_incomplete_bus() {
        let text = "t,20:v,20:p\n0,1,0.5\n";
        assert!(Trajectory::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn csv_without_angles_reads_zero_angles() {
        let text = "t,20:v,20:p,20:q\n0,1,0.5,0.1\n0.1,0.9,0.4,0.1\n";
        let tr = Trajectory::read_csv(text.as_bytes()).unwrap();
        assert_eq!(tr.v_ang, vec![vec![0.0, 0.0]]);
    }
}
