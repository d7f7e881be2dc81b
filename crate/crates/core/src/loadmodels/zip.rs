use serde::{Deserialize, Serialize};

use super::LoadModelError;

/// Constant-impedance / constant-current / constant-power split of P and Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipFractions {
    pub p1c: f64,
    pub p2c: f64,
    pub p3c: f64,
    pub q1c: f64,
    pub q2c: f64,
    pub q3c: f64,
}

impl ZipFractions {
    /// Same split for both channels.
    pub fn uniform(z: f64, i: f64, p: f64) -> Self {
        Self {
            p1c: z,
            p2c: i,
            p3c: p,
            q1c: z,
            q2c: i,
            q3c: p,
        }
    }

    pub fn constant_impedance() -> Self {
        Self::uniform(1.0, 0.0, 0.0)
    }

    pub fn p(&self) -> [f64; 3] {
        [self.p1c, self.p2c, self.p3c]
    }

    pub fn q(&self) -> [f64; 3] {
        [self.q1c, self.q2c, self.q3c]
    }

    pub fn from_channels(p: [f64; 3], q: [f64; 3]) -> Self {
        Self {
            p1c: p[0],
            p2c: p[1],
            p3c: p[2],
            q1c: q[0],
            q2c: q[1],
            q3c: q[2],
        }
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        for (name, ch) in [("p", self.p()), ("q", self.q())] {
            if ch.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(LoadModelError::InvalidParameter(format!(
                    "ZIP {name} fractions {ch:?} outside [0, 1]"
                )));
            }
            let sum: f64 = ch.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(LoadModelError::InvalidParameter(format!(
                    "ZIP {name} fractions {ch:?} sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Parse presets of the form `40Z60P`, `30Z30I40P`, `100Z`.
    pub fn from_preset(name: &str) -> Result<Self, LoadModelError> {
        let bad = || LoadModelError::UnknownPreset(name.to_string());
        let mut parts = [0.0f64; 3];
        let mut digits = String::new();
        for ch in name.chars() {
            if ch.is_ascii_digit() || ch == '.' {
                digits.push(ch);
                continue;
            }
            let slot = match ch.to_ascii_uppercase() {
                'Z' => 0,
                'I' => 1,
                'P' => 2,
                _ => return Err(bad()),
            };
            let pct: f64 = digits.parse().map_err(|_| bad())?;
            parts[slot] += pct / 100.0;
            digits.clear();
        }
        if !digits.is_empty() {
            return Err(bad());
        }
        let f = Self::uniform(parts[0], parts[1], parts[2]);
        f.validate().map_err(|_| bad())?;
        Ok(f)
    }
}

/// A ZIP load bound to its operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipParams {
    pub p0: f64,
    pub q0: f64,
    pub v0: f64,
    pub p1c: f64,
    pub p2c: f64,
    pub p3c: f64,
    pub q1c: f64,
    pub q2c: f64,
    pub q3c: f64,
}

impl ZipParams {
    pub fn new(p0: f64, q0: f64, v0: f64, f: ZipFractions) -> Self {
        Self {
            p0,
            q0,
            v0,
            p1c: f.p1c,
            p2c: f.p2c,
            p3c: f.p3c,
            q1c: f.q1c,
            q2c: f.q2c,
            q3c: f.q3c,
        }
    }

    pub fn fractions(&self) -> ZipFractions {
        ZipFractions {
            p1c: self.p1c,
            p2c: self.p2c,
            p3c: self.p3c,
            q1c: self.q1c,
            q2c: self.q2c,
            q3c: self.q3c,
        }
    }
}

/// Second-order polynomial load: `p = p0 (p1c (v/v0)^2 + p2c (v/v0) + p3c)`, same for q.
pub fn zip_pq(zp: &ZipParams, v: f64) -> (f64, f64) {
    let r = v / zp.v0;
    (
        zp.p0 * (zp.p1c * r * r + zp.p2c * r + zp.p3c),
        zp.q0 * (zp.q1c * r * r + zp.q2c * r + zp.q3c),
    )
}

/// [`zip_pq`] with the constant-current and constant-power terms turning
/// into constant impedance below `v_brk`, so the load stays solvable
/// through faults. Identical to `zip_pq` for `v >= v_brk`.
pub fn zip_pq_lv(zp: &ZipParams, v: f64, v_brk: f64) -> (f64, f64) {
    if v >= v_brk {
        return zip_pq(zp, v);
    }
    let r = v / zp.v0;
    let k = (v / v_brk) * (v / v_brk);
    let i_term = (v_brk / zp.v0) * k;
    (
        zp.p0 * (zp.p1c * r * r + zp.p2c * i_term + zp.p3c * k),
        zp.q0 * (zp.q1c * r * r + zp.q2c * i_term + zp.q3c * k),
    )
}
