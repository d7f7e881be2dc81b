use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LoadModelError;

const DEFAULT_RANGES: &str = include_str!("../../data/ranges.json");

/// Closed sampling interval per named parameter, e.g. `"ma.rs" -> [0.035, 0.045]`.
///
/// The default of each parameter is the midpoint of its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamRanges(pub BTreeMap<String, [f64; 2]>);

impl Default for ParamRanges {
    /// The shipped table in `data/ranges.json`.
    fn default() -> Self {
        Self::from_json(DEFAULT_RANGES).expect("shipped range table is valid")
    }
}

impl ParamRanges {
    pub fn from_json(text: &str) -> Result<Self, LoadModelError> {
        let r: Self = serde_json::from_str(text)
            .map_err(|e| LoadModelError::InvalidParameter(format!("range table: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, LoadModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LoadModelError::InvalidParameter(format!("range table {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), LoadModelError> {
        for (k, [lo, hi]) in &self.0 {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(LoadModelError::InvalidParameter(format!(
                    "range {k} = [{lo}, {hi}] is not a closed interval"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<[f64; 2]> {
        self.0.get(key).copied()
    }

    pub fn midpoints(&self) -> BTreeMap<String, f64> {
        self.0
            .iter()
            .map(|(k, [lo, hi])| (k.clone(), 0.5 * (lo + hi)))
            .collect()
    }

    /// Every interval collapsed to the given values (missing keys keep their range).
    pub fn pinned(&self, values: &BTreeMap<String, f64>) -> Self {
        let mut out = self.clone();
        for (k, v) in values {
            out.0.insert(k.clone(), [*v, *v]);
        }
        out
    }

    /// True when every interval has zero width.
    pub fn is_point(&self) -> bool {
        self.0.values().all(|[lo, hi]| lo == hi)
    }

    /// One uniform draw of every parameter, in key order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> BTreeMap<String, f64> {
        self.0
            .iter()
            .map(|(k, &[lo, hi])| {
                let v = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
                (k.clone(), v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shipped_table_is_closed_and_sampled_inside() {
        let r = ParamRanges::default();
        assert!(r.get("ma.rs").is_some() && r.get("md.v_stall").is_some());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            for (k, v) in r.sample(&mut rng) {
                let [lo, hi] = r.get(&k).unwrap();
                assert!(lo <= v && v <= hi, "{k}");
            }
        }
    }

    #[test]
    fn pinned_ranges_sample_the_point() {
        let r = ParamRanges::default();
        let mid = r.midpoints();
        let p = r.pinned(&mid);
        assert!(p.is_point());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample(&mut rng), mid);
    }

    #[test]
    fn inverted_interval_rejected() {
        assert!(ParamRanges::from_json(r#"{"a": [2.0, 1.0]}"#).is_err());
    }
}
