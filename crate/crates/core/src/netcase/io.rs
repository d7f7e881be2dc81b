use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, Bus, Generator, NetError, NetworkCase, SYSTEM_MVA_BASE};
use crate::loadmodels::LoadModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Per unit on the system base, angles in radians.
    Pu,
    /// MW / MVAr / MVA, angles in degrees. Impedances stay in p.u.
    Physical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSection {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base")]
    pub mva_base: f64,
    #[serde(default = "default_freq")]
    pub frequency_hz: f64,
    pub units: Units,
    #[serde(default)]
    pub areas: Vec<u32>,
    #[serde(default)]
    pub seed_profile: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn default_base() -> f64 {
    SYSTEM_MVA_BASE
}

fn default_freq() -> f64 {
    60.0
}

/// On-disk case document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseFile {
    pub system: SystemSection,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub load_models: BTreeMap<u32, LoadModelSpec>,
}

impl CaseFile {
    pub fn into_case(self) -> Result<NetworkCase, NetError> {
        let CaseFile {
            system,
            mut buses,
            mut branches,
            mut generators,
            load_models,
        } = self;
        if (system.mva_base - SYSTEM_MVA_BASE).abs() > 1e-9 && system.units == Units::Pu {
            return Err(NetError::Validation(format!(
                "per-unit case on a {} MVA base; only {SYSTEM_MVA_BASE} MVA is supported",
                system.mva_base
            )));
        }
        if system.units == Units::Physical {
            let s = system.mva_base;
            for b in &mut buses {
                b.v_ang = b.v_ang.to_radians();
                b.p_load /= s;
                b.q_load /= s;
                b.shunt_b /= s;
            }
            for br in &mut branches {
                br.rating /= s;
            }
            for g in &mut generators {
                g.p_set /= s;
                g.q_min /= s;
                g.q_max /= s;
                g.p_max = g.p_max.map(|p| p / s);
            }
        }
        for br in &mut branches {
            if br.tap == 0.0 {
                br.tap = 1.0;
            }
        }
        for (bus, spec) in &load_models {
            spec.validate()
                .map_err(|e| NetError::Validation(format!("load model at bus {bus}: {e}")))?;
        }
        let case = NetworkCase {
            name: system.name,
            system_mva_base: SYSTEM_MVA_BASE,
            frequency_hz: system.frequency_hz,
            areas: system.areas,
            seed_profile: system.seed_profile,
            buses,
            branches,
            generators,
            load_models,
        };
        case.validate()?;
        Ok(case)
    }

    /// Per-unit document for an in-memory case.
    pub fn from_case(case: &NetworkCase) -> Self {
        CaseFile {
            system: SystemSection {
                name: case.name.clone(),
                mva_base: case.system_mva_base,
                frequency_hz: case.frequency_hz,
                units: Units::Pu,
                areas: case.areas.clone(),
                seed_profile: case.seed_profile,
                notes: Vec::new(),
            },
            buses: case.buses.clone(),
            branches: case.branches.clone(),
            generators: case.generators.clone(),
            load_models: case.load_models.clone(),
        }
    }
}

pub fn case_from_json(text: &str) -> Result<NetworkCase, NetError> {
    let file: CaseFile =
        serde_json::from_str(text).map_err(|e| NetError::Parse(e.to_string()))?;
    file.into_case()
}

pub fn case_to_json(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(&CaseFile::from_case(case)).expect("case serializes")
}

/// Read, convert to per unit and validate a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, NetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    case_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::BusKind;

    const TWO_BUS: &str = r#"{
        "system": {"units": "physical", "areas": [1]},
        "buses": [
            {"id": 1, "kind": "Slack", "v_mag": 1.0, "v_ang": 0.0, "p_load": 0, "q_load": 0, "shunt_b": 0, "area": 1},
            {"id": 2, "kind": "PQ", "v_mag": 1.0, "v_ang": 0.0, "p_load": 50, "q_load": 20, "shunt_b": 0, "area": 1}
        ],
        "branches": [
            {"from": 1, "to": 2, "r": 0.0, "x": 0.1, "b_charging": 0.0, "rating": 100, "tap": 1.0, "in_service": true}
        ],
        "generators": [
            {"bus": 1, "p_set": 50, "v_set": 1.0, "q_min": -100, "q_max": 100, "mva_base": 100, "h": 5, "xdp": 0.2, "d": 0}
        ]
    }"#;

    #[test]
    fn minimal_two_bus_case() {
        let case = case_from_json(TWO_BUS).unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.buses[1].p_load, 0.5);
        assert_eq!(case.buses[1].q_load, 0.2);
        assert_eq!(case.branches[0].rating, 1.0);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            case_from_json("{\"system\": "),
            Err(NetError::Parse(_))
        ));
    }

    #[test]
    fn missing_endpoint_is_validation_error() {
        let text = TWO_BUS.replace("\"to\": 2", "\"to\": 7");
        let err = case_from_json(&text).unwrap_err();
        assert!(matches!(err, NetError::Validation(ref m) if m.contains("branch 0")));
    }

    #[test]
    fn json_round_trip_preserves_case() {
        let case = case_from_json(TWO_BUS).unwrap();
        let again = case_from_json(&case_to_json(&case)).unwrap();
        assert_eq!(case, again);
    }
}
