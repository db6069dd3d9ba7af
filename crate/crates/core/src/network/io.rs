//! JSON network description.
//!
//! Physical units are converted to per-unit here and nowhere else. Line
//! impedances use the base voltage of the receiving bus; transformer
//! impedances are given by `uk`/`ur` on their own rating.

use super::{
    thevenin_from_scc, Branch, BranchKind, Bus, BusId, BusKind, BusLoad, NetworkError, NetworkModel,
    OltcTransformer, SourceCondition, TheveninEquivalent,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub name: String,
    /// System base power in MVA.
    pub base_mva: f64,
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub transformer: Option<TransformerSpec>,
    #[serde(default)]
    pub thevenin: Option<TheveninSpec>,
    /// Bus id where the interconnection voltage is measured. Defaults to the
    /// OLTC primary, or the slack bus without a transformer.
    #[serde(default)]
    pub measurement_bus: Option<BusId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: BusId,
    pub kind: BusKind,
    pub base_kv: f64,
    #[serde(default)]
    pub load: Option<LoadSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
    #[serde(default)]
    pub profile: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImpedanceUnit {
    #[serde(rename = "ohm")]
    Ohm,
    #[serde(rename = "ohm/km")]
    OhmPerKm,
    #[serde(rename = "pu")]
    Pu,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub name: String,
    pub from: BusId,
    pub to: BusId,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub unit: Option<ImpedanceUnit>,
    /// Required with `ohm/km`.
    #[serde(default)]
    pub length_km: Option<f64>,
    /// Transformer-type branch: short-circuit voltage on its own rating.
    #[serde(default)]
    pub uk_percent: Option<f64>,
    #[serde(default)]
    pub ur_percent: Option<f64>,
    #[serde(default)]
    pub rating_mva: Option<f64>,
    /// Ampacity in kA; transformer-type branches default to their rating.
    #[serde(default)]
    pub ampacity_ka: Option<f64>,
    #[serde(default)]
    pub i_max_pu: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerSpec {
    pub name: String,
    pub from: BusId,
    pub to: BusId,
    pub rating_mva: f64,
    pub uk_percent: f64,
    #[serde(default)]
    pub ur_percent: f64,
    pub tap_step_pu: f64,
    pub tap_min: i32,
    pub tap_max: i32,
    #[serde(default)]
    pub tap: i32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheveninSpec {
    /// Source (slack) bus id.
    pub from: BusId,
    /// Interconnection bus id.
    pub to: BusId,
    #[serde(flatten)]
    pub source: SourceSpec,
    #[serde(default)]
    pub hourly: Option<Vec<SourceSpec>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SourceSpec {
    /// `[re, im]` in per-unit; defaults to `1∠0°`.
    #[serde(default)]
    pub v_source_pu: Option<[f64; 2]>,
    #[serde(default)]
    pub scc_mva: Option<f64>,
    /// Multiplier applied to `1/scc`; default 3.
    #[serde(default)]
    pub factor: Option<f64>,
    /// Default 10.
    #[serde(default)]
    pub x_r: Option<f64>,
    /// Explicit impedance `[r, x]` in per-unit; overrides `scc_mva`.
    #[serde(default)]
    pub z_pu: Option<[f64; 2]>,
}

pub const DEFAULT_THEVENIN_FACTOR: f64 = 3.0;
pub const DEFAULT_THEVENIN_X_R: f64 = 10.0;

impl SourceSpec {
    fn resolve(&self, base: &SourceSpec, base_mva: f64) -> Result<SourceCondition, NetworkError> {
        let v = self.v_source_pu.or(base.v_source_pu).unwrap_or([1.0, 0.0]);
        let z = if let Some([r, x]) = self.z_pu {
            Complex64::new(r, x)
        } else if let Some(scc) = self.scc_mva {
            let factor = self.factor.or(base.factor).unwrap_or(DEFAULT_THEVENIN_FACTOR);
            let x_r = self.x_r.or(base.x_r).unwrap_or(DEFAULT_THEVENIN_X_R);
            thevenin_from_scc(scc / base_mva, factor, x_r)?
        } else if let Some([r, x]) = base.z_pu {
            Complex64::new(r, x)
        } else if let Some(scc) = base.scc_mva {
            let factor = self.factor.or(base.factor).unwrap_or(DEFAULT_THEVENIN_FACTOR);
            let x_r = self.x_r.or(base.x_r).unwrap_or(DEFAULT_THEVENIN_X_R);
            thevenin_from_scc(scc / base_mva, factor, x_r)?
        } else {
            Complex64::new(0.0, 0.0)
        };
        Ok(SourceCondition { v_source: Complex64::new(v[0], v[1]), z_th: z })
    }
}

pub fn load_network(path: &Path) -> Result<NetworkModel, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    NetworkModel::from_json_str(&text)
}

fn transformer_impedance(uk: f64, ur: f64, rating: f64, base_mva: f64, name: &str) -> Result<(f64, f64), NetworkError> {
    if !(rating > 0.0) || !(uk > 0.0) || !(ur >= 0.0) || ur > uk {
        return Err(NetworkError::InvalidParameter(format!(
            "{name}: need rating > 0 and 0 ≤ ur ≤ uk, uk > 0"
        )));
    }
    let scale = base_mva / rating / 100.0;
    let z = uk * scale;
    let r = ur * scale;
    Ok((r, (z * z - r * r).sqrt()))
}

impl NetworkModel {
    pub fn from_json_str(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self, NetworkError> {
        let base_mva = file.base_mva;
        if !(base_mva > 0.0) {
            return Err(NetworkError::InvalidParameter(format!("base_mva must be positive, got {base_mva}")));
        }
        // Slack first, remaining buses in file order.
        let mut specs: Vec<&BusSpec> = file.buses.iter().filter(|b| b.kind == BusKind::Slack).collect();
        if specs.is_empty() {
            return Err(NetworkError::MissingSlack);
        }
        specs.extend(file.buses.iter().filter(|b| b.kind != BusKind::Slack));
        let mut index: HashMap<BusId, usize> = HashMap::new();
        let mut buses = Vec::with_capacity(specs.len());
        for (i, b) in specs.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(NetworkError::DuplicateBus(b.id));
            }
            let load = match &b.load {
                None => None,
                Some(l) => {
                    if !l.p_mw.is_finite() || !l.q_mvar.is_finite() {
                        return Err(NetworkError::InvalidParameter(format!("bus {}: load must be finite", b.id)));
                    }
                    Some(BusLoad { p: l.p_mw / base_mva, q: l.q_mvar / base_mva, profile: l.profile.clone() })
                }
            };
            buses.push(Bus { id: b.id, kind: b.kind, base_kv: b.base_kv, load });
        }
        let lookup = |branch: &str, id: BusId| {
            index.get(&id).copied().ok_or(NetworkError::UnknownBus { branch: branch.to_string(), bus: id })
        };

        let mut branches = Vec::new();
        let mut thevenin = None;
        if let Some(th) = &file.thevenin {
            let from = lookup("thevenin", th.from)?;
            let to = lookup("thevenin", th.to)?;
            let nominal = th.source.resolve(&SourceSpec::default(), base_mva)?;
            let hourly = match &th.hourly {
                None => None,
                Some(h) => Some(h.iter().map(|s| s.resolve(&th.source, base_mva)).collect::<Result<Vec<_>, _>>()?),
            };
            branches.push(Branch {
                name: "thevenin".into(),
                from,
                to,
                r: nominal.z_th.re,
                x: nominal.z_th.im,
                i_max: None,
                kind: BranchKind::Thevenin,
            });
            thevenin = Some(TheveninEquivalent { branch: 0, nominal, hourly });
        }

        let mut transformer = None;
        if let Some(t) = &file.transformer {
            let from = lookup(&t.name, t.from)?;
            let to = lookup(&t.name, t.to)?;
            let (r, x) = transformer_impedance(t.uk_percent, t.ur_percent, t.rating_mva, base_mva, &t.name)?;
            transformer = Some(OltcTransformer {
                branch: branches.len(),
                tap_step: t.tap_step_pu,
                tap_min: t.tap_min,
                tap_max: t.tap_max,
                tap: t.tap,
                rating: t.rating_mva / base_mva,
                uk_percent: t.uk_percent,
            });
            branches.push(Branch {
                name: t.name.clone(),
                from,
                to,
                r,
                x,
                i_max: Some(t.rating_mva / base_mva),
                kind: BranchKind::Transformer,
            });
        }

        for b in &file.branches {
            let from = lookup(&b.name, b.from)?;
            let to = lookup(&b.name, b.to)?;
            let kv = buses[to].base_kv;
            let z_base = kv * kv / base_mva;
            let i_base_ka = base_mva / (3f64.sqrt() * kv);
            let (r, x, kind) = match (b.uk_percent, b.r, b.x) {
                (Some(uk), None, None) => {
                    let rating = b.rating_mva.ok_or_else(|| {
                        NetworkError::InvalidParameter(format!("{}: uk_percent requires rating_mva", b.name))
                    })?;
                    let (r, x) = transformer_impedance(uk, b.ur_percent.unwrap_or(0.0), rating, base_mva, &b.name)?;
                    (r, x, BranchKind::Transformer)
                }
                (None, Some(r), Some(x)) => {
                    let (r, x) = match b.unit {
                        Some(ImpedanceUnit::Pu) => (r, x),
                        Some(ImpedanceUnit::Ohm) => (r / z_base, x / z_base),
                        Some(ImpedanceUnit::OhmPerKm) => {
                            let len = b.length_km.filter(|l| *l > 0.0).ok_or_else(|| {
                                NetworkError::InvalidParameter(format!("{}: ohm/km requires length_km > 0", b.name))
                            })?;
                            (r * len / z_base, x * len / z_base)
                        }
                        None => {
                            return Err(NetworkError::InvalidParameter(format!(
                                "{}: impedance unit must be declared",
                                b.name
                            )))
                        }
                    };
                    (r, x, BranchKind::Line)
                }
                _ => {
                    return Err(NetworkError::InvalidParameter(format!(
                        "{}: give either r and x, or uk_percent",
                        b.name
                    )))
                }
            };
            let i_max = match (b.i_max_pu, b.ampacity_ka, kind) {
                (Some(i), None, _) => Some(i),
                (None, Some(ka), _) => Some(ka / i_base_ka),
                (None, None, BranchKind::Transformer) => b.rating_mva.map(|s| s / base_mva),
                (None, None, _) => {
                    return Err(NetworkError::InvalidParameter(format!("{}: ampacity missing", b.name)))
                }
                (Some(_), Some(_), _) => {
                    return Err(NetworkError::InvalidParameter(format!(
                        "{}: give ampacity_ka or i_max_pu, not both",
                        b.name
                    )))
                }
            };
            branches.push(Branch { name: b.name.clone(), from, to, r, x, i_max, kind });
        }

        let measurement_bus = match file.measurement_bus {
            Some(id) => lookup("measurement_bus", id)?,
            None => transformer.as_ref().map_or(0, |t| branches[t.branch].from),
        };
        Self::new(file.name.clone(), base_mva, buses, branches, transformer, thevenin, measurement_bus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "base_mva": 1.0,
        "buses": [
            {"id": 0, "kind": "slack", "base_kv": 20.0},
            {"id": 1, "kind": "mv", "base_kv": 20.0, "load": {"p_mw": 0.5, "q_mvar": 0.1}}
        ],
        "branches": [
            {"name": "l1", "from": 0, "to": 1, "r": 4.0, "x": 8.0, "unit": "ohm", "ampacity_ka": 0.2}
        ]
    }"#;

    #[test]
    fn minimal_tree_loads() {
        let m = NetworkModel::from_json_str(TWO_BUS).unwrap();
        assert_eq!(m.n_buses(), 2);
        let b = &m.branches()[0];
        assert!((b.r - 0.01).abs() < 1e-12 && (b.x - 0.02).abs() < 1e-12);
        let i_base = 1.0 / (3f64.sqrt() * 20.0);
        assert!((b.i_max.unwrap() - 0.2 / i_base).abs() < 1e-9);
        assert_eq!(m.buses()[1].load.as_ref().unwrap().p, 0.5);
    }

    #[test]
    fn cycle_rejected() {
        let text = r#"{
            "base_mva": 1.0,
            "buses": [
                {"id": 0, "kind": "slack", "base_kv": 20.0},
                {"id": 1, "kind": "mv", "base_kv": 20.0},
                {"id": 2, "kind": "mv", "base_kv": 20.0}
            ],
            "branches": [
                {"name": "a", "from": 0, "to": 1, "r": 0.01, "x": 0.01, "unit": "pu", "i_max_pu": 1.0},
                {"name": "b", "from": 1, "to": 2, "r": 0.01, "x": 0.01, "unit": "pu", "i_max_pu": 1.0},
                {"name": "c", "from": 2, "to": 0, "r": 0.01, "x": 0.01, "unit": "pu", "i_max_pu": 1.0}
            ]
        }"#;
        assert!(matches!(NetworkModel::from_json_str(text), Err(NetworkError::Cycle(_))));
    }

    #[test]
    fn unknown_fields_and_units_fail_closed() {
        let text = TWO_BUS.replace("\"unit\": \"ohm\"", "\"unit\": \"furlong\"");
        assert!(matches!(NetworkModel::from_json_str(&text), Err(NetworkError::Json(_))));
        let text = TWO_BUS.replace(", \"unit\": \"ohm\"", "");
        assert!(matches!(NetworkModel::from_json_str(&text), Err(NetworkError::InvalidParameter(_))));
        let text = TWO_BUS.replace("\"base_mva\"", "\"colour\": 1, \"base_mva\"");
        assert!(NetworkModel::from_json_str(&text).is_err());
    }

    #[test]
    fn disconnected_bus_reported_by_id() {
        let text = TWO_BUS.replace(
            "\"load\": {\"p_mw\": 0.5, \"q_mvar\": 0.1}}",
            "\"load\": {\"p_mw\": 0.5, \"q_mvar\": 0.1}}, {\"id\": 7, \"kind\": \"lv\", \"base_kv\": 0.4}",
        );
        assert!(matches!(NetworkModel::from_json_str(&text), Err(NetworkError::Disconnected(7))));
    }

    #[test]
    fn thevenin_and_transformer_are_leading_branches() {
        let text = r#"{
            "base_mva": 1.0,
            "buses": [
                {"id": 1, "kind": "hv", "base_kv": 110.0},
                {"id": 0, "kind": "slack", "base_kv": 110.0},
                {"id": 2, "kind": "mv", "base_kv": 20.0}
            ],
            "branches": [],
            "transformer": {"name": "oltc", "from": 1, "to": 2, "rating_mva": 25.0, "uk_percent": 12.0,
                            "tap_step_pu": 0.01, "tap_min": -5, "tap_max": 5},
            "thevenin": {"from": 0, "to": 1, "scc_mva": 5000.0}
        }"#;
        let m = NetworkModel::from_json_str(text).unwrap();
        assert_eq!(m.buses()[0].id, 0);
        assert_eq!(m.branches()[0].kind, BranchKind::Thevenin);
        assert!((m.branches()[0].impedance().norm() - 3.0 / 5000.0).abs() < 1e-15);
        assert!((m.branches()[1].x - 0.12 / 25.0).abs() < 1e-15);
        assert_eq!(m.measurement_bus(), m.bus_index(1).unwrap());
        assert!(m.on_tap_side(m.bus_index(2).unwrap()));
        assert!(!m.on_tap_side(m.bus_index(1).unwrap()));
    }
}
