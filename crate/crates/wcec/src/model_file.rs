//! Energy model JSON files.
//!
//! ```json
//! {
//!   "base_power_mw": 200.0,
//!   "cycle_time_ns": 2.5,
//!   "inter_instruction": {"constant": 0.0},
//!   "opcodes": {
//!     "maccs": {"base_mw": 24.4, "alpha_mw_per_bit": 3.2},
//!     "default": {"base_mw": 12.6, "alpha_mw_per_bit": 0.63}
//!   }
//! }
//! ```
//!
//! `inter_instruction` may instead be `{"matrix": [["from", "to", mw], ...]}`
//! and defaults to a zero constant. Opcodes without an entry take the
//! `default` entry.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wcec_core::energy::{InterInstruction, OpcodeCost};
use wcec_core::{EnergyModel, Opcode};

use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostEntry {
    base_mw: f64,
    alpha_mw_per_bit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InterEntry {
    Constant(f64),
    Matrix(Vec<(String, String, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    base_power_mw: f64,
    cycle_time_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inter_instruction: Option<InterEntry>,
    opcodes: BTreeMap<String, CostEntry>,
}

/// A model together with notes about entries filled from `default`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedModel {
    pub model: EnergyModel,
    pub warnings: Vec<String>,
}

fn opcode(name: &str) -> Result<Opcode, Error> {
    Opcode::from_name(name).ok_or_else(|| Error::Format(format!("unknown opcode `{name}` in model")))
}

pub fn parse_model(text: &str) -> Result<LoadedModel, Error> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    let default = doc.opcodes.get("default").copied();
    let mut costs = BTreeMap::new();
    for (name, c) in &doc.opcodes {
        if name != "default" {
            costs.insert(opcode(name)?, OpcodeCost { base_mw: c.base_mw, alpha_mw_per_bit: c.alpha_mw_per_bit });
        }
    }
    let mut warnings = Vec::new();
    if let Some(d) = default {
        for op in Opcode::ALL {
            if let std::collections::btree_map::Entry::Vacant(e) = costs.entry(op) {
                let alpha = if op.priced_as() == Opcode::Nop { 0.0 } else { d.alpha_mw_per_bit };
                e.insert(OpcodeCost { base_mw: d.base_mw, alpha_mw_per_bit: alpha });
                warnings.push(format!("`{}` priced with the default entry", op.name()));
            }
        }
    }
    let inter = match doc.inter_instruction {
        None => InterInstruction::default(),
        Some(InterEntry::Constant(c)) => InterInstruction::Constant(c),
        Some(InterEntry::Matrix(entries)) => {
            let mut m = BTreeMap::new();
            for (from, to, mw) in entries {
                m.insert((opcode(&from)?, opcode(&to)?), mw);
            }
            InterInstruction::Matrix(m)
        }
    };
    let model = EnergyModel::new(doc.base_power_mw, doc.cycle_time_ns, &costs, inter)?;
    Ok(LoadedModel { model, warnings })
}

pub fn model_to_json(model: &EnergyModel) -> String {
    let opcodes = Opcode::ALL
        .into_iter()
        .map(|op| {
            let c = model.cost(op);
            (op.name().to_string(), CostEntry { base_mw: c.base_mw, alpha_mw_per_bit: c.alpha_mw_per_bit })
        })
        .collect();
    let inter = match model.inter_instruction() {
        InterInstruction::Constant(c) => InterEntry::Constant(*c),
        InterInstruction::Matrix(m) => InterEntry::Matrix(
            m.iter()
                .map(|(&(a, b), &mw)| (a.name().to_string(), b.name().to_string(), mw))
                .collect(),
        ),
    };
    let doc = ModelDoc {
        base_power_mw: model.base_power_mw(),
        cycle_time_ns: model.cycle_time_ns(),
        inter_instruction: Some(inter),
        opcodes,
    };
    serde_json::to_string_pretty(&doc).expect("model serializes") + "\n"
}

pub fn load_model(path: &Path) -> Result<LoadedModel, Error> {
    parse_model(&crate::read_file(path)?)
}

pub fn save_model(path: &Path, model: &EnergyModel) -> Result<(), Error> {
    crate::write_file(path, &model_to_json(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fills_missing_opcodes() {
        let text = r#"{"base_power_mw": 200, "cycle_time_ns": 2.5,
            "opcodes": {"add": {"base_mw": 3, "alpha_mw_per_bit": 0.5},
                        "default": {"base_mw": 1, "alpha_mw_per_bit": 0.25}}}"#;
        let m = parse_model(text).unwrap();
        assert_eq!(m.model.cost(Opcode::Add).base_mw, 3.0);
        assert_eq!(m.model.cost(Opcode::Xor).alpha_mw_per_bit, 0.25);
        assert_eq!(m.model.cost(Opcode::Nop).alpha_mw_per_bit, 0.0);
        assert_eq!(m.warnings.len(), Opcode::COUNT - 1);
    }

    #[test]
    fn missing_opcode_without_default_fails() {
        let text = r#"{"base_power_mw": 200, "cycle_time_ns": 2.5,
            "opcodes": {"add": {"base_mw": 3, "alpha_mw_per_bit": 0.5}}}"#;
        assert!(matches!(parse_model(text), Err(Error::Model(_))));
    }

    #[test]
    fn unknown_names_fail() {
        let text = r#"{"base_power_mw": 200, "cycle_time_ns": 2.5,
            "opcodes": {"frob": {"base_mw": 3, "alpha_mw_per_bit": 0.5}}}"#;
        assert!(matches!(parse_model(text), Err(Error::Format(_))));
    }

    #[test]
    fn round_trip_with_matrix() {
        let mut m = BTreeMap::new();
        m.insert((Opcode::Add, Opcode::Sub), 1.5);
        m.insert((Opcode::Nop, Opcode::Maccs), 0.25);
        let mut costs = BTreeMap::new();
        for (i, op) in Opcode::ALL.into_iter().enumerate() {
            let alpha = if op.priced_as() == Opcode::Nop { 0.0 } else { i as f64 / 7.0 };
            costs.insert(op, OpcodeCost { base_mw: i as f64 * 1.1, alpha_mw_per_bit: alpha });
        }
        let model = EnergyModel::new(201.0, 2.0, &costs, InterInstruction::Matrix(m)).unwrap();
        let back = parse_model(&model_to_json(&model)).unwrap();
        assert_eq!(back.model, model);
        assert!(back.warnings.is_empty());
    }
}
