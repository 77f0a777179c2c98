use std::io::ErrorKind;

use crext_core::manifold::ManifoldModel;
use crext_core::polyalg::Weight;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

const BUILTIN: &[(&str, &str)] = &[
    ("levi", include_str!("../models/levi.mfd")),
    ("mainexample", include_str!("../models/mainexample.mfd")),
    ("example", include_str!("../models/example.mfd")),
    ("vi", include_str!("../models/vi.mfd")),
    ("flat", include_str!("../models/flat.mfd")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Reads a model from a path or from `builtin:NAME`.
pub fn load_model(arg: &str) -> Result<(ManifoldModel, ModelEcho), CliError> {
    let text = match arg.strip_prefix("builtin:") {
        Some(name) => BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| {
                CliError::input(
                    "unknown_builtin",
                    format!("no builtin model '{name}' (available: {})", builtin_names().join(", ")),
                )
            })?,
        None => std::fs::read_to_string(arg).map_err(|e| match e.kind() {
            ErrorKind::NotFound => CliError::input("missing_file", format!("{arg}: {e}")),
            _ => CliError::input("io", format!("{arg}: {e}")),
        })?,
    };
    let model = ManifoldModel::parse_and_validate(&text)?;
    let echo = ModelEcho::new(arg, &model);
    Ok((model, echo))
}

pub fn weight_value(w: Weight) -> Value {
    match w {
        Weight::Finite(m) => Value::from(m),
        Weight::Infinite => Value::from("inf"),
    }
}

/// Identifies the analysed model in a report.
#[derive(Debug, Clone, Serialize)]
pub struct ModelEcho {
    pub source: String,
    /// SHA-256 of the canonical document text.
    pub sha256: String,
    pub l: usize,
    pub n: usize,
    pub blocks: Vec<usize>,
    pub weights: Vec<Value>,
    pub canonical: String,
}

impl ModelEcho {
    fn new(source: &str, model: &ManifoldModel) -> Self {
        let canonical = model.to_document_string();
        let sha256 = Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        ModelEcho {
            source: source.to_string(),
            sha256,
            l: model.l(),
            n: model.n(),
            blocks: model.weights().sizes().to_vec(),
            weights: model.weights().weights().iter().map(|w| weight_value(*w)).collect(),
            canonical,
        }
    }
}
