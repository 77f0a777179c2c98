use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::input::ModelEcho;

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Directory for CSV artifacts
    #[arg(long, value_name = "DIR")]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: Tool,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelEcho>,
    /// Every flag, defaults included.
    pub settings: Value,
    pub sections: BTreeMap<&'static str, Value>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, model: Option<ModelEcho>, settings: &impl Serialize) -> Self {
        Report {
            tool: Tool {
                name: "crext",
                version: env!("CARGO_PKG_VERSION"),
            },
            command,
            model,
            settings: to_value(settings),
            sections: BTreeMap::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn section(&mut self, name: &'static str, value: &impl Serialize) {
        self.sections.insert(name, to_value(value));
    }
}

pub fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

/// A named CSV file.
pub struct Artifact {
    pub name: String,
    pub content: String,
}

/// Writes the CSV artifacts (when a directory is given) and the report.
pub fn emit(mut report: Report, artifacts: Vec<Artifact>, out: &OutputArgs) -> Result<(), CliError> {
    let io = |p: &std::path::Path, e: std::io::Error| CliError::input("io", format!("{}: {e}", p.display()));
    if let Some(dir) = &out.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for a in &artifacts {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.content).map_err(|e| io(&path, e))?;
            report.artifacts.push(a.name.clone());
        }
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match &out.json {
        Some(path) => std::fs::write(path, text).map_err(|e| io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
