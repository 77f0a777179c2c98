use crext_core::bishop::BishopError;
use crext_core::cones::ConeError;
use crext_core::hormander::HormanderError;
use crext_core::manifold::ManifoldError;
use crext_core::sector::SectorError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Input,
    Numerical,
}

/// A failure reported on stderr as one line of JSON.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub category: Category,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn input(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category: Category::Input,
            kind,
            message: message.into(),
        }
    }

    pub fn numerical(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category: Category::Numerical,
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            Category::Input => 2,
            Category::Numerical => 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl From<ManifoldError> for CliError {
    fn from(e: ManifoldError) -> Self {
        let kind = match e {
            ManifoldError::Document(_) | ManifoldError::Syntax { .. } => "syntax",
            _ => "invalid_model",
        };
        CliError::input(kind, e.to_string())
    }
}

impl From<HormanderError> for CliError {
    fn from(e: HormanderError) -> Self {
        CliError::input("filtration", e.to_string())
    }
}

impl From<BishopError> for CliError {
    fn from(e: BishopError) -> Self {
        match e {
            BishopError::NonConvergence { .. } => CliError::numerical("non_convergence", e.to_string()),
            BishopError::Invariant(_) => CliError::numerical("invariant_violation", e.to_string()),
            BishopError::FitResidual { .. } => CliError::numerical("fit_residual", e.to_string()),
            _ => CliError::input("invalid_argument", e.to_string()),
        }
    }
}

impl From<SectorError> for CliError {
    fn from(e: SectorError) -> Self {
        match e {
            SectorError::Manifold(m) => m.into(),
            SectorError::NegativeBarrier(_) => CliError::numerical("negative_barrier", e.to_string()),
            _ => CliError::input("invalid_argument", e.to_string()),
        }
    }
}

impl From<ConeError> for CliError {
    fn from(e: ConeError) -> Self {
        match e {
            ConeError::Sector(s) => s.into(),
            _ => CliError::input("invalid_argument", e.to_string()),
        }
    }
}
