use qfi_core::QfiError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] QfiError),
    #[error("{0}")]
    Io(String),
}

/// Variant name of a core error, e.g. `FringeAmbiguity`.
fn variant(e: &QfiError) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

impl CliError {
    /// Argument-shaped core errors are reported as configuration errors.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Numerical(QfiError::InvalidArgument(_) | QfiError::InvalidGrid(_) | QfiError::BelowThreshold { .. }) => {
                "ConfigError"
            }
            CliError::Numerical(_) => "NumericalError",
            CliError::Io(_) => "IoError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "ConfigError" => 2,
            "NumericalError" => 3,
            _ => 4,
        }
    }

    /// One JSON object, written as a single line to stderr.
    pub fn report(&self, scenario: Option<&str>) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Some(s) = scenario {
            v["scenario"] = json!(s);
        }
        if let CliError::Numerical(e) = self {
            v["detail"] = json!(variant(e));
        }
        v
    }
}
