use serde::Serialize;

/// Validation errors exit with 2, computation errors with 1.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CliError {
    Validation { field: String, message: String },
    Computation { module: String, message: String },
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Computation { .. } => 1,
        }
    }
}

/// Tags a core error with the module that raised it.
pub trait InModule<T> {
    fn in_module(self, module: &str) -> Result<T, CliError>;
}

impl<T> InModule<T> for hypwalk::Result<T> {
    fn in_module(self, module: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Computation {
            module: module.to_string(),
            message: e.to_string(),
        })
    }
}
