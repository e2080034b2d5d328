//! Errors shared by the TOML loaders (arm parameters, safety tables).

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}parse error: {message}", file_prefix(.file))]
    Parse {
        file: Option<String>,
        message: String,
    },
    #[error("{}invalid value for `{key}`: {reason}", file_prefix(.file))]
    Invalid {
        file: Option<String>,
        key: String,
        reason: String,
    },
}

fn file_prefix(file: &Option<String>) -> String {
    match file {
        Some(f) => format!("{f}: "),
        None => String::new(),
    }
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            file: None,
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// Attaches the file name to a parse or validation error.
    pub fn in_file(self, path: &Path) -> Self {
        let name = Some(path.display().to_string());
        match self {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                file: name,
                message,
            },
            ConfigError::Invalid { key, reason, .. } => ConfigError::Invalid {
                file: name,
                key,
                reason,
            },
            other => other,
        }
    }
}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError::Parse {
            file: None,
            message: e.to_string(),
        }
    }
}
