// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::Serialize;

/// Errors surfaced by the command-line layer. Each maps to an exit code and
/// a JSON record on stderr.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration: unknown key, wrong type or invalid value.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    /// Unreadable or malformed input data file.
    #[error("data file `{file}`: {message}")]
    Data { file: String, message: String },
    #[error(transparent)]
    Core(#[from] spinforge_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<&'a str>,
    exit_code: i32,
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { key: key.into(), message: message.into() }
    }

    /// 2 for configuration and input problems, 1 for everything that went
    /// wrong while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Data { .. } => 2,
            Self::Core(spinforge_core::Error::Argument(_)) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Data { .. } => "data",
            Self::Core(spinforge_core::Error::Argument(_)) => "argument",
            Self::Core(spinforge_core::Error::Domain(_)) => "domain",
            Self::Core(spinforge_core::Error::Dimension(_)) => "dimension",
            Self::Core(spinforge_core::Error::Numerical(_)) => "numerical",
            Self::Io(_) => "io",
            Self::Output(_) => "output",
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json(&self) -> String {
        let key = match self {
            Self::Config { key, .. } => Some(key.as_str()),
            _ => None,
        };
        let rec = ErrorRecord { error: self.kind(), message: self.to_string(), key, exit_code: self.exit_code() };
        serde_json::to_string(&rec).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}
