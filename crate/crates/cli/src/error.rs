use std::path::PathBuf;

use thiserror::Error;

fn locate(field: &Option<String>, line: &Option<usize>) -> String {
    let mut s = String::new();
    if let Some(f) = field {
        s.push_str(&format!(" in `{f}`"));
    }
    if let Some(l) = line {
        s.push_str(&format!(" at line {l}"));
    }
    s
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", locate(.field, .line))]
    Config {
        field: Option<String>,
        line: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Numerical(#[from] wavefront_lab::Error),

    #[error("cannot write {}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            field: Some(field.into()),
            line: None,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}
