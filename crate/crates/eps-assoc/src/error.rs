use std::fmt;

/// A problem with an input file, located as precisely as possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputError {
    pub file: String,
    /// 1-based line number; the header is line 1.
    pub line: Option<u64>,
    pub column: Option<String>,
    pub message: String,
}

impl InputError {
    pub fn new(file: impl Into<String>, message: impl Into<String>) -> Self {
        InputError {
            file: file.into(),
            line: None,
            column: None,
            message: message.into(),
        }
    }

    pub fn at(mut self, line: u64) -> Self {
        self.line = Some(line);
        self
    }

    pub fn column(mut self, column: impl Into<String>) -> Self {
        self.column = Some(column.into());
        self
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(l) = self.line {
            write!(f, ", line {l}")?;
        }
        if let Some(c) = &self.column {
            write!(f, ", column `{c}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for InputError {}

/// Failure classes, mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Compute(eps_core::Error),
    #[error("{0}")]
    Simulation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Compute(_) | AppError::Simulation(_) => 2,
            _ => 1,
        }
    }
}

impl From<eps_core::Error> for AppError {
    fn from(e: eps_core::Error) -> Self {
        match e {
            eps_core::Error::InvalidInput(m) => AppError::Validation(m),
            e => AppError::Compute(e),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
