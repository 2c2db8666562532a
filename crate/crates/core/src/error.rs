use std::fmt;

/// A single rejected row from a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub file: String,
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("date or week out of calendar range: {0}")]
    Range(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("ingestion failed with {} row error(s):\n{}", .0.len(), join_rows(.0))]
    Ingest(Vec<RowError>),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

fn join_rows(rows: &[RowError]) -> String {
    rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, shared by the CLI exit codes and the C ABI error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::State(_) | Error::Toml(_) => {
                ErrorKind::Validation
            }
            Error::Data(_)
            | Error::Range(_)
            | Error::MissingData(_)
            | Error::Metric(_)
            | Error::Ingest(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::Numerical(_) => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) | Error::Json(_) => ErrorKind::Io,
        }
    }

    /// Process exit code: 2 validation, 3 data, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
            ErrorKind::Io => 1,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
