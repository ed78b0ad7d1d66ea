use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ssl_kernel::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        source: Box<CliError>,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

pub(crate) trait CellContext<T> {
    fn in_cell(self, cell: impl FnOnce() -> String) -> Result<T>;
}

impl<T, E: Into<CliError>> CellContext<T> for std::result::Result<T, E> {
    fn in_cell(self, cell: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| CliError::Cell {
            cell: cell(),
            source: Box::new(e.into()),
        })
    }
}
