use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("class value {value} at pixel (col {col}, row {row}) is outside scheme `{scheme}`")]
    ClassOutOfScheme {
        value: u8,
        col: usize,
        row: usize,
        scheme: String,
    },

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("invalid class scheme: {0}")]
    InvalidScheme(String),

    #[error("no labeled pixels: {0}")]
    NoLabels(String),

    #[error("scheme `{0}` has no Negative class")]
    NoNegativeClass(String),

    #[error("extents do not overlap: {0}")]
    NoOverlap(String),

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
