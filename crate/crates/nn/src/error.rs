use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {0:?}: dimensions must be positive and match the data length")]
    InvalidShape(Vec<usize>),
    #[error("{op}: non-positive output size for input {input:?} (kernel {kernel}, stride {stride}, pad {pad})")]
    ConvOutput {
        op: &'static str,
        input: Vec<usize>,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    #[error("batch norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` is already registered")]
    DuplicateParam(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
