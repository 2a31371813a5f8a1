use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("zero samples")]
    ZeroSamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("quantized value {0} overflows 32-bit signed range")]
    QuantizeOverflow(f64),
    #[error("dangling zero: run-length token missing its count")]
    DanglingZero,
    #[error("run-length count {0} outside 1..=255")]
    BadRunCount(i32),
    #[error("empty token stream")]
    EmptyStream,
    #[error("symbol {0} not present in code table")]
    UnknownSymbol(i32),
    #[error("bitstream exhausted after {decoded} of {expected} tokens")]
    BitsExhausted { decoded: usize, expected: usize },
    #[error("invalid prefix code in payload")]
    InvalidPrefix,
    #[error("invalid code table: {0}")]
    InvalidTable(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("inconsistent stream: {0}")]
    Inconsistent(String),
    #[error("model file checksum error: {0}")]
    Checksum(String),
    #[error("model file parse error: {0}")]
    ModelParse(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),
    #[error("gradient-check margin violated at index {index}: |x|-C = {gap:e} < {required:e}")]
    MarginViolated { index: usize, gap: f64, required: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
