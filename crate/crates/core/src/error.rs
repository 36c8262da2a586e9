use thiserror::Error;

/// Errors produced by the simulator and its cryptographic building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid ring parameters: {0}")]
    InvalidRingParams(String),

    #[error("ring parameter mismatch: (n={left_n}, q={left_q}) vs (n={right_n}, q={right_q})")]
    RingMismatch {
        left_n: usize,
        left_q: u32,
        right_n: usize,
        right_q: u32,
    },

    #[error("unsupported centered-binomial width eta={0} (expected 2 or 3)")]
    UnsupportedEta(u32),

    #[error("invalid KEM parameters: {0}")]
    InvalidKemParams(String),

    #[error("invalid signature parameters: {0}")]
    InvalidSigParams(String),

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error("signing did not terminate within {0} attempts")]
    SigningAborted(u32),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty update list")]
    EmptyUpdates,

    #[error("trimming {trimmed} from each side of {n} values leaves nothing to average")]
    OverTrimmed { n: usize, trimmed: usize },

    #[error("krum needs n >= 2f + 3 (n={n}, f={f})")]
    KrumPrecondition { n: usize, f: usize },

    #[error("no verified contributors")]
    NoVerifiedContributors,

    #[error("no verification key for client {0}")]
    UnknownClient(u32),

    #[error("label_flip is a dataset transform and cannot be applied to an update")]
    LabelFlipOnUpdate,

    #[error("modulus {modulus} exceeds the {max_bits}-bit oracle bound")]
    ModulusTooLarge { modulus: u64, max_bits: u32 },

    #[error("RSA block {block} is not below the modulus {modulus}")]
    BlockOutOfRange { block: u64, modulus: u64 },

    #[error("phase {got} invoked out of order (expected {expected})")]
    PhaseOutOfOrder { expected: String, got: String },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("transcript error: {0}")]
    Transcript(String),

    #[error("transcript config hash mismatch")]
    TranscriptHashMismatch,

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
