use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty series")]
    EmptySeries,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown template '{name}' (available: {available})")]
    UnknownTemplate { name: String, available: String },

    #[error("window [{lo}, {hi}) outside bounds 0..{len}")]
    OutOfBounds { lo: i64, hi: i64, len: usize },

    #[error("no artery found on channel {channel}")]
    NoArteryFound { channel: usize },

    #[error("SNR gate failed on channel {channel}: {snr_db:.2} dB < {gate_db:.2} dB")]
    SnrGateFailed {
        channel: usize,
        snr_db: f64,
        gate_db: f64,
    },

    #[error("threshold never crossed while locating the {wall} wall leading edge")]
    ThresholdNotCrossed { wall: &'static str },

    #[error("no beat detected")]
    NoBeatDetected,

    #[error("retrograde timing: channel reference times are not strictly increasing")]
    RetrogradeTiming,

    #[error("insufficient beats: {valid} valid, {required} required")]
    InsufficientBeats { valid: usize, required: usize },

    #[error("inverted systole: systolic diameter {ds_mm} mm below diastolic {dd_mm} mm")]
    InvertedSystole { ds_mm: f64, dd_mm: f64 },

    #[error("stream too short: {seconds:.2} s available, {required:.2} s required")]
    StreamTooShort { seconds: f64, required: f64 },

    #[error("malformed waveform table: {0}")]
    MalformedTable(String),

    #[error("unexpected end of stream")]
    UnexpectedEof,

    #[error("bad magic: expected \"UPRF\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
