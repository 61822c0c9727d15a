use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: need {need} bytes, have {have}")]
    TruncatedFile { need: usize, have: usize },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("model expects {expected}-dimensional input, data has {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("query index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("epoch {epoch}, batch {batch}: {source} (training diverged? try a smaller lr)")]
    Step { epoch: usize, batch: usize, source: bitrip_core::Error },

    #[error(transparent)]
    Core(#[from] bitrip_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use bitrip_core::Error as C;
        match self {
            Error::Config(_) => 2,
            Error::Step { .. } => 4,
            Error::Core(
                C::NotPositiveDefinite { .. } | C::NonFinite(_) | C::Domain(_) | C::NotSymmetric | C::StaleTrace,
            ) => 4,
            _ => 3,
        }
    }
}
