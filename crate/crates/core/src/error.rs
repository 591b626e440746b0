use std::path::PathBuf;

/// Crate-wide error type. Variant names follow the contract each operation
/// documents; the CLI maps [`Error::exit_class`] onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // numeric substrate
    #[error("cannot normalize a vector with norm <= 1e-12")]
    ZeroVector,
    #[error("logsumexp of an empty sequence")]
    EmptyInput,
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    // tensor files and manifests
    #[error("{path}: bad magic (expected EMB1)")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated file ({detail})")]
    TruncatedFile { path: PathBuf, detail: String },
    #[error("{path}: non-finite payload")]
    NonFinitePayload { path: PathBuf },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    ManifestParse(String),

    // similarities
    #[error("view count mismatch: {0} vs {1}")]
    ViewCountMismatch(usize, usize),
    #[error("category mismatch: {0} vs {1}")]
    CategoryMismatch(String, String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("unknown similarity kind {0:?}")]
    UnknownSimilarity(String),

    // similarity store
    #[error("category {0} has no landmark set")]
    MissingLandmarks(String),
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("object {0} not present in similarity store")]
    UnknownObject(String),
    #[error("similarity store fingerprint {store} does not match dataset {dataset}")]
    FingerprintMismatch { store: String, dataset: String },

    // loss
    #[error("batch similarity must be strictly positive (entry [{0}][{1}] = {2})")]
    NonPositiveSim(usize, usize, f64),

    // encoder / training
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),
    #[error("backward cache does not match parameters: {0}")]
    CacheMismatch(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("non-finite loss at step {step} (epoch {epoch}, batch {batch})")]
    NonFiniteLoss {
        step: usize,
        epoch: usize,
        batch: usize,
    },
    #[error("weight invariant violated at step {step}: {detail}")]
    WeightInvariant { step: usize, detail: String },

    // evaluation
    #[error("category sets differ: {0}")]
    CategorySetMismatch(String),
    #[error("object {0} appears in both train and test splits")]
    SplitLeakage(String),
    #[error("query {0} has no ground-truth gallery item")]
    MissingGroundTruth(String),

    #[error("dataset validation failed: {0} violation(s); run `hn3d validate` for details")]
    ValidationFailed(usize),
}

/// Coarse failure class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Bad flags or option combinations.
    Usage,
    /// Bad data: unreadable files, mismatched stores, failed validation.
    Data,
    /// Numeric failure (NaN/Inf abort).
    Numeric,
}

impl Error {
    pub fn exit_class(&self) -> ExitClass {
        match self {
            Error::ConfigInvalid(_) => ExitClass::Usage,
            Error::NonFiniteLoss { .. }
            | Error::WeightInvariant { .. }
            | Error::NonFinite(_)
            | Error::ZeroVector
            | Error::EmptyInput => ExitClass::Numeric,
            _ => ExitClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
