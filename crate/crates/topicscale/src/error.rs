//! One crate-wide error type.
//!
//! Every fallible operation returns [`Error`]; the pipeline additionally tags
//! failures with the stage they came from so end-to-end runs report
//! actionable messages ("stage wordfish: scale unidentified: …").

use thiserror::Error;

/// All failure modes of the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem error with the offending path attached.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed delimited metadata / tabular input.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed JSON (JSONL corpus input or model files).
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed TOML pipeline config.
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    /// A document has no metadata row.
    #[error("missing metadata for document {doc_id}")]
    MissingMetadata { doc_id: String },

    /// A metadata row could not be interpreted.
    #[error("bad metadata: {0}")]
    BadMetadata(String),

    /// The same doc_id appeared twice (in the texts or the metadata).
    #[error("duplicate doc_id {doc_id}")]
    DuplicateDocId { doc_id: String },

    /// Corpus source contained no documents.
    #[error("no documents")]
    NoDocuments,

    /// Vocabulary filtering removed every term.
    #[error("empty vocabulary after filtering (min_count {min_count})")]
    EmptyVocabulary { min_count: u32 },

    /// A year subset matched nothing.
    #[error("no documents in year range [{from}, {to}]")]
    NoDocumentsInRange { from: i32, to: i32 },

    /// Shape mismatch between inputs.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The Poisson scale cannot be identified on this corpus.
    #[error("scale unidentified: {0}")]
    ScaleUnidentified(String),

    /// A direction-anchor doc_id is not in the corpus.
    #[error("anchor document {doc_id} not found")]
    AnchorNotFound { doc_id: String },

    /// The two anchor documents have (numerically) equal positions.
    #[error("anchor uninformative: anchor documents have equal positions")]
    AnchorUninformative,

    /// A response value is NaN or infinite.
    #[error("non-finite response at document index {index}")]
    NonFiniteResponse { index: usize },

    /// Requested more topics than distinct terms.
    #[error("k = {k} exceeds the {terms} distinct terms in the corpus")]
    TooManyTopics { k: usize, terms: usize },

    /// Inference was asked to run on a document with no tokens.
    #[error("empty document: variational step needs at least one token")]
    EmptyDocument,

    /// A vector that must lie on the probability simplex does not.
    #[error("not on the probability simplex: {0}")]
    NotOnSimplex(String),

    /// R² is undefined when the responses have zero variance.
    #[error("zero response variance: r_squared undefined")]
    ZeroResponseVariance,

    /// No topic-word entry exceeded the uniform threshold.
    #[error("entropy undefined: uniform topics")]
    EntropyUndefined,

    /// A linear system was numerically singular.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Density estimation needs at least two points per group.
    #[error("group {label} has fewer than 2 observations")]
    GroupTooSmall { label: String },

    /// A per-K fit inside a topic-count scan failed.
    #[error("scan fit at K={k}: {source}")]
    ScanFit {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    /// A pipeline stage failed; the stage name is attached.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Convenience constructor for IO errors with a path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
