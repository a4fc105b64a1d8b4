use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate vector: zero norm")]
    DegenerateVector,

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("empty viewpoint{}", .0.as_deref().map(|v| format!(" `{v}`")).unwrap_or_default())]
    EmptyViewpoint(Option<String>),

    #[error("invalid weight {weight} for item `{item}`, feature `{feature}`")]
    InvalidWeight { item: String, feature: String, weight: f64 },

    #[error("invalid viewpoint matrix `{viewpoint}`: {reason}")]
    InvalidMatrix { viewpoint: String, reason: String },

    #[error("invalid grid {width}x{height}: {reason}")]
    InvalidGrid {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("invalid training parameters: {0}")]
    InvalidParams(String),

    #[error("feature space mismatch: {0}")]
    FeatureSpaceMismatch(String),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("degenerate map: no cluster has a peculiar feature")]
    DegenerateMap,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid scan range {min}..={max}")]
    InvalidScanRange { min: usize, max: usize },

    #[error("empty selection")]
    EmptySelection,

    #[error("node {node} out of range for a grid of {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },

    #[error("projection universe mismatch: {0}")]
    UniverseMismatch(String),

    #[error("disjoint universes: no source node of `{source_map}` propagates to `{target}`")]
    DisjointUniverses { source_map: String, target: String },

    #[error("need at least two maps, got {0}")]
    TooFewMaps(usize),

    #[error("unknown map `{0}`")]
    UnknownMap(String),

    #[error("unknown area {area} on map `{map}`")]
    UnknownArea { map: String, area: usize },

    #[error("chain step {step}: {reason}")]
    ChainStep { step: usize, reason: String },

    #[error("site record without url (table {table}, row {row})")]
    MissingUrl { table: usize, row: usize },

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("unknown viewpoint `{0}`")]
    UnknownViewpoint(String),

    #[error("parse error in {path}: {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
