use crate::groups::GroupKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("group kind mismatch: {left} vs {right}")]
    KindMismatch { left: GroupKind, right: GroupKind },

    #[error("matrix is not in the Lie algebra of {kind}: {reason}")]
    PatternViolation { kind: GroupKind, reason: String },

    /// Rotation angle too close to pi for a unique logarithm.
    #[error("rotation angle {angle} is at the logarithm branch cut")]
    BranchCut { angle: f64 },

    #[error("invalid group element: {0}")]
    InvalidElement(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("node belongs to a different tape")]
    ForeignNode,

    #[error("unknown node index {0}")]
    UnknownNode(usize),

    #[error("type mismatch: expected {expected}, found {found}")]
    TypeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("loss node must be scalar-valued")]
    NotScalar,

    #[error("tape already consumed by a backward pass; call reset() first")]
    TapeConsumed,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: edge references unknown vertex {vertex}")]
    DanglingEdge { line: usize, vertex: u64 },

    #[error("edge {from} -> {to}: {source}")]
    Edge {
        from: u64,
        to: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
