use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("preference vector is not on the open simplex: {0}")]
    Simplex(String),

    #[error(
        "utility upper bound violated for objective {objective}: f = {value}, u = {bound} \
         (u must exceed every objective value; try a larger --ub)"
    )]
    UtilityBound { objective: usize, value: f64, bound: f64 },

    #[error("infeasible point: constraint violation {violation:e}")]
    Infeasible { violation: f64 },

    #[error("projection undefined: {0}")]
    ProjectionUndefined(String),

    #[error("non-finite value at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("training diverged at iteration {iteration}: loss {loss}, last preference {ray:?}")]
    Divergence { iteration: usize, loss: f64, ray: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("model/architecture mismatch: {0}")]
    ModelMismatch(String),

    #[error("model file integrity error: {0}")]
    Integrity(String),

    #[error("unsupported model format version {found}; supported versions: {supported:?}")]
    Version { found: u64, supported: Vec<u64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
