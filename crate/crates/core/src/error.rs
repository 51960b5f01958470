use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate chart at node {node}: det g = {det:e}")]
    DegenerateChart { node: usize, det: f64 },

    #[error("pole regularity violated at node {node}: axis slope {slope:.3e}")]
    PoleRegularity { node: usize, slope: f64 },

    #[error("self-intersecting profile: segments {first} and {second} cross")]
    SelfIntersecting { first: usize, second: usize },

    #[error("H nonpositive at {} node(s), first at {first}", .nodes.len())]
    NonpositiveMean { nodes: Vec<usize>, first: usize },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("past blow-up: t = {t} >= T_max = {t_max}")]
    PastBlowup { t: f64, t_max: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("state triple is not equispaced in time")]
    NonEquispaced,

    #[error("non-finite field value at node {node}")]
    NonFinite { node: usize },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
