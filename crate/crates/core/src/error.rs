use thiserror::Error;

/// Errors surfaced by graph construction, reductions, factorization and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix entry ({i},{j}) has no symmetric partner (or values differ)")]
    Asymmetric { i: usize, j: usize },

    #[error("edge ({u},{v}) has non-positive weight {w}")]
    NonPositiveWeight { u: usize, v: usize, w: f64 },

    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),

    #[error("vertex id {id} out of range for {n} vertices")]
    VertexOutOfRange { id: usize, n: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("matrix is not PSDDD: {0}")]
    NotPsddd(String),

    #[error("graph is disconnected where a connected graph is required")]
    Disconnected,

    #[error("right-hand side not in the range of the matrix (component {component}: |<b,1>| = {dot:.3e} exceeds tolerance)")]
    RhsNotInRange { component: usize, dot: f64 },

    #[error("edge set is not a spanning forest: {0}")]
    NotAForest(String),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("matrix pencil spans differ: {0}")]
    SpanMismatch(String),

    #[error("dimension {n} exceeds dense-oracle cap {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("parameter t = {t} out of range [1, {n}]")]
    TOutOfRange { t: usize, n: usize },

    #[error("trim order inconsistent with matrix: {0}")]
    OrderMismatch(String),

    #[error("iteration cap {cap} exceeded (residual {residual:.3e}, target {target:.3e})")]
    IterationCapExceeded { cap: usize, residual: f64, target: f64 },

    #[error("divergence guard tripped after {iters} iterations: residual grew {factor:.1}x above initial; kappa_bound is likely invalid")]
    DivergenceGuard { iters: usize, factor: f64 },

    #[error("recursion exhausted at depth {depth}: reduced system of dimension {n} exceeds dense cap {cap}")]
    RecursionExhausted { depth: usize, n: usize, cap: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
