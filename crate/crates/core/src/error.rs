use thiserror::Error;

pub type Result<T> = std::result::Result<T, GmtError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmtError {
    #[error("degenerate span: smallest singular value {sigma_min:.3e} is below 1e-8")]
    DegenerateSpan { sigma_min: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid plane: {0}")]
    InvalidPlane(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("frame base too far: d(W_ref, W) = {distance:.6} is not below {limit}")]
    FrameBaseTooFar { distance: f64, limit: f64 },

    #[error("anchor net too sparse: nearest anchor at distance {distance:.6}, need < 0.5")]
    NetTooSparse { distance: f64 },

    #[error("point at distance {distance:.6} from the frame anchor is outside radius {radius:.6}")]
    OutOfNeighborhood { distance: f64, radius: f64 },

    #[error("finite-difference step {step:.3e} exceeds limit {limit:.3e}")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("tangent basis is degenerate (condition number {condition:.3e})")]
    TangentDegenerate { condition: f64 },

    #[error("finite differences unstable: step-halving disagreement {disagreement:.3e}")]
    FdUnstable { disagreement: f64 },

    #[error("bounding box has zero volume")]
    EmptyBox,

    #[error("rejection sampling found no point of the set in {attempts} attempts")]
    EmptySet { attempts: u64 },

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
