use thiserror::Error;

/// Errors raised by the simulation kernels.
///
/// Structural problems (bad inputs, mismatched shapes) are errors. Faults that
/// the kernels are built to observe, such as a diverged solve or a dissenting
/// replica, are reported through return values instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("minimum thrust bound rho1 = {rho1} must be >= 0 and strictly below rho2 = {rho2}")]
    ThrustBoundOrder { rho1: f64, rho2: f64 },
    #[error("node count must be at least 2, got {0}")]
    TooFewNodes(usize),
    #[error("step duration must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("glide slope angle must lie in (0, pi/2), got {0}")]
    GlideSlopeAngle(f64),
    #[error("scenario field `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("iterate length {got} does not match 10*N = {expected}")]
    IterateLength { expected: usize, got: usize },

    #[error("faults_to_catch must be at least 1, got {0}")]
    FaultsToCatch(usize),
    #[error("tolerance epsilon must be finite and non-negative, got {0}")]
    Epsilon(f64),
    #[error("expected {expected} replica outputs, got {got}")]
    ReplicaCount { expected: usize, got: usize },
    #[error("replica id {id} out of range for {count} replicas")]
    ReplicaId { id: usize, count: usize },
    #[error("duplicate output for replica {0}")]
    DuplicateReplica(usize),
    #[error("payload length mismatch: replica {replica} has {got}, expected {expected}")]
    PayloadLength {
        replica: usize,
        expected: usize,
        got: usize,
    },
    #[error("outputs disagree on (stage, step): {0}")]
    StepMismatch(String),
    #[error("arbiter mode {found:?} cannot be used here, expected {expected:?}")]
    WrongMode {
        expected: crate::arbiter::Mode,
        found: crate::arbiter::Mode,
    },
    #[error("quorum lost at checkpoint {checkpoint} ({label})")]
    QuorumLost {
        checkpoint: usize,
        label: String,
        report: crate::arbiter::FaultReport,
    },

    #[error("bit index {0} outside [0, 63]")]
    BitIndex(u32),
    #[error("scalar index {index} out of bounds for site of length {len}")]
    ScalarIndex { index: usize, len: usize },
    #[error("trials_per_stage must be at least 1")]
    NoTrials,
    #[error("fault-free reference solve did not converge ({0})")]
    ReferenceFailed(String),

    #[error("controller gains must be positive and the rate finite: {0}")]
    Controller(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("image dimensions {width}x{height} are not powers of two")]
    NotPowerOfTwo { width: usize, height: usize },
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("sample count {got} does not match {width}x{height}")]
    SampleCount {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("image contains non-finite samples")]
    NonFiniteSample,
    #[error("benchmark needs at least 3 repetitions, got {0}")]
    TooFewReps(usize),
    #[error("malformed image file: {0}")]
    ImageFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
