use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("asymmetric couplings: J[{i}][{j}] = {forward} Hz but J[{j}][{i}] = {backward} Hz")]
    AsymmetricCoupling { i: usize, j: usize, forward: f64, backward: f64 },

    #[error("index {index} out of range for {len} spins")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cannot combine a {0} state with a {1} state")]
    RepresentationMismatch(&'static str, &'static str),

    #[error("{0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("coherence orders {0:?} are not closed under negation")]
    AsymmetricOrders(Vec<i32>),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("spins {0} and {1} are not coupled")]
    MissingCoupling(usize, usize),

    #[error("spins {0} and {1} are not connected in the coupling graph")]
    Disconnected(usize, usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integrator step cap {given:e} s too coarse; at most {required:e} s required")]
    StepCapTooCoarse { required: f64, given: f64 },

    #[error("relaxation parameters missing for spin {0}")]
    MissingRelaxation(usize),

    #[error("coupling between spins {0} and {1} is zero")]
    ZeroCoupling(usize, usize),

    #[error("spectator is on resonance with the pulse carrier (offset {0} Hz)")]
    OnResonance(f64),

    #[error("wrong spin count: expected {expected}, found {found}")]
    WrongSpinCount { expected: usize, found: usize },

    #[error("unequal thermal weights: {0:?}")]
    UnequalWeights(Vec<f64>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("rank-deficient tomography design (condition number {0:e})")]
    RankDeficient(f64),
}

impl Error {
    /// Short machine-readable tag used by the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSystem(_) => "invalid_system",
            Error::AsymmetricCoupling { .. } => "asymmetric_coupling",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::RepresentationMismatch(..) => "representation_mismatch",
            Error::NotPowerOfTwo(_) => "not_power_of_two",
            Error::AsymmetricOrders(_) => "asymmetric_orders",
            Error::InvalidGate(_) => "invalid_gate",
            Error::MissingCoupling(..) => "missing_coupling",
            Error::Disconnected(..) => "disconnected",
            Error::Unsupported(_) => "unsupported",
            Error::StepCapTooCoarse { .. } => "step_cap_too_coarse",
            Error::MissingRelaxation(_) => "missing_relaxation",
            Error::ZeroCoupling(..) => "zero_coupling",
            Error::OnResonance(_) => "on_resonance",
            Error::WrongSpinCount { .. } => "wrong_spin_count",
            Error::UnequalWeights(_) => "unequal_weights",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::RankDeficient(_) => "rank_deficient",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
