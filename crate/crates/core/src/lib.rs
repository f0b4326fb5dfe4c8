//! Simulation and secrecy certification for secure quantum network coding on
//! the butterfly network.
//!
//! Two sources `V1`, `V2` send qudits of prime dimension `p` to the sinks `V6`,
//! `V5` through a network whose quantum edges all carry a single-qudit
//! bottleneck. The sources share a classical key `B1` that masks every
//! quantum edge; the sinks share a key `B2` that one-time-pads the two
//! measurement outcomes they exchange.
//!
//! Modules, bottom-up:
//! - [`field`]: arithmetic in `F_p`.
//! - [`code`]: the classical linear network code, its coefficient matrices,
//!   and exhaustive recovery/secrecy checks.
//! - [`engine`]: a sparse pure-state qudit simulator with partial traces and
//!   state metrics.
//! - [`protocol`]: the four-step transmission protocol.
//! - [`adversary`]: single-edge eavesdropping attacks as Stinespring
//!   isometries.
//! - [`security`]: reconstruction of the eavesdropper's view and
//!   independence certificates.

pub mod adversary;
pub mod code;
pub mod engine;
pub mod field;
pub mod protocol;
pub mod security;

pub use adversary::{AttackKind, AttackSpec, ResendBasis};
pub use code::{CoefficientMatrix, FlowAssignment, KeyMode, NetworkCode};
pub use engine::{DensityMatrix, Isometry, MeasureMode, RegisterId, SparseState};
pub use field::{Fp, Prime};
pub use protocol::{InputMode, PadVariant, ProtocolConfig, RunResult, Transcript};
pub use security::{AnalysisOptions, EveView, IndependenceVerdict, SecurityReport};

use thiserror::Error;

/// Numerical tolerance used for validity checks unless a caller supplies one.
pub const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not an odd prime")]
    InvalidModulus(u64),
    #[error("field modulus mismatch: {left} vs {right}")]
    ModulusMismatch { left: u32, right: u32 },
    #[error("zero has no multiplicative inverse")]
    DivisionByZero,
    #[error("edge e({0}) is not an attackable quantum edge (expected 5..=11)")]
    EdgeOutOfRange(u8),
    #[error("unknown register {0}")]
    UnknownRegister(RegisterId),
    #[error("register {0} appears more than once")]
    DuplicateRegister(RegisterId),
    #[error("target register {0} is also a control")]
    TargetIsControl(RegisterId),
    #[error("register {register} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        register: RegisterId,
        expected: usize,
        found: usize,
    },
    #[error("matrix shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("matrix is not an isometry (deviation {0:.3e})")]
    NotIsometry(f64),
    #[error("eavesdropper register is already attached")]
    EveAlreadyAttached,
    #[error("outcome {outcome} on register {register} has zero probability")]
    ZeroProbabilityBranch { register: RegisterId, outcome: u32 },
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("partial trace needs at least one kept register")]
    EmptyKeep,
    #[error("{branches} branches exceed the enumeration cap of {cap}")]
    EnumerationCapExceeded { branches: u128, cap: u128 },
    #[error("transcript is missing outcome C{0}")]
    MissingOutcome(u8),
    #[error("{0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
