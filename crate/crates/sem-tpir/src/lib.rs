//! Semantic T-private information retrieval over prime fields.
//!
//! Messages of different lengths and non-uniform retrieval priors are stored
//! replicated on `N` servers; a user retrieves message `theta` while any
//! coalition of up to `T` servers learns nothing about `theta`. The crate
//! covers the whole pipeline:
//!
//! * [`gf`] — prime-field arithmetic and exact linear algebra,
//! * [`mds`] — deterministic systematic Cauchy MDS generators,
//! * [`params`] — exact-rational capacity planning and sub-packetization,
//! * [`scheme`] — query synthesis (combination ledger, code allocation,
//!   scrambled coefficient rows) and the decoding script,
//! * [`runtime`] — simulated servers, sessions and transcripts,
//! * [`decode`] — script-driven exact recovery,
//! * [`audit`] — structural, counting and statistical privacy checks.
//!
//! All planning arithmetic is exact ([`Rat`]); protocol data lives in a
//! prime field with a configurable word-sized modulus.

pub mod audit;
pub mod decode;
pub mod document;
pub mod gf;
pub mod mds;
pub mod params;
pub mod runtime;
pub mod scheme;

use thiserror::Error as ThisError;

/// Exact scalar used throughout planning: arbitrary-precision rationals.
pub type Rat = num::BigRational;

/// Arbitrary-precision integer re-export used alongside [`Rat`].
pub type Int = num::BigInt;

/// Crate-wide error type. The CLI maps variants onto its exit-code contract.
#[derive(Debug, ThisError)]
pub enum Error {
    /// Problem specification rejected before any planning ran.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Sub-packetization produced non-integral counts; scaling all lengths
    /// by `lift` yields the nearest feasible specification.
    #[error("infeasible plan: M entries at indices {entries:?} are not integers; smallest feasible lift factor is {lift}")]
    Infeasible { entries: Vec<usize>, lift: u64 },

    /// The field modulus cannot host a required MDS codeword length.
    #[error("field modulus {modulus} too small: need p >= {required}")]
    FieldTooSmall { modulus: u64, required: u64 },

    /// A hand-built or corrupted plan violates a ledger invariant.
    #[error("plan corruption: {0}")]
    PlanCorruption(String),

    /// Field division by zero (explicit error, never a sentinel value).
    #[error("division by zero in GF(p)")]
    DivisionByZero,

    /// A square system was rank-deficient.
    #[error("singular matrix: rank {rank} < {dim}")]
    Singular { rank: usize, dim: usize },

    /// Matrix/vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Codeword completion was given fewer coordinates than the dimension.
    #[error("insufficient data: {have} known coordinates, need {need}")]
    InsufficientData { have: usize, need: usize },

    /// Redundant data contradicted itself (corrupted answers or codewords).
    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    /// A decoded message did not match the stored message exactly.
    #[error("decode mismatch: {0}")]
    DecodeMismatch(String),

    /// The statistical audit was asked to run with too few samples.
    #[error("too few samples: {have} < required {need}")]
    TooFewSamples { have: usize, need: usize },

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Derives an independent 64-bit seed from a base seed and a role/index salt.
///
/// Deterministic and platform-independent; used to give the message store,
/// each iteration's scramblers, and each audit trial disjoint RNG streams.
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
