use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed continued fraction {text:?}: {reason}")]
    MalformedExpansion { text: String, reason: String },

    #[error("partial quotient at position {position} is zero")]
    ZeroQuotient { position: usize },

    #[error("expansion has no periodic part")]
    MissingPeriod,

    #[error("approximant {index} does not fit in 128 bits (needs about {bits_required} bits)")]
    Overflow { index: usize, bits_required: u32 },

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("substitution images must be nonempty")]
    EmptyImage,

    #[error("substitution is not prolongable on either letter")]
    NotProlongable,

    #[error("matrix is not in the invertible substitution monoid: {0}")]
    NotInMonoid(String),

    #[error("matrix is not unimodular (det = {det})")]
    NotUnimodular { det: f64 },

    #[error("empty word")]
    EmptyWord,

    #[error("factor length {n} too large for a word of length {len} (need at least {required})")]
    WordTooShort { n: usize, len: usize, required: usize },

    #[error("level {level} too large: q_k = {q} exceeds {max}")]
    LevelTooLarge { level: usize, q: u128, max: u128 },

    #[error("band count check failed at level {level}: expected {expected}, found {found}")]
    BandCount { level: usize, expected: usize, found: usize },

    #[error("need at least {needed} bands, got {got}")]
    TooFewBands { needed: usize, got: usize },

    #[error("degenerate scale range: {0}")]
    DegenerateScales(String),

    #[error("only {got} of {wanted} samples had nonzero increments")]
    Sampling { wanted: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
