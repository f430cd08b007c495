use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown environment kind `{0}`")]
    UnknownKind(String),
    #[error("window of length {len} is too small: {reason}")]
    WindowTooSmall { len: f64, reason: String },
    #[error("coordinate {x} lies outside the window [{lo}, {hi}]")]
    OutOfWindow { x: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("branch inverse requested for negative level {0}")]
    NegativeLevel(f64),
    #[error("level {lambda} is below the corrector threshold {min}")]
    LevelBelowThreshold { lambda: f64, min: f64 },
    #[error("corrector left its bracket [{lo}, {hi}] at x = {x} with value {f}")]
    BracketExit { x: f64, f: f64, lo: f64, hi: f64 },
    #[error("shots from different initial values differ by {diff}, above the certified {bound}")]
    CertificateViolated { diff: f64, bound: f64 },
    #[error("non-finite value at x = {x}")]
    NonFinite { x: f64 },
    #[error("hill is too short: scaled length {have} but {need} is required")]
    HillTooShort { have: f64, need: f64 },
    #[error("no low-slope point found: {0}")]
    NoLowSlopePoint(String),
    #[error("bridge violates its slope or level constraints at x = {x}: {detail}")]
    BridgeConstraint { x: f64, detail: String },
    #[error("slope {theta} lies inside the flat interval ({lo}, {hi})")]
    InsideFlatPiece { theta: f64, lo: f64, hi: f64 },
    #[error("confidence half-width {ci} exceeds the allowed {max}")]
    CiTooLarge { ci: f64, max: f64 },
    #[error("no upper level found with theta above {0}")]
    NoUpperLevel(f64),
    #[error("CFL number {cfl} exceeds {max}")]
    CflViolated { cfl: f64, max: f64 },
    #[error("scheme became unstable at t = {t}")]
    Unstable { t: f64 },
    #[error("growth condition fails: {0}")]
    GrowthViolated(String),
    #[error("slope {theta} is outside the tabulated effective Hamiltonian range [{lo}, {hi}]")]
    OutsideTable { theta: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
