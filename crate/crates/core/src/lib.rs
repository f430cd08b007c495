//! Numerical lab for homogenization of one-dimensional viscous Hamilton-Jacobi
//! equations `u_t = a(x) u_xx + G(u_x) + beta V(x)` with quasiconvex `G`.
//!
//! * [`environment`]: stationary random coefficients and hill detection.
//! * [`hamiltonian`]: quasiconvex nonlinearities, branch inverses and moduli.
//! * [`corrector`]: shooting for corrector derivatives, ergodic averages and glued profiles.
//! * [`effective`]: inversion of the averaged corrector map into the effective Hamiltonian.
//! * [`pde`]: a monotone finite-difference scheme and homogenization sweeps.

pub mod corrector;
pub mod effective;
pub mod environment;
pub mod error;
pub mod hamiltonian;
pub mod pde;
pub mod quad;
pub mod stats;

pub use corrector::{
    BurnIn, CorrectorProfile, GlueConfig, GlueOrder, GluedProfile, LowSlopePoints, Problem,
    ThetaEstimate,
};
pub use effective::{
    build_effective_h, invert_theta, EffectiveH, EffectiveRow, Inversion, InvertConfig, Piece,
    ThetaConfig,
};
pub use environment::{
    eval_generator, find_hill_doubling, generate_env, EnvKind, EnvParams, EnvRealization, EnvSpec,
    HillSearch, HillWitness,
};
pub use error::{Error, Result};
pub use pde::{
    evolve, godunov_flux, homogenize_sweep, residual_probe, Boundary, Evolution, ProbeKind,
    ProbeReport, ProbeTarget, SchemeConfig, SweepConfig, SweepResult, SweepRow,
};
pub use hamiltonian::{
    Branch, Family, GrowthCertificate, GrowthReport, Modulus, QuasiconvexG, Table,
};
