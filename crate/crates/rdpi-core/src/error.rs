use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

/// Errors produced by the synthesis and simulation pipeline.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid reaction profile: {0}")]
    InvalidProfile(String),

    #[error("invalid mode request: {0}")]
    InvalidModeRequest(String),

    #[error(
        "function samples do not live on the basis mesh (expected {expected} points, got {got})"
    )]
    MeshMismatch { expected: usize, got: usize },

    #[error("computed spectrum is not strictly decreasing near mode {index}")]
    EigenvalueOrder { index: usize },

    #[error("basis holds no strictly negative eigenvalue; extend the mode count")]
    BasisTooShort,

    #[error("tail tolerance {requested:e} unachievable: remainder bound {achievable:e} with {modes} computed modes and no closed-form extension")]
    TailUnachievable {
        requested: f64,
        achievable: f64,
        modes: usize,
    },

    #[error("pair (A, B) fails the Kalman controllability condition")]
    Uncontrollable,

    #[error("controllability matrix condition number {cond:.3e} exceeds {limit:.1e}; rescale the requested poles")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("matrix is not Hurwitz (eigenvalue with real part {real_part:.6e})")]
    NotHurwitz { real_part: f64 },

    #[error("expected {expected} closed-loop poles, got {got}")]
    PoleCount { expected: usize, got: usize },

    #[error("requested poles must be strictly negative (got {0})")]
    UnstablePole(f64),

    #[error("Lyapunov solve residual {residual:.3e} above tolerance")]
    LyapunovResidual { residual: f64 },

    #[error("pole placement verification failed: worst eigenvalue mismatch {worst:.3e}")]
    PlacementVerification { worst: f64 },

    #[error("step {dt} does not divide the delay {delay} exactly")]
    DelayStepMismatch { dt: f64, delay: f64 },

    #[error("history buffer misaligned: {0}")]
    BufferMisaligned(String),

    #[error("inconsistent scenario: {0}")]
    ScenarioInconsistent(String),

    #[error("state blow-up at t = {t:.3}: |w|_inf = {norm:.3e}; aborting")]
    Instability {
        t: f64,
        norm: f64,
        partial: Box<crate::sim::SimOutput>,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
