use thiserror::Error;

/// Failures raised by the simulation, attack and planning routines.
///
/// Times and magnitudes are carried as `f64` regardless of the scalar type
/// the computation ran in, so the error type stays non-generic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("control bound violated at t = {t}: magnitude {magnitude} exceeds bound {bound}")]
    ControlBound { t: f64, magnitude: f64, bound: f64 },

    #[error("negative wheel speed {nu} at t = {t}")]
    NegativeSpeed { t: f64, nu: f64 },

    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),

    #[error(
        "position passes through the base station at t = {t}; the attack input is unconstrained there and no explicit choice was supplied"
    )]
    SingularPosition { t: f64 },

    #[error("radial acceleration exceeds the input budget at t = {t}; largest feasible tangential magnitude is {max_tangential}")]
    Infeasible { t: f64, max_tangential: f64 },

    #[error("input is secure; no deviating undetectable attack exists")]
    AlreadySecure,

    #[error("could not construct a deviating attack: {0}")]
    NoDeviatingAttack(String),

    #[error("speed compensation singular at t = {t}: |cos(phi)| = {cos_phi}")]
    CompensationSingularity { t: f64, cos_phi: f64 },

    #[error("target unreachable by a secure trajectory: {0}")]
    Unreachable(String),

    #[error("shooting solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
