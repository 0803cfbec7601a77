use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("problem size {what} = {size} exceeds cap {cap}")]
    SizeLimit {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error(
        "reduced Hessian is not convex: lambda_min(Cuv + Cuv^T) = {lambda_min:.6e}, r = {r:.6e} \
         (need r >= {required:.6e})"
    )]
    NotConvex {
        lambda_min: f64,
        r: f64,
        required: f64,
    },

    #[error("equality constraint matrix is rank deficient: rank {rank} < {rows}")]
    RankDeficient { rank: usize, rows: usize },

    #[error(
        "contraction certificate failed: spectral radius {spectral_radius:.12} \
         (eta block {eta_rate:.12}, multiplier block {multiplier_rate:.12}), \
         ||T M T^-1|| = {tmt_norm:.6e}, tau = {tau:.6e}"
    )]
    Certification {
        spectral_radius: f64,
        eta_rate: f64,
        multiplier_rate: f64,
        tmt_norm: f64,
        tau: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("QP solve failed at control step {step}: {status:?} after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    QpFailed {
        step: usize,
        status: crate::qp::QpStatus,
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("fixed-point iteration did not converge at control step {step}: last change {change:.3e} after {iterations} iterations")]
    NotConverged {
        step: usize,
        iterations: usize,
        change: f64,
    },

    #[error("comparison error: {0}")]
    Comparison(String),
}
