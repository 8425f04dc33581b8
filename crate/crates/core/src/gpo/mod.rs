//! Generalized preference losses with short-to-long reward alignment.
//!
//! All functions are pure; gradients are taken with respect to the supplied
//! sequence log-probabilities so any differentiable scorer can chain them.

pub mod check;
pub mod link;
pub mod loss;
pub mod method;

pub use link::{eval_bound, eval_link, BoundFn, ConvexLink};
pub use loss::{evaluate, grad_solopo, po_loss, solo_ra_term, solopo_loss, LogProbBundle, LogProbGrad, LossBreakdown};
pub use method::{reward, Method, MethodConfig, RaMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpoError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("ORPO odds are singular at a per-token probability of 1")]
    OddsSingularity,
    #[error("{0} requires reference log-probabilities")]
    MissingReference(&'static str),
    #[error("{0} does not take reference log-probabilities")]
    UnexpectedReference(&'static str),
    #[error("response length must be at least 1")]
    ZeroLength,
    #[error("invalid method config: {0}")]
    InvalidConfig(&'static str),
}
