//! Norms, cover classes and closed-form robustness levels.

pub(crate) mod cover;
mod norm;
pub mod oracle;

pub use cover::{
    approx_robustness, contains, volume_penalty, BallShape, CoverClass, CoverParams, Regularizer, RegularizerKind,
    MEMBERSHIP_TOL,
};
pub use norm::{dual_norm, fit_pca_qnorm, principal_axes, NormSpec, QNorm, Q_EIGEN_TOL};
pub use oracle::approx_robustness_oracle;
