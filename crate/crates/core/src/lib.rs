//! Data-driven robustness certification for black-box vector functions.
//!
//! Given a function `f` (typically a feed-forward network), a random input
//! distribution and a polyhedral safe set `{y : Ay + b >= 0}`, the crate draws
//! `N` output samples, solves a scenario program over a family of candidate
//! covers, and returns a cover `h(θ*)` together with the approximate robustness
//! level `r̂(θ*)`. With probability at least `1 - δ` over the samples, `h(θ*)`
//! contains the random output with probability at least `1 - ε` and `r̂(θ*)`
//! lower-bounds the `ε`-quantile of the output safety level.
//!
//! Module map:
//!
//! * [`model`]: networks and the [`model::BlackBox`] abstraction.
//! * [`distributions`]: seeded input distributions.
//! * [`safeset`]: safe sets and safety levels.
//! * [`geometry`]: norms, cover classes, closed-form robustness levels.
//! * [`scenario`]: sample-size bound and the scenario solvers.
//! * [`assess`]: the end-to-end pipeline and report format.
//! * [`validate`]: independent Monte Carlo checks of a report.
//! * [`experiments`]: canned instances used by tests and the CLI.

pub mod assess;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod safeset;
pub mod scenario;
pub mod validate;

pub use assess::{assess, sweep_lambda, AssessmentConfig, AssessmentReport, Settings, Verdict};
pub use distributions::InputDistribution;
pub use error::{Error, Result};
pub use geometry::{CoverClass, CoverParams, NormSpec, Regularizer};
pub use model::{BlackBox, NetworkModel};
pub use safeset::{SafeSet, SafetyRow};
pub use scenario::{sample_size, ScenarioProblem, ScenarioSolution, SolverOptions};
