//! Tensor-decomposition based matrix factor models.
//!
//! A matrix time series `X_t` (`p1 × p2`, `t = 1..T`) is modelled as
//!
//! ```text
//! X_t = R Z_t Cᵀ + R E_tᵀ + F_t Cᵀ + noise
//! ```
//!
//! with a row loading `R`, a column loading `C`, a core factor `Z_t` and
//! mode-specific factors `E_t`, `F_t`. The crate estimates the loadings by
//! projected PCA on the two second moments ([`estimator`]), recovers the
//! factors and the three-term signal in closed form, selects ranks by an
//! eigenvalue ratio, and ships the bilinear baseline ([`baseline`]), a
//! simulator for the four benchmark scenarios ([`simulate`]) and evaluation
//! measures ([`metrics`]). The `tedfam` binary wraps all of it ([`cli`]).
//!
//! ```
//! use tedfam::{estimator, simulate::{generate_scenario, Scenario, ScenarioConfig}};
//!
//! let data = generate_scenario(&ScenarioConfig::new(Scenario::I, 50, 20, 20, 7)).unwrap();
//! let fit = estimator::fit(&data.observations, 3, 3).unwrap();
//! let d = tedfam::metrics::space_distance(fit.loadings.r.view(), data.truth_r.view()).unwrap();
//! assert!(d < 0.5);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use types::{FactorScores, LoadingPair, MatrixSeries, MomentPair};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/baseline.md")]
    mod baseline {}
    #[doc = include_str!("../../../book/src/rank.md")]
    mod rank {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
