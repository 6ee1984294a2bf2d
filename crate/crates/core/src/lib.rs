//! Optimal subsampling for large-sample linear ridge regression.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: datasets, standardization, train/test splits and CSV I/O.
//! - [`ridge`]: full-sample and weighted subsample ridge solvers.
//! - [`leverage`]: exact ridge leverage scores and row norms.
//! - [`sampling`]: subsampling probabilities, multinomial draws, IBOSS, and
//!   the by-name [`sampling::StrategyRegistry`].
//! - [`tuning`]: K-fold CV, the leave-one-out shortcut and GCV.
//! - [`theory`]: asymptotic variance/bias quantities of the subsample estimator.
//! - [`simgen`]: the six synthetic designs used by the benchmark.
//! - [`experiment`]: replicated benchmark runs and report emission.

pub mod data;
pub mod error;
pub mod experiment;
pub mod leverage;
pub mod ridge;
pub mod rng;
pub mod sampling;
pub mod simgen;
pub mod theory;
pub mod tuning;

pub use data::{Dataset, Split, StandardizationStats};
pub use error::{Error, Result};
pub use leverage::LeverageProfile;
pub use ridge::RidgeFit;
pub use sampling::{SamplingPlan, Strategy, StrategyRegistry, Subsample, SubsamplingStrategy};
pub use tuning::{LambdaGrid, TuningMethod, TuningResult};
