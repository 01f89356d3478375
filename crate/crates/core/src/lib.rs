//! Tick-data toolkit for directional-change trading research.
//!
//! * [`ingest`]: tick CSV parsing, mid-prices, calendar-month sliding windows
//! * [`dc`]: asymmetric directional-change decomposition and the R_DC indicator
//! * [`hmm`]: two-state Gaussian HMM (Baum-Welch, Viterbi, regime labels)
//! * [`bayes_opt`]: GP/expected-improvement search over `(theta, alpha)`
//! * [`strategy`]: the regime-gated DC trading machine and its baselines
//! * [`metrics`] and [`report`]: CRR, MDD, Friedman ranks and report tables
//! * [`pipeline`]: the sliding-window backtest that wires all of the above
//!
//! The numeric cores of [`dc`], [`hmm`] and [`metrics`] are generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix them to `f64`, which is
//! what the rest of the crate uses.

pub mod bayes_opt;
pub mod dc;
pub mod error;
pub mod hmm;
pub mod ingest;
pub mod metrics;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod pipeline;
pub mod report;
mod scalar;
pub mod strategy;
pub mod synthetic;

pub use error::{Error, Result};
pub use ingest::{PriceSeries, Tick, Timestamp, WindowSplit};
pub use scalar::Scalar;

pub type DcConfig = dc::DcConfig<f64>;
pub type Extreme = dc::Extreme<f64>;
pub type DcEventRecord = dc::DcEventRecord<f64>;
pub type DcSummary = dc::DcSummary<f64>;
pub type RdcPoint = dc::RdcPoint<f64>;
pub type RdcSeries = dc::RdcSeries<f64>;
pub type GaussianHmm = hmm::GaussianHmm<f64>;
pub type FitResult = hmm::FitResult<f64>;
pub type FriedmanResult = metrics::FriedmanResult<f64>;
