//! Walk-forward evaluation of latent-space predictions of future
//! high-impact research areas.

pub mod backtest;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod month;
pub mod predict;
pub mod scoring;
pub mod spatial;

pub use corpus::{Article, Corpus, Source};
pub use error::{Error, Result};
pub use month::YearMonth;
pub use spatial::MetricKind;
