//! Probabilistic wind and solar forecasting, distribution aggregation and
//! day-ahead bidding.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`dataprep`] turns raw weather and metered generation into feature
//!    tables.
//! 2. [`gbqr`] fits dense quantile models per weather source, and
//!    [`ensemble`] stacks and caps them. Solar forecasts are then corrected
//!    online by [`postproc`].
//! 3. [`aggregate`] convolves the wind and solar distributions into total
//!    generation quantiles, scored with [`metrics`].
//! 4. [`trading`] turns forecasts and spread expectations into bids and
//!    backtests them against settlement.
//!
//! [`harness`] generates synthetic scenarios with known ground truth and
//! provides brute-force oracles. [`cli`] exposes everything as the
//! `hybridcast` command.

pub mod aggregate;
pub mod cli;
pub mod dataprep;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod forecast;
pub mod gbqr;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod postproc;
pub mod trading;

pub use error::{Error, Result};
pub use forecast::QuantileForecast;
