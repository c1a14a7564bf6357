//! Volatility modelling toolkit built around an institutional-response state.
//!
//! The crate layers three variance models on shared plumbing:
//!
//! - baseline EGARCH(1,1) / GJR-GARCH(1,1) by maximum likelihood ([`garch`]),
//! - the institutional response dynamics model, a linear volatility equation
//!   driven by crisis memory and an ARX institutional state ([`irdm`]),
//! - its network extension with correlation and similarity spillovers ([`nirdm`]).
//!
//! Supporting modules construct shocks and the MIDAS institutional index,
//! estimate DCC correlation networks, run the pooled panel interaction model,
//! and compare forecasts with Diebold–Mariano and ENC-NEW statistics.
//! [`simgen`] generates panels with known truth for every estimator.

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod evaluate;
pub mod garch;
pub mod irdm;
pub mod linalg;
pub mod midas;
pub mod networks;
pub mod nirdm;
pub mod optimizer;
pub mod panel;
pub mod shocks;
pub mod simgen;
pub mod stats;
pub mod timeseries;

pub use error::{Error, Result};
pub use timeseries::{DatedSeries, MarketId, ReturnPanel};
