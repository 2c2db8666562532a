//! Cash-collection forecasting from invoice ledgers and support series.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod calendar;
pub mod closure;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod forecaster;
pub mod invoice;
pub mod lags;
pub mod linalg;
pub mod io;
pub mod money;
pub mod pipeline;
pub mod profiles;
pub mod series;
pub mod synthgen;
pub mod tune;
pub mod windows;

pub use error::{Error, ErrorKind, Result};
