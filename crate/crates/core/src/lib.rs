//! Discovery of differential-algebraic equation systems from sampled trajectories.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algfinder;
pub mod benchgen;
pub mod dynfinder;
pub mod pipeline;
pub mod scalar;
pub mod sparsereg;
pub mod termlib;
pub mod timeseries;

pub use scalar::Real;

pub type Table = timeseries::TimeSeriesTable<f64>;
