//! Causal hybrid modeling with double machine learning.

pub mod dataset;
pub mod learners;
pub mod seed;
pub mod synthgen;
pub mod dml;
pub mod metrics;
pub mod gdhm;
pub mod lightcurve;
pub mod experiments;
