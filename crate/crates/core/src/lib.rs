//! Dimensional-analysis-guided Gaussian-process surrogates.
//!
//! Buckingham Π transforms of physical systems, FANOVA-driven choice of
//! basis quantities, GaSP training and prediction, Latin hypercube designs,
//! and a harness comparing strategies on closed-form testbeds.

pub mod buckingham;
pub mod dataset;
pub mod design;
pub mod dimension;
pub mod fanova;
pub mod gasp;
pub mod harness;
pub mod testbeds;
