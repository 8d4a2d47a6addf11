//! Copula-based Gaussian-kernel dependence measure and distribution-free
//! multi-scale tests of mutual independence.
//!
//! Pipeline: [`ranks::normalized_ranks`] turns raw data into coordinate-wise
//! ranks, [`bandwidth::build_ladder`] picks data-independent bandwidths,
//! [`nulldist::build_null_table`] calibrates by random rank permutations and
//! [`multiscale::aggregate`] produces the `T_Max`, `T_Sum` and FDR decisions.

pub mod bandwidth;
pub mod cli;
pub mod csv_io;
pub mod datagen;
pub mod error;
pub mod kernel;
pub mod multiscale;
pub mod nulldist;
pub mod powerlab;
pub mod quadrature;
pub mod ranks;
pub mod rng;

pub use error::{Error, Result};
