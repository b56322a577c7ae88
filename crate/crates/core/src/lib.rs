//! Stochastic polynomial chaos emulators and active learning for
//! reliability analysis of stochastic simulators.
//!
//! The crate is `no_std` (with `alloc`). File formats and the command line
//! live in the `alspce` crate.

#![no_std]

extern crate alloc;

pub mod active;
pub mod basis;
pub mod design;
pub mod distributions;
pub mod error;
pub mod kmedoids;
pub mod quadrature;
pub mod reliability;
pub mod special;
pub mod testbeds;
pub mod spce;
pub mod uncertainty;

pub use basis::{build_index_set, Basis, LatentFamily, MultiIndexSet, PolyFamily};
pub use distributions::{InputModel, Marginal};
pub use error::{Error, Result, SimError};
pub use spce::{fit_mle, SpceModel, TrainConfig};
