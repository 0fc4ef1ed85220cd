//! First-principles simulator of a four-stroke quantum Otto engine whose
//! working medium is a pair of coupled spins, with dephasing injected on the
//! adiabats to suppress quantum friction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cli;
pub mod cycle;
pub mod dynamics;
pub mod error;
pub mod noise;
pub mod optimize;
pub mod thermo;

pub use error::{Error, Result};
