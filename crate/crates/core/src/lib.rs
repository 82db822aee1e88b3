//! Ranking missing-value imputations without the complete data.
//!
//! The central entry points are [`escore::energy_i_score`], which scores an
//! imputation method by masking observed values and comparing the method's
//! own multiple imputations to them with the energy score, and
//! [`star::energy_i_score_star`], a variant that conditions on every
//! observed variable of each missingness pattern.

pub mod bench;
pub mod data;
pub mod energy;
pub mod error;
pub mod escore;
pub mod impute;
pub mod rng;
pub mod star;
pub mod synth;

pub use error::{Error, Result};
