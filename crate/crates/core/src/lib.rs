//! Sparse identification of nonlinear dynamics by exact best-subset regression,
//! and model predictive control driven by the identified models.
//!
//! The crate is organised by role:
//!
//! * [`basis`] builds and evaluates dictionaries of candidate terms.
//! * [`sysid`] selects supports (enumeration or branch-and-bound) and refits coefficients.
//! * [`plants`] holds the data generators: Lorenz, the regenerative turning process,
//!   excitation signals and noise.
//! * [`control`] implements the receding-horizon controller and cutting-parameter selection.
//! * [`analysis`] provides metrics and stability lobes.
//!
//! Physical quantities are SI throughout; conversion to mm / rps happens at the edges.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod control;
pub mod error;
pub mod linalg;
pub mod plants;
pub mod sysid;

pub use error::{Error, Result};
