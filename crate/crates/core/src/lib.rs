//! Source-free domain adaptation through a Gaussian-mixture virtual domain.
//!
//! A classifier pretrained on a labeled source domain is adapted to an
//! unlabeled target domain without further access to source data. The
//! normalized rows of the classifier act as class prototypes; a Gaussian
//! mixture around them stands in for the source feature distribution, and the
//! target feature extractor is trained adversarially to match it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod rng;
pub mod virtual_domain;

pub use error::{Result, VdaError};
