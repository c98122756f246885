//! Black-box flag autotuning.
//!
//! The pipeline has three phases: characterize the target with batch-mode
//! expected-model-change active learning ([`active`]), keep the flags that
//! matter with lasso regression ([`featsel`]), then search their values with
//! Gaussian-process Bayesian optimization or simulated annealing
//! ([`tuners`]).
//!
//! The numerical modules ([`linreg`], [`featsel`], [`surrogate`]) are generic
//! over the scalar type through [`Real`]; the aliases below fix them to
//! `f64` (and `f32` where that is useful) for the rest of the crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod error;
pub mod executor;
pub mod featsel;
pub mod flagspace;
pub mod linalg;
pub mod linreg;
pub mod rng;
pub mod scalar;
pub mod surrogate;
pub mod tuners;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type LinearModel = linreg::LinearModel<f64>;
pub type LinearModel32 = linreg::LinearModel<f32>;
pub type ModelEnsemble = linreg::ModelEnsemble<f64>;
pub type SgdParams = linreg::SgdParams<f64>;
pub type LassoFit = featsel::LassoFit<f64>;
pub type LassoFit32 = featsel::LassoFit<f32>;
pub type GpSurrogate = surrogate::GpSurrogate<f64>;
pub type GpSurrogate32 = surrogate::GpSurrogate<f32>;
