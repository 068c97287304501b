//! Data-driven calibration of linear smoothers through minimal penalties.
//!
//! The noise level is read off the dimensionality jump of the
//! minimal-penalty path `C -> df(argmin ||F_λ - Y||² + C (2 tr A_λ - tr A_λᵀA_λ))`
//! and plugged into Mallows' C_L to pick a member of a smoother family
//! (kernel ridge path, nested projections, or a multiple-kernel grid).

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod criteria;
pub mod error;
pub mod io;
pub mod kernels;
pub mod mkl;
pub mod quadrature;
pub mod simulation;
pub mod smoothers;

pub use error::{Error, Result};

pub use faer;
