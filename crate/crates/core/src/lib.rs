//! Adaptive optimization for binary-weight models.
//!
//! The crate is split along the lines of the experiment pipeline:
//!
//! * [`numerics`]: finite dense vectors, diagonal matrices and box projection.
//! * [`binarize`]: sign quantization, scale factors, the straight-through
//!   estimator and the quantization-error diagnostic Γ.
//! * [`optim`]: BAMSProd and the baseline steppers (SGD(M), Adam, AMSGrad,
//!   AdaBound/AMSBound, Bop) together with their schedules and the regret
//!   bound evaluator.
//! * [`ocoharness`]: online test problems, regret accounting and the
//!   canned experiments built on them.
//! * [`models`]: tiny manual-backprop binary networks and a trainer.

pub mod binarize;
pub mod error;
pub mod models;
pub mod numerics;
pub mod ocoharness;
pub mod optim;

pub use error::{Error, Result};
pub use numerics::{DiagMatrix, FeasibleBox, Vector};
