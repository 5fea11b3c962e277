//! Geometry-aware learning on symmetric positive-definite covariance matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`spd`]: dense SPD linear algebra and affine-invariant geometry.
//! * [`autodiff`]: a matrix-level reverse-mode tape, Adam, and a finite-difference checker.
//! * [`data`]: covariance estimation, dataset files, LOSO splits and a synthetic generator.
//! * [`align`]: RA, RPA and the learned DCR / RiFU pre-aligners.
//! * [`classify`]: MDM, TSLR, TSA-LDA, CSP-LDA, SPD-DCNet and RiFUNet.
//! * [`harness`]: leave-one-subject-out runs, reports and result tables.

pub mod align;
pub mod autodiff;
pub mod classify;
mod container;
pub mod data;
pub mod error;
pub mod harness;
pub mod nets;
pub mod sampling;
pub mod spd;

pub use error::{Error, Result};
