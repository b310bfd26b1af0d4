//! Simulation and evaluation of angular estimation from analog beam sweeps.
//!
//! A monostatic TX/RX pair of uniform linear arrays is swept over a set of
//! beam directions in normalized angular frequency (NAF). Each beam yields a
//! range profile from OFDM channel state; the crate reconstructs the dense
//! angular response from the minimal set of beams (Dirichlet-kernel and
//! cubic-spline interpolation, or sparse recovery with orthogonal matching
//! pursuit), detects targets with CA-CFAR and resolution-gated peak search,
//! and scores each method by NAF RMSE against a median-of-frames ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod config;
pub mod detection;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ofdm;
pub mod omp;
pub mod ramp;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::NafAngle;
