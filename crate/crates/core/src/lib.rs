//! Gradient-descent training of shallow and deep networks on a continuous
//! L2 loss, with the spectral machinery needed to audit the convergence
//! theory behind it: Sobolev norms in the NTK eigenbasis, discretized
//! integral operators, Grönwall-type sequence bounds and width sweeps.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`] and [`spectral1d`]: grids, bases, fractional norms.
//! * [`operator`]: kernel integral operators, operator norms, eigenpairs,
//!   coercivity and Hölder-norm estimates.
//! * [`shallow`] and [`deep`]: the two network families and their NTKs.
//! * [`abstract_gd`]: network-agnostic bookkeeping (traces, thresholds,
//!   decay fits, the sequence lemma).
//! * [`harness`]: configuration, experiment orchestration and output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstract_gd;
pub mod activation;
pub mod deep;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod operator;
pub mod quadrature;
pub mod rng;
pub mod shallow;
pub mod spectral1d;

pub use activation::Activation;
pub use error::{Error, Result};
pub use quadrature::{Domain, QuadratureGrid};
pub use spectral1d::SpectralCoeffs;
