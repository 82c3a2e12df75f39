//! Critical continuous contact model on the line and the plane.
//!
//! A contact process is a spatial birth-death system: every particle dies at
//! rate `lambda_d` and gives birth at rate `lambda_b`, placing the offspring
//! at a displacement drawn from a dispersal density `a`. In the critical
//! regime (`lambda_b = lambda_d`, `a` normalized) the mean density is
//! conserved, and the long-time behaviour in dimensions 1 and 2 splits by the
//! tail of `a`: heavy-tailed dispersal relaxes to a one-parameter family of
//! stationary states, light-tailed dispersal clusters without limit.
//!
//! The crate provides four independent routes into the same model, built to
//! cross-validate each other:
//!
//! * [`kernel`] — dispersal/jump kernel families, their Fourier transforms,
//!   exact samplers, and condition checks;
//! * [`spectral`] — closed-form Fourier evaluation of stationary and
//!   time-dependent pair correlations and the integrability diagnostic that
//!   decides whether a stationary pair structure exists;
//! * [`hierarchy`] — a discrete-torus solver for the correlation-function
//!   evolution equations at orders 1..3, independent of the spectral path;
//! * [`sim`] / [`estimator`] — an exact event-driven simulator on a periodic
//!   torus plus count-based estimators of the same correlation functions.

pub mod estimator;
pub mod fit;
pub mod geometry;
pub mod hierarchy;
pub mod kernel;
pub mod quad;
pub mod sim;
pub mod spectral;

pub use kernel::{DispersalKernel, JumpKernel, KernelFamily, ValidationReport};
pub use spectral::{Domain, IntegrabilityReport, SpectralField};
