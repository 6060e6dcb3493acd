//! Billiards in convex polytopes with contracting reflection laws.
//!
//! The crate is organised bottom-up:
//!
//! * [`geomkit`] — projections, reflections and angles between subspaces;
//! * [`polytope`] — H-representation polytopes, genericity checks, the
//!   simplex family `Δ^d_h` and vertex cones;
//! * [`billiard`] — reflection laws, the billiard map and the slap map;
//! * [`cocycle`] — the derivative cocycle in Jacobi coordinates, stable
//!   bundles, Lyapunov spectra and collinearities;
//! * [`hyperbolicity`] — escaping times, cone certificates and verdicts.

pub mod billiard;
pub mod cocycle;
pub mod error;
pub mod geomkit;
pub mod hyperbolicity;
pub mod io;
pub mod polytope;
pub mod sampling;

pub use error::{Error, Result};
