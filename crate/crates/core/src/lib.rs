//! Numerical laboratory for weighted Riesz potential theory on compact sets
//! `K ⊂ R^d` (`d ≥ 3`).
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. Everything
//! here is a pure function of its inputs plus an explicit seed; the `std`
//! companion crate owns files, configs and the command line.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | compact sets, meshes, projection, covering radius, box-counting dimension |
//! | [`kernel`], [`measure`], [`field`] | Riesz kernel, discrete measures, external fields and their expression grammar |
//! | [`energy`], [`equilibrium`] | potentials, energies, the weighted equilibrium solver, Frostman checks, inverse problem |
//! | [`fekete`] | discrete energy `L_n`, Fekete optimization, transfinite-diameter sequences |
//! | [`bernstein`] | the class `P_n^Q`, Bernstein ratio and Bernstein–Markov constant probes, mass density |
//! | [`gibbs`] | the Gibbs ensemble: MCMC, partition functions, one-point correlations, rare events |
//! | [`ldp`] | empirical measures, sliced transport distance, `J` functionals, rate function scans |
//!
//! Enable the `parallel` feature to run independent restarts, trials and
//! chains on a rayon pool. Results do not depend on the number of workers.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bernstein;
pub mod energy;
pub mod equilibrium;
mod error;
pub mod fekete;
pub mod field;
pub mod geometry;
pub mod gibbs;
pub mod kernel;
pub mod ldp;
pub mod math;
pub mod measure;
pub mod par;
pub mod points;
pub mod rng;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use energy::DiagonalPolicy;
pub use error::{Error, Result};
pub use field::ExternalField;
pub use geometry::{CompactSet, Mesh};
pub use kernel::RieszKernel;
pub use measure::DiscreteMeasure;
pub use points::Points;
