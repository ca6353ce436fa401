//! Deformed Wigner matrices `W = M/√n + D` with a finitely-atomic external
//! source `D`.
//!
//! The crate has two halves. The deterministic half solves the
//! self-consistent equation for the limiting Stieltjes transform and derives
//! the density, its support, quantiles and bulk index sets
//! ([`stieltjes`], with closed-form cross-checks in [`bk`]). The random half
//! samples the ensembles ([`ensemble`]) and measures local spectral
//! statistics against the limits ([`spectral_stats`]). [`experiment`] ties
//! them together into reproducible runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bk;
pub mod compensated;
pub mod ensemble;
pub mod experiment;
pub mod measure;
pub mod poly;
pub mod rng;
pub mod spectral_stats;
pub mod stieltjes;

pub use measure::{AtomicMeasure, DiagonalRealization, EntryDistribution, EntryKind};
pub use stieltjes::{DensityProfile, StieltjesSolution, SupportProfile};
