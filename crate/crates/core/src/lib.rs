//! Core library for simulating two competing first-passage-percolation
//! processes on finite windows of the d-dimensional integer lattice, together
//! with the multi-scale box classification machinery used to analyse finished
//! realizations.
//!
//! The crate is organized around five subsystems:
//!
//! - [`lattice`]: windows, sites, edges and the hierarchy of cores, boxes and
//!   inner parts at every scale.
//! - [`randomness`]: counter-based, order-independent generation of the seed
//!   field and both passage-time families from a single world seed, plus a
//!   deterministic override mode for hand-crafted fixtures.
//! - [`engine`]: the exact discrete-event simulation of the growth dynamics,
//!   with a slow reference engine used as a correctness oracle.
//! - [`percolation`]: static analysis of seed fields: component labeling,
//!   chemical distances, constrained passage times, filled seeds and Monte
//!   Carlo estimators.
//! - [`multiscale`]: good/bad box classification at all scales, feedback
//!   labels, parent/progenitor tracing, cluster geometry and empirical
//!   verification of the fundamental timing properties.

pub mod engine;
pub mod lattice;
pub mod multiscale;
pub mod percolation;
pub mod randomness;
pub mod snapshot;
