//! Multipartite Bell correlations from random measurement triads, with
//! device-independent certification of nonlocality and entanglement depth.
//!
//! The crate is organized around a simulation-and-certification pipeline:
//!
//! * [`qstate`] samples Haar-random local measurement triads (three mutually
//!   unbiased bases per party) and produces the exact behavior of a noisy
//!   multi-qubit GHZ state measured in them.
//! * [`behavior`] holds the scenario/behavior types, correlator coordinates,
//!   relabelings, and setting selections shared by every certifier.
//! * [`ineq`] evaluates correlator Bell expressions (MABK, the 46-class
//!   tripartite facet catalog, and two n-partite families) and maximizes them
//!   over the relabeling orbit, yielding witness visibilities and certified
//!   entanglement depth.
//! * [`lp`] decides local-polytope membership exactly with a dense-column
//!   simplex over the deterministic vertices.
//! * [`sdp`] builds level-1 moment-matrix outer relaxations of the
//!   k-producible quantum sets (one PSD moment matrix per maximal partition,
//!   with partial-transpose cuts) and solves them with the first-order conic
//!   solver in [`conic`].
//! * [`campaign`] runs reproducible Monte Carlo campaigns over all of the
//!   above and aggregates violation probabilities and visibility statistics.

// Index loops over bit-coded tables and 2x2 matrices read better than the
// iterator forms clippy suggests.
#![allow(clippy::needless_range_loop)]

pub mod behavior;
pub mod campaign;
pub mod conic;
pub mod ineq;
pub mod lp;
pub mod qstate;
pub mod sdp;

pub use behavior::{Behavior, Relabeling, Scenario, Selection};
