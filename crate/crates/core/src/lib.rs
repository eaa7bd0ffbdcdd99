//! Desk-scale laboratory for intersections `X ∩ [n]Y` on principally
//! polarized complex tori.
//!
//! The crate is organised bottom-up:
//!
//! * [`torus`] lattice coordinates, the fundamental parallelogram, endomorphisms
//!   and exact torsion points;
//! * [`theta`] Riemann theta functions with characteristics and their gradients;
//! * [`divisor`] translated theta divisors, membership, sampling and tangents;
//! * [`intersection`] the graph-system solver, component classification,
//!   properness scans and covering radii;
//! * [`torsion`] congruence conditions and their exact natural density;
//! * [`segments`] graph segments of `[n]` over the fundamental parallelogram;
//! * [`equidist`] Weyl sums, discrepancy and approximating translates;
//! * [`harness`] scenario files, report writing and run orchestration.
//!
//! With the default `parallel` feature the heavy loops run on rayon; without
//! it every loop runs sequentially and produces identical output.

pub mod divisor;
pub mod equidist;
pub mod harness;
pub mod intersection;
pub mod numeric;
pub(crate) mod par;
pub use par::is_parallel;
pub mod rng;
pub mod segments;
pub mod theta;
pub mod torsion;
pub mod torus;

pub use num_complex::Complex64 as C64;
