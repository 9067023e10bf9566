//! Certified orbit computation and Monte Carlo estimators for recurrence
//! sets of expanding interval maps.
//!
//! The library studies sets of points that return abnormally close to
//! themselves: for a map T, a rate function psi and a time n, the slice
//! A_n = { x : d(T^n x, x) < psi(n) }.  Whether a typical orbit falls in
//! infinitely many slices is governed by the convergence of sum psi(n)^delta;
//! the estimators here measure the slices, their pairwise correlations and
//! the hit counts Z_N, and the conditions report verifies the regularity,
//! mixing, distortion, summability and conformality properties the theory
//! needs.
//!
//! Orbits are never iterated in floating point.  A point is coded by its
//! digit expansion (binary/beta digits, continued-fraction digits, or
//! ternary Cantor digits) and T^n is the digit shift; every reconstructed
//! value carries an exact rational (or quadratic-field) enclosure, and hit
//! classification is three-valued so that a verdict is only issued when the
//! enclosure forces it.

pub mod conditions;
pub mod cylinders;
pub mod error;
pub mod exec;
pub mod measures;
pub mod mixing;
pub mod precision;
pub mod recurrence;
pub mod scalar;
pub mod systems;

pub use error::{BuildError, OrbitError, RunError, SampleError};
pub use scalar::Exact;
pub use systems::{
    build_beta_system, build_cantor_system, build_gauss_system, parse_system, SystemDescriptor,
    SystemKind,
};
