//! Numerical toolkit for combinatorial modulus and conformal dimension.
//!
//! The crate is organised around a handful of independent pieces:
//!
//! - [`metric`]: finite metric spaces, marked set collections and the
//!   relative distance between subsets.
//! - [`holder`]: the layered construction of Hölder functions that are
//!   constant on every set of a well-separated collection, injective across
//!   sets and separating two marked points, together with an exhaustive
//!   certificate.
//! - [`approx`]: κ-approximation graphs of the unit square and of the square
//!   Sierpinski carpet, plus a JSON loader for user supplied graphs.
//! - [`modulus`]: combinatorial p-modulus of curve families on approximation
//!   graphs (constraint generation + dual coordinate ascent) and an
//!   independent brute-force oracle.
//! - [`confdim`]: conformal dimension estimates from the decay of modulus
//!   across levels.
//! - [`closed_forms`] and [`coxeter`]: closed-form critical exponents and
//!   upper bounds for polygonal complexes and Coxeter groups.
//! - [`cocycle`]: shells of the regular elementary polygonal complexes, the
//!   ideal-angle assignment and the ℓp energy of the induced cocycles.

pub mod approx;
pub mod closed_forms;
pub mod cocycle;
pub mod confdim;
pub mod coxeter;
pub mod fit;
pub mod holder;
pub mod metric;
pub mod modulus;

/// Crate version, embedded in serialized payloads.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
