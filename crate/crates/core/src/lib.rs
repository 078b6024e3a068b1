//! Differentiable collision detection between convex bodies and
//! collision-free trajectory optimization.
//!
//! The toolkit is organized around a signed distance notion called the
//! minimum offset to touch: the smallest translation (no rotation) that
//! brings two convex bodies into boundary contact. For smooth bodies the
//! offset, its direction, and the witness points satisfy a square system of
//! smooth equality conditions, which this crate evaluates, differentiates,
//! and solves — either for a static pair ([`mott`]) or embedded as
//! constraints across every knot of a trajectory ([`trajopt`]).
//!
//! Polytopes are handled by smoothing: [`bodies::SuperquadBody`] is a
//! semi-algebraic inner approximation of an H-representation polytope built
//! from a superquadratic approximation of the non-positive cone. The bounds
//! it needs come from the small dense LP solver in [`lp`].
//!
//! Everything the solvers produce can be cross-checked against the
//! deliberately slow ground-truth machinery in [`oracle`]: polytope vertex
//! enumeration, closest points between vertex hulls, a direction-sweep
//! offset oracle, and sampled penetration tests.
//!
//! The `mott-opt` binary exposes the scene-level workflow (approximate,
//! solve, sweep, validate); see [`scene`] for the file formats.

pub mod bodies;
pub mod lp;
pub mod mott;
pub mod nlp;
pub mod oracle;
pub mod pose;
pub mod randgen;
pub mod scene;
pub mod trajopt;

pub use bodies::{AnalyticBody, Polytope, SmoothBody, SuperquadBody};
pub use pose::Pose;
