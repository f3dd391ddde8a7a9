//! Sampled metric geometry for vector bundles over model surfaces.
//!
//! The crate studies, at desk scale, what happens to the total space of a
//! Euclidean vector bundle when its base collapses or its holonomy group
//! grows: fiberwise distances acquire a group-norm penalty, quotients of the
//! fiber appear as Gromov-Hausdorff limits, and parallel transport survives
//! only as a set-valued relation.
//!
//! ## Architecture
//!
//! * [`metric`] — finite (semi-)metric spaces, axiom checks, Hausdorff and
//!   Gromov-Hausdorff bounds via correspondences and ε-isometries.
//! * [`holonomic`] — normed-group actions on ℝᵏ and the associated
//!   holonomic semi-metric `d_L(u, v) = inf_a sqrt(L(a)² + |au − v|²)`,
//!   with limit and wane-set machinery for collapsing norm sequences.
//! * [`quotient`] — catalog of closed orthogonal subgroups, orbit distances
//!   and sampled metric quotients of ℝᵏ.
//! * [`bundle`] — model manifolds (flat tori, round spheres, products,
//!   rescalings), parallel transport along piecewise geodesic curves, and
//!   Sasaki-type distances on tangent bundles.
//! * [`parallelism`] — finite relations, the transport relation algebra, and
//!   set-valued parallel translation on sampled submetries.
//! * [`experiment`] — reproducible collapse experiments emitting CSV/JSON
//!   reports; the CLI wraps these.
//!
//! Distance-matrix fills run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential loops otherwise; both produce
//! identical bytes.

pub mod bundle;
pub mod experiment;
pub mod holonomic;
pub mod metric;
pub mod parallelism;
pub mod par;
pub mod quotient;

mod minimize;

pub use minimize::minimize_1d;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structurally invalid input: wrong shapes, negative distances,
    /// inconsistent dimensions, unparseable descriptions.
    #[error("malformed input: {0}")]
    Malformed(String),
    /// Input is well-formed but outside an operation's domain
    /// (mismatched composition, missing base point, non-positive radius).
    #[error("domain error: {0}")]
    Domain(String),
    /// A quantitative precondition failed beyond tolerance.
    #[error("tolerance exceeded: {0}")]
    Tolerance(String),
    /// A search finished without reaching its target within tolerance.
    #[error("target not attained: {0}")]
    Unattained(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A radius bound that may be infinite (trivial holonomy admits every
/// radius).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Radius {
    Finite(f64),
    Infinite,
}

impl Radius {
    pub fn finite_value(&self) -> Option<f64> {
        match self {
            Radius::Finite(v) => Some(*v),
            Radius::Infinite => None,
        }
    }

    /// Minimum of two radius bounds, treating `Infinite` as neutral.
    pub fn min(self, other: Radius) -> Radius {
        match (self, other) {
            (Radius::Infinite, r) | (r, Radius::Infinite) => r,
            (Radius::Finite(a), Radius::Finite(b)) => Radius::Finite(a.min(b)),
        }
    }
}

impl Error {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
