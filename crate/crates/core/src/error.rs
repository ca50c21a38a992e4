//! Error type shared by all engine modules.
//!
//! Messages are prefixed with the originating module so CLI users can tell a
//! modeling mistake (infeasible target, bad grid) from a numerical failure.

/// Engine-wide error enum. Every fallible operation returns this.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A density puts mass where the base measure vanishes.
    #[error("space: support violation at point {index}: density {density:.6e} where the measure is zero")]
    SupportViolation { index: usize, density: f64 },

    /// A density failed the normalization check at construction.
    #[error("space: density mass {mass:.9} differs from 1 by more than 1e-6")]
    NotNormalized { mass: f64 },

    /// Two objects that must live on the same sample space do not.
    #[error("space: mismatched sample spaces in {op}")]
    SpaceMismatch { op: &'static str },

    /// Invalid construction or argument; `module` names the origin.
    #[error("{module}: invalid input: {reason}")]
    Invalid { module: &'static str, reason: String },

    /// A constraint target lies outside the feasible hull of its observable.
    #[error("solver: target {target:.9} for constraint {component} is infeasible: {reason}")]
    Infeasible {
        component: usize,
        target: f64,
        reason: String,
    },

    /// Iteration budget exhausted before reaching tolerance.
    #[error("solver: no convergence after {iterations} iterations, residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A finite-difference stencil would leave the declared parameter bounds.
    #[error("geometry: stencil leaves parameter bounds at node {node}, axis {axis}")]
    StencilOutOfBounds { node: usize, axis: usize },

    /// Support changes across a finite-difference stencil, so the score is undefined.
    #[error("geometry: support changes across the stencil at node {node}, point {index}")]
    MixedSupport { node: usize, index: usize },

    /// A reparametrization has a vanishing derivative at a grid node.
    #[error("geometry: singular reparametrization at node {node}, axis {axis}")]
    SingularJacobian { node: usize, axis: usize },

    /// A distribution over parameters collapsed to zero total mass.
    #[error("{module}: degenerate density: {reason}")]
    DegenerateDensity { module: &'static str, reason: String },

    /// Numerical failure: an internal consistency check did not hold.
    #[error("{module}: numerical failure: {reason}")]
    Numerical { module: &'static str, reason: String },

    /// A requested computation exceeds a hard resource cap.
    #[error("{module}: resource limit: {reason}")]
    Resource { module: &'static str, reason: String },

    /// Two routes that must agree within tolerance did not.
    #[error("{module}: route disagreement: {detail} (deviation {deviation:.3e}, tolerance {tolerance:.3e})")]
    RouteDisagreement {
        module: &'static str,
        detail: String,
        deviation: f64,
        tolerance: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that signal a numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Numerical { .. }
                | Error::DegenerateDensity { .. }
                | Error::RouteDisagreement { .. }
        )
    }
}
