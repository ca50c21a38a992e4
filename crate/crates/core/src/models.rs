//! Ready-made sample spaces, observables, and families.
//!
//! These are the concrete models the check suite and the shipped run specs
//! are built from: small discrete spaces with closed-form solutions, sums
//! of exchangeable binary units, and a truncated Gaussian location-scale
//! family on a discretized interval.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{GridAxis, ModelFamily, ParameterGrid};
use crate::solver::SolverOptions;
use crate::space::{Distribution, Observable, SampleSpace};

/// Two-point space {0, 1} with unit measure.
pub fn two_state() -> Arc<SampleSpace> {
    SampleSpace::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0])
        .expect("two-state space is valid")
}

/// k-point space {0, 1, .., k-1} with unit measure.
pub fn k_state(k: usize) -> Result<Arc<SampleSpace>> {
    if k < 2 {
        return Err(Error::Invalid {
            module: "models",
            reason: format!("a k-state space needs k >= 2, got {k}"),
        });
    }
    let points: Vec<f64> = (0..k).map(|i| i as f64).collect();
    SampleSpace::new(points, vec![1.0; k], vec![1.0; k])
}

/// Space of totals of `n` exchangeable binary units: points k = 0..n with
/// multiplicity measure m_k = C(n, k). The multiplicities are built by the
/// Pascal recurrence in floating point, which stays finite for n <= 1000.
pub fn binomial_units(n: usize) -> Result<Arc<SampleSpace>> {
    if n == 0 || n > 1000 {
        return Err(Error::Invalid {
            module: "models",
            reason: format!("binomial unit count {n} outside 1..=1000"),
        });
    }
    let points: Vec<f64> = (0..=n).map(|k| k as f64).collect();
    let mut measure = vec![0.0; n + 1];
    measure[0] = 1.0;
    for k in 0..n {
        measure[k + 1] = measure[k] * (n - k) as f64 / (k + 1) as f64;
    }
    SampleSpace::new(points, vec![1.0; n + 1], measure)
}

/// Interval [lo, hi] discretized by `n` evenly spaced points with trapezoid
/// cell volumes and Lebesgue measure.
pub fn uniform_interval(lo: f64, hi: f64, n: usize) -> Result<Arc<SampleSpace>> {
    if n < 2 {
        return Err(Error::Invalid {
            module: "models",
            reason: format!("interval discretization needs at least 2 points, got {n}"),
        });
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Invalid {
            module: "models",
            reason: format!("({lo}, {hi}) is not a finite interval"),
        });
    }
    let points = linspace(lo, hi, n);
    let volumes = crate::numerics::trapezoid_weights(&points);
    SampleSpace::new(points, volumes, vec![1.0; n])
}

/// The point coordinate itself as an observable (first coordinate when the
/// space is multi-dimensional).
pub fn identity_observable(space: &Arc<SampleSpace>, name: impl Into<String>) -> Observable {
    let values: Vec<f64> = (0..space.len()).map(|k| space.point(k)[0]).collect();
    Observable::new(space.clone(), name, values).expect("space coordinates are finite")
}

/// x^p of the first coordinate as an observable.
pub fn power_observable(
    space: &Arc<SampleSpace>,
    name: impl Into<String>,
    p: i32,
) -> Result<Observable> {
    let values: Vec<f64> = (0..space.len()).map(|k| space.point(k)[0].powi(p)).collect();
    Observable::new(space.clone(), name, values)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
    // force the last node onto hi exactly so endpoint identities hold
    nodes[n - 1] = hi;
    nodes
}

/// Axis with exactly `n` evenly spaced nodes from `lo` to `hi` inclusive,
/// inside the open bounds (lower, upper). Unlike [`GridAxis::uniform`],
/// which fixes the spacing and derives the count, this fixes the count;
/// use it when a result must be reproduced on a grid of known size.
pub fn linspace_axis(
    name: impl Into<String>,
    lo: f64,
    hi: f64,
    n: usize,
    lower: f64,
    upper: f64,
) -> Result<GridAxis> {
    if n < 2 || !(lo < hi) {
        return Err(Error::Invalid {
            module: "models",
            reason: format!("linspace axis needs n >= 2 and lo < hi, got n={n}, ({lo}, {hi})"),
        });
    }
    GridAxis::from_nodes(name, linspace(lo, hi, n), lower, upper)
}

/// Mean-constrained family on the two-state space, parametrized by the
/// target mean A in (0, 1).
pub fn bernoulli_family(axis: GridAxis) -> Result<ModelFamily> {
    let space = two_state();
    let obs = identity_observable(&space, axis.name());
    ModelFamily::by_target(
        space,
        vec![obs],
        ParameterGrid::new(vec![axis])?,
        SolverOptions::default(),
    )
}

/// Mean-constrained family on `n` exchangeable binary units, parametrized
/// by the target total A in (0, n).
pub fn binomial_family(n: usize, axis: GridAxis) -> Result<ModelFamily> {
    let space = binomial_units(n)?;
    let obs = identity_observable(&space, axis.name());
    ModelFamily::by_target(
        space,
        vec![obs],
        ParameterGrid::new(vec![axis])?,
        SolverOptions::default(),
    )
}

/// Sample space that carries the Gaussian family: [-12, 12] at 1601 points.
/// Wide enough that the truncated tail mass is ~1e-6 for the parameter
/// ranges used in the analysis grids.
pub fn gaussian_sample_space() -> Arc<SampleSpace> {
    uniform_interval(-12.0, 12.0, 1601).expect("fixed interval is valid")
}

/// Location-scale Gaussian family on a discretized interval, tabulated over
/// a (mu, sigma) grid. Densities are renormalized on the truncated support,
/// so the family is exactly a distribution family even where the tails are
/// clipped.
pub fn gaussian_family(
    space: Arc<SampleSpace>,
    mu_axis: GridAxis,
    sigma_axis: GridAxis,
) -> Result<ModelFamily> {
    if space.dim() != 1 {
        return Err(Error::Invalid {
            module: "models",
            reason: "the Gaussian family lives on a one-dimensional space".into(),
        });
    }
    let grid = ParameterGrid::new(vec![mu_axis, sigma_axis])?;
    let sp = space.clone();
    ModelFamily::tabulated(space, grid, move |theta: &[f64]| {
        let (mu, sigma) = (theta[0], theta[1]);
        if !(sigma > 0.0) {
            return Err(Error::Invalid {
                module: "models",
                reason: format!("Gaussian scale must be positive, got {sigma}"),
            });
        }
        let field: Vec<f64> = (0..sp.len())
            .map(|k| {
                let z = (sp.point(k)[0] - mu) / sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        Distribution::normalize(sp.clone(), field)
    })
}
