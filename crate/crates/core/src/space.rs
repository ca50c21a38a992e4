//! Discretized sample spaces and the probability objects living on them.
//!
//! A [`SampleSpace`] is a finite list of points with a positive cell volume
//! dx_k and a nonnegative base measure m_k per point. Integrals are sums
//! weighted by dx, densities are taken relative to dx (so probabilities are
//! p_k dx_k), and entropies are always relative to the measure m.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Finite sample space: points in R^dim, one cell volume and one measure
/// value per point. Discrete spaces use dx = 1; continuum discretizations
/// carry their quadrature cell as dx.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpace {
    coords: Vec<f64>,
    dim: usize,
    cell_volume: Vec<f64>,
    measure: Vec<f64>,
    log_mass: Vec<f64>,
}

impl SampleSpace {
    /// One-dimensional space from point coordinates.
    pub fn new(points: Vec<f64>, cell_volume: Vec<f64>, measure: Vec<f64>) -> Result<Arc<Self>> {
        Self::with_dim(points, 1, cell_volume, measure)
    }

    /// General constructor; `coords` is flattened row-major, `dim` values per point.
    pub fn with_dim(
        coords: Vec<f64>,
        dim: usize,
        cell_volume: Vec<f64>,
        measure: Vec<f64>,
    ) -> Result<Arc<Self>> {
        if dim == 0 {
            return Err(Error::Invalid {
                module: "space",
                reason: "point dimension must be at least 1".into(),
            });
        }
        if coords.len() % dim != 0 {
            return Err(Error::Invalid {
                module: "space",
                reason: format!("{} coordinates do not split into points of dimension {dim}", coords.len()),
            });
        }
        let n = coords.len() / dim;
        if n == 0 {
            return Err(Error::Invalid {
                module: "space",
                reason: "sample space must contain at least one point".into(),
            });
        }
        if cell_volume.len() != n || measure.len() != n {
            return Err(Error::Invalid {
                module: "space",
                reason: format!(
                    "expected {n} cell volumes and measure values, got {} and {}",
                    cell_volume.len(),
                    measure.len()
                ),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid {
                module: "space",
                reason: "coordinates must be finite".into(),
            });
        }
        if cell_volume.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid {
                module: "space",
                reason: "cell volumes must be positive and finite".into(),
            });
        }
        if measure.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::Invalid {
                module: "space",
                reason: "measure values must be nonnegative and finite".into(),
            });
        }
        if measure.iter().all(|&m| m == 0.0) {
            return Err(Error::Invalid {
                module: "space",
                reason: "measure vanishes everywhere".into(),
            });
        }
        let log_mass = measure
            .iter()
            .zip(&cell_volume)
            .map(|(&m, &dx)| if m > 0.0 { m.ln() + dx.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(Arc::new(SampleSpace {
            coords,
            dim,
            cell_volume,
            measure,
            log_mass,
        }))
    }

    pub fn len(&self) -> usize {
        self.cell_volume.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor guarantees at least one point
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn cell_volume(&self) -> &[f64] {
        &self.cell_volume
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    /// log(m_k dx_k); -inf where the measure vanishes.
    pub fn log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    /// Spaces match when they are the same allocation or structurally equal.
    pub fn same_space(a: &Arc<SampleSpace>, b: &Arc<SampleSpace>) -> bool {
        Arc::ptr_eq(a, b) || a == b
    }
}

/// Probability density relative to cell volume: p_k >= 0, sum p_k dx_k = 1.
#[derive(Debug, Clone)]
pub struct Distribution {
    space: Arc<SampleSpace>,
    density: Vec<f64>,
}

impl Distribution {
    /// Validates support, positivity, and normalization within 1e-6, then
    /// rescales exactly so that downstream sums see unit mass.
    pub fn new(space: Arc<SampleSpace>, density: Vec<f64>) -> Result<Self> {
        if density.len() != space.len() {
            return Err(Error::Invalid {
                module: "space",
                reason: format!(
                    "density has {} entries on a space of {} points",
                    density.len(),
                    space.len()
                ),
            });
        }
        for (k, &p) in density.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Invalid {
                    module: "space",
                    reason: format!("density entry {k} is {p}"),
                });
            }
            if p > 0.0 && space.measure()[k] == 0.0 {
                return Err(Error::SupportViolation { index: k, density: p });
            }
        }
        let mass: f64 = density
            .iter()
            .zip(space.cell_volume())
            .map(|(p, dx)| p * dx)
            .sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized { mass });
        }
        let density = density.into_iter().map(|p| p / mass).collect();
        Ok(Distribution { space, density })
    }

    /// Normalizes an arbitrary nonnegative field into a distribution.
    pub fn normalize(space: Arc<SampleSpace>, field: Vec<f64>) -> Result<Self> {
        if field.len() != space.len() {
            return Err(Error::Invalid {
                module: "space",
                reason: format!(
                    "field has {} entries on a space of {} points",
                    field.len(),
                    space.len()
                ),
            });
        }
        for (k, &p) in field.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Invalid {
                    module: "space",
                    reason: format!("field entry {k} is {p}"),
                });
            }
            if p > 0.0 && space.measure()[k] == 0.0 {
                return Err(Error::SupportViolation { index: k, density: p });
            }
        }
        let mass: f64 = field
            .iter()
            .zip(space.cell_volume())
            .map(|(p, dx)| p * dx)
            .sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateDensity {
                module: "space",
                reason: format!("field mass {mass} cannot be normalized"),
            });
        }
        let density = field.into_iter().map(|p| p / mass).collect();
        Ok(Distribution { space, density })
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Probability mass p_k dx_k of a single point.
    pub fn mass(&self, k: usize) -> f64 {
        self.density[k] * self.space.cell_volume()[k]
    }
}

/// Real-valued function on a sample space, tabulated per point.
#[derive(Debug, Clone)]
pub struct Observable {
    space: Arc<SampleSpace>,
    name: String,
    values: Vec<f64>,
}

impl Observable {
    pub fn new(space: Arc<SampleSpace>, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::Invalid {
                module: "space",
                reason: format!(
                    "observable has {} values on a space of {} points",
                    values.len(),
                    space.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid {
                module: "space",
                reason: "observable values must be finite".into(),
            });
        }
        Ok(Observable {
            space,
            name: name.into(),
            values,
        })
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A set of observables with target expectation values, all on one space.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    observables: Vec<Observable>,
    targets: Vec<f64>,
}

impl ConstraintSet {
    pub fn new(observables: Vec<Observable>, targets: Vec<f64>) -> Result<Self> {
        if observables.is_empty() {
            return Err(Error::Invalid {
                module: "space",
                reason: "a constraint set needs at least one observable".into(),
            });
        }
        if observables.len() != targets.len() {
            return Err(Error::Invalid {
                module: "space",
                reason: format!(
                    "{} observables with {} targets",
                    observables.len(),
                    targets.len()
                ),
            });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid {
                module: "space",
                reason: "targets must be finite".into(),
            });
        }
        let first = observables[0].space().clone();
        for obs in &observables[1..] {
            if !SampleSpace::same_space(&first, obs.space()) {
                return Err(Error::SpaceMismatch { op: "constraint set" });
            }
        }
        Ok(ConstraintSet {
            observables,
            targets,
        })
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        self.observables[0].space()
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }
}

/// Expectation <f>_p = sum f_k p_k dx_k. The observable must live on the
/// distribution's space.
pub fn expectation(p: &Distribution, f: &Observable) -> Result<f64> {
    if !SampleSpace::same_space(p.space(), f.space()) {
        return Err(Error::SpaceMismatch { op: "expectation" });
    }
    Ok(f.values()
        .iter()
        .zip(p.density())
        .zip(p.space().cell_volume())
        .map(|((v, p), dx)| v * p * dx)
        .sum())
}

/// Entropy of p relative to the space's base measure:
/// S[p] = -sum p_k log(p_k / m_k) dx_k.
/// Errors where p puts mass outside the measure's support.
pub fn relative_entropy(p: &Distribution) -> Result<f64> {
    let space = p.space();
    let mut s = 0.0;
    for (k, &pk) in p.density().iter().enumerate() {
        if pk == 0.0 {
            continue; // 0 log 0 = 0
        }
        let m = space.measure()[k];
        if m == 0.0 {
            return Err(Error::SupportViolation { index: k, density: pk });
        }
        s -= pk * (pk / m).ln() * space.cell_volume()[k];
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state() -> Arc<SampleSpace> {
        SampleSpace::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn uniform_two_state_entropy_is_log2() {
        let space = two_state();
        let p = Distribution::new(space, vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(relative_entropy(&p).unwrap(), (2.0f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn entropy_is_invariant_under_cell_refinement() {
        // splitting each cell in two, same density and measure, leaves S unchanged
        let coarse = SampleSpace::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 2.0]).unwrap();
        let p_c = Distribution::new(coarse, vec![0.3, 0.7]).unwrap();
        let fine = SampleSpace::new(
            vec![0.0, 0.25, 1.0, 1.25],
            vec![0.5, 0.5, 0.5, 0.5],
            vec![1.0, 1.0, 2.0, 2.0],
        )
        .unwrap();
        let p_f = Distribution::new(fine, vec![0.3, 0.3, 0.7, 0.7]).unwrap();
        assert_abs_diff_eq!(
            relative_entropy(&p_c).unwrap(),
            relative_entropy(&p_f).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn support_violation_is_reported_with_index() {
        let space = SampleSpace::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
        let err = Distribution::new(space, vec![0.5, 0.5]).unwrap_err();
        match err {
            Error::SupportViolation { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn near_normalized_density_is_rescaled_exactly() {
        let space = two_state();
        let p = Distribution::new(space, vec![0.5000001, 0.5000001]).unwrap();
        let mass: f64 = p
            .density()
            .iter()
            .zip(p.space().cell_volume())
            .map(|(p, dx)| p * dx)
            .sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn badly_normalized_density_is_rejected() {
        let space = two_state();
        assert!(matches!(
            Distribution::new(space, vec![0.6, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn expectation_requires_matching_space() {
        let s1 = two_state();
        let s2 = SampleSpace::new(vec![0.0, 2.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let p = Distribution::new(s1, vec![0.5, 0.5]).unwrap();
        let f = Observable::new(s2, "a", vec![0.0, 2.0]).unwrap();
        assert!(matches!(
            expectation(&p, &f),
            Err(Error::SpaceMismatch { .. })
        ));
    }

    #[test]
    fn structurally_equal_spaces_match() {
        let s1 = two_state();
        let s2 = two_state();
        assert!(!Arc::ptr_eq(&s1, &s2));
        assert!(SampleSpace::same_space(&s1, &s2));
    }

    #[test]
    fn expectation_is_linear() {
        let space = two_state();
        let p = Distribution::new(space.clone(), vec![0.3, 0.7]).unwrap();
        let f = Observable::new(space.clone(), "f", vec![1.0, 2.0]).unwrap();
        let g = Observable::new(space.clone(), "g", vec![-1.0, 3.0]).unwrap();
        let combo = Observable::new(
            space,
            "2f+3g",
            f.values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| 2.0 * a + 3.0 * b)
                .collect(),
        )
        .unwrap();
        let lhs = expectation(&p, &combo).unwrap();
        let rhs = 2.0 * expectation(&p, &f).unwrap() + 3.0 * expectation(&p, &g).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14);
    }
}
