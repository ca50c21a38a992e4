//! Fluctuation analysis around a canonical equilibrium.
//!
//! A canonical solve pins the constraint targets exactly; here they are
//! treated as fluctuating quantities instead. The equilibrium multiplier
//! lambda0 tilts the entropy profile, and the targets fluctuate with total
//! density pi(theta) ~ exp(S(theta) - lambda0 . theta) sqrt(det g(theta))
//! over the parameter grid. The module computes that density, its moments,
//! the multiplier-target covariance by two independent routes, a Gaussian
//! reference for the large-system limit, and the exact finite-bath density
//! the tilted form approximates.
//!
//! Scenario construction cross-checks the two metric routes (entropy
//! Hessian against inverse canonical covariance) at every grid node and
//! refuses to proceed when they disagree; downstream results then never
//! depend silently on which route was used.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{hessian_of_profile, par_nodes, MetricField, ParameterGrid};
use crate::hyper::{EntropyProfile, HyperDistribution};
use crate::linalg::Matrix;
use crate::numerics::log_dot_exp;
use crate::solver::{solve_lagrange, SolverOptions};
use crate::space::{ConstraintSet, Observable, SampleSpace};

/// Relative agreement demanded between the entropy-Hessian metric and the
/// inverse canonical covariance at every grid node.
const ROUTE_TOL: f64 = 1e-4;

/// Equilibrium data tabulated over a parameter grid: entropy, multipliers,
/// canonical covariances, and the metric. Self-contained; the sample space
/// is only needed while building.
#[derive(Debug, Clone)]
pub struct FluctuationScenario {
    grid: ParameterGrid,
    lambda0: Vec<f64>,
    profile: EntropyProfile,
    lambdas: Vec<Vec<f64>>,
    covariances: Vec<Matrix>,
    metric: Arc<MetricField>,
}

impl FluctuationScenario {
    /// Solve the constrained problem at every grid node and assemble the
    /// scenario. The grid axes are target coordinates; every node (and the
    /// finite-difference probes around it) must be strictly feasible.
    ///
    /// The metric comes from the entropy Hessian and is checked node by
    /// node against the inverse of the solver's covariance. The two routes
    /// are computed independently, so their agreement is evidence that
    /// both are right; disagreement is an error, not a warning.
    pub fn build(
        space: &Arc<SampleSpace>,
        observables: Vec<Observable>,
        lambda0: Vec<f64>,
        grid: ParameterGrid,
        options: SolverOptions,
    ) -> Result<Self> {
        let d = grid.dim();
        if observables.len() != d || lambda0.len() != d {
            return Err(Error::Invalid {
                module: "fluct",
                reason: format!(
                    "{} observables and {} multipliers on a grid of dimension {d}",
                    observables.len(),
                    lambda0.len()
                ),
            });
        }
        if lambda0.iter().any(|l| !l.is_finite()) {
            return Err(Error::Invalid {
                module: "fluct",
                reason: "equilibrium multipliers must be finite".into(),
            });
        }
        for obs in &observables {
            if !SampleSpace::same_space(space, obs.space()) {
                return Err(Error::SpaceMismatch { op: "fluctuation scenario" });
            }
        }
        let solve_at = |target: &[f64]| {
            let cs = ConstraintSet::new(observables.clone(), target.to_vec())?;
            solve_lagrange(space, &cs, &options)
        };
        let per_node = par_nodes(grid.len(), |i| {
            let sol = solve_at(&grid.node(i))?;
            Ok((sol.entropy, sol.lambda, sol.covariance))
        })?;
        let metric = hessian_of_profile(|t| Ok(solve_at(t)?.entropy), &grid)?;
        let mut entropy = Vec::with_capacity(per_node.len());
        let mut lambdas = Vec::with_capacity(per_node.len());
        let mut covariances = Vec::with_capacity(per_node.len());
        for (s, l, c) in per_node {
            entropy.push(s);
            lambdas.push(l);
            covariances.push(c);
        }
        for (i, c) in covariances.iter().enumerate() {
            let c_inv = c.inverse_spd(1e-12).ok_or_else(|| Error::Numerical {
                module: "fluct",
                reason: format!("canonical covariance at node {i} is singular"),
            })?;
            let deviation = metric.metric(i).added(&c_inv.scaled(-1.0)).max_abs();
            let tolerance = ROUTE_TOL * c_inv.max_abs().max(1.0);
            if deviation > tolerance {
                return Err(Error::RouteDisagreement {
                    module: "fluct",
                    detail: format!("entropy Hessian vs inverse covariance at node {i}"),
                    deviation,
                    tolerance,
                });
            }
        }
        Ok(FluctuationScenario {
            lambda0,
            profile: EntropyProfile::new(grid.clone(), entropy)?,
            lambdas,
            covariances,
            metric: Arc::new(metric),
            grid,
        })
    }

    /// Scenario from explicit tables, for cases with known closed forms.
    /// Covariances are taken to be the metric inverses and the dual-route
    /// check is skipped: the caller vouches for the tables.
    pub fn synthetic(
        grid: ParameterGrid,
        entropy: Vec<f64>,
        lambdas: Vec<Vec<f64>>,
        metrics: Vec<Matrix>,
        lambda0: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        let d = grid.dim();
        if lambdas.len() != n || metrics.len() != n || lambda0.len() != d {
            return Err(Error::Invalid {
                module: "fluct",
                reason: format!(
                    "tables of {} multipliers and {} metrics on a grid of {n} nodes",
                    lambdas.len(),
                    metrics.len()
                ),
            });
        }
        if lambdas.iter().any(|l| l.len() != d) || metrics.iter().any(|m| m.dim() != d) {
            return Err(Error::Invalid {
                module: "fluct",
                reason: format!("multiplier or metric entries of dimension other than {d}"),
            });
        }
        let covariances = metrics
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.inverse_spd(1e-12).ok_or_else(|| Error::Numerical {
                    module: "fluct",
                    reason: format!("synthetic metric at node {i} is singular"),
                })
            })
            .collect::<Result<Vec<Matrix>>>()?;
        let metric = MetricField::from_parts(
            grid.clone(),
            metrics,
            crate::geometry::MetricMethod::AnalyticExponential,
            vec![false; n],
        )?;
        Ok(FluctuationScenario {
            lambda0,
            profile: EntropyProfile::new(grid.clone(), entropy)?,
            lambdas,
            covariances,
            metric: Arc::new(metric),
            grid,
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn lambda0(&self) -> &[f64] {
        &self.lambda0
    }

    pub fn profile(&self) -> &EntropyProfile {
        &self.profile
    }

    pub fn lambda(&self, node: usize) -> &[f64] {
        &self.lambdas[node]
    }

    pub fn covariance(&self, node: usize) -> &Matrix {
        &self.covariances[node]
    }

    pub fn metric(&self) -> &Arc<MetricField> {
        &self.metric
    }
}

/// Density of the fluctuating targets:
/// pi(theta) ~ exp(S(theta) - lambda0 . theta) sqrt(det g(theta)).
pub fn fluctuation_distribution(scn: &FluctuationScenario) -> Result<HyperDistribution> {
    let log_scalar: Vec<f64> = (0..scn.grid.len())
        .map(|i| {
            let theta = scn.grid.node(i);
            let tilt: f64 = scn.lambda0.iter().zip(&theta).map(|(l, t)| l * t).sum();
            scn.profile.value(i) - tilt
        })
        .collect();
    HyperDistribution::from_log_scalar(scn.metric.clone(), &log_scalar, 1.0)
}

/// First and second moments of the targets and of the multiplier field
/// under the fluctuation density.
#[derive(Debug, Clone)]
pub struct FluctuationMoments {
    pub mean_a: Vec<f64>,
    pub mean_lambda: Vec<f64>,
    pub cov_a: Matrix,
    pub cov_lambda: Matrix,
}

pub fn fluctuation_moments(
    scn: &FluctuationScenario,
    pi: &HyperDistribution,
) -> Result<FluctuationMoments> {
    if pi.grid() != &scn.grid {
        return Err(Error::Invalid {
            module: "fluct",
            reason: "density and scenario live on different grids".into(),
        });
    }
    let d = scn.grid.dim();
    let mean_a = pi.mean();
    let cov_a = pi.covariance();
    let mut mean_lambda = vec![0.0; d];
    for i in 0..scn.grid.len() {
        let mass = pi.pi()[i] * scn.grid.weight(i);
        for (j, l) in scn.lambdas[i].iter().enumerate() {
            mean_lambda[j] += mass * l;
        }
    }
    let mut cov_lambda = Matrix::zeros(d);
    for i in 0..scn.grid.len() {
        let mass = pi.pi()[i] * scn.grid.weight(i);
        if mass == 0.0 {
            continue;
        }
        let l = &scn.lambdas[i];
        for a in 0..d {
            for b in a..d {
                let v = cov_lambda.get(a, b) + mass * (l[a] - mean_lambda[a]) * (l[b] - mean_lambda[b]);
                cov_lambda.set(a, b, v);
                cov_lambda.set(b, a, v);
            }
        }
    }
    Ok(FluctuationMoments {
        mean_a,
        mean_lambda,
        cov_a,
        cov_lambda,
    })
}

/// Peak of the scalar density exp(S - lambda0 . theta), refined off-grid by
/// a per-axis quadratic through the argmax node and its neighbors. At the
/// refined peak the local multiplier equals lambda0, so the refinement
/// sharpens every identity that evaluates fields "at the peak". Falls back
/// to the node coordinate on an axis edge or where the three-point stencil
/// is not concave.
pub fn refined_peak(pi: &HyperDistribution) -> Vec<f64> {
    let grid = pi.grid();
    let peak = (0..grid.len())
        .max_by(|a, b| pi.scalar_log_density(*a).total_cmp(&pi.scalar_log_density(*b)))
        .unwrap_or(0);
    let multi = grid.multi_index(peak);
    let mut refined = grid.node(peak);
    for j in 0..grid.dim() {
        let axis = grid.axis(j);
        let k = multi[j];
        if k == 0 || k + 1 == axis.len() {
            continue;
        }
        let mut lo = multi.clone();
        let mut hi = multi.clone();
        lo[j] = k - 1;
        hi[j] = k + 1;
        let l_minus = pi.scalar_log_density(grid.flat_index(&lo));
        let l_0 = pi.scalar_log_density(peak);
        let l_plus = pi.scalar_log_density(grid.flat_index(&hi));
        if !(l_minus.is_finite() && l_0.is_finite() && l_plus.is_finite()) {
            continue;
        }
        let x_minus = axis.nodes()[k - 1] - axis.nodes()[k];
        let x_plus = axis.nodes()[k + 1] - axis.nodes()[k];
        let denom = x_minus * (l_plus - l_0) - x_plus * (l_minus - l_0);
        let numer = x_minus * x_minus * (l_plus - l_0) - x_plus * x_plus * (l_minus - l_0);
        // concave three-point stencil has denom * (x_plus - x_minus) < 0
        if denom * (x_plus - x_minus) >= 0.0 {
            continue;
        }
        refined[j] = axis.nodes()[k] + 0.5 * numer / denom;
    }
    refined
}

/// The multiplier-target covariance by two routes.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// <delta lambda_a delta theta_b> under pi, computed directly.
    pub direct: Matrix,
    /// Response route: -d<lambda_a>/d lambda0_b plus the peak-offset
    /// product (lambda0 - <lambda>)_a (theta_peak - <theta>)_b.
    pub response: Matrix,
    /// max |direct - response|.
    pub max_disagreement: f64,
    /// max |direct + I|: distance from the idealized unit anticorrelation.
    pub canonical_deviation: f64,
}

fn mean_lambda_tilted(scn: &FluctuationScenario, lambda0: &[f64]) -> Vec<f64> {
    let n = scn.grid.len();
    let d = scn.grid.dim();
    let w = scn.grid.weights();
    let log_total: Vec<f64> = (0..n)
        .map(|i| {
            let theta = scn.grid.node(i);
            let tilt: f64 = lambda0.iter().zip(&theta).map(|(l, t)| l * t).sum();
            scn.profile.value(i) - tilt + scn.metric.half_log_det(i)
        })
        .collect();
    let norm = log_dot_exp(&log_total, &w);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let mass = (log_total[i] - norm).exp() * w[i];
        for (j, l) in scn.lambdas[i].iter().enumerate() {
            mean[j] += mass * l;
        }
    }
    mean
}

/// Cross-check the multiplier-target covariance: directly under pi, and
/// through the response of <lambda> to the equilibrium tilt. The two are
/// algebraically equal up to the peak-offset product, which shrinks with
/// system size; `agreement_tol` is the absolute disagreement the caller
/// accepts before the result is rejected as inconsistent.
pub fn lambda_a_correlation(
    scn: &FluctuationScenario,
    agreement_tol: f64,
) -> Result<CorrelationReport> {
    let pi = fluctuation_distribution(scn)?;
    let d = scn.grid.dim();
    let moments = fluctuation_moments(scn, &pi)?;
    let mut direct = Matrix::zeros(d);
    for i in 0..scn.grid.len() {
        let mass = pi.pi()[i] * scn.grid.weight(i);
        if mass == 0.0 {
            continue;
        }
        let theta = scn.grid.node(i);
        let l = &scn.lambdas[i];
        for a in 0..d {
            for b in 0..d {
                let v = direct.get(a, b)
                    + mass * (l[a] - moments.mean_lambda[a]) * (theta[b] - moments.mean_a[b]);
                direct.set(a, b, v);
            }
        }
    }
    let peak = refined_peak(&pi);
    let mut response = Matrix::zeros(d);
    for b in 0..d {
        let h = 1e-4 * scn.lambda0[b].abs() + 1e-6;
        let mut up = scn.lambda0.clone();
        let mut down = scn.lambda0.clone();
        up[b] += h;
        down[b] -= h;
        let m_up = mean_lambda_tilted(scn, &up);
        let m_down = mean_lambda_tilted(scn, &down);
        for a in 0..d {
            let slope = (m_up[a] - m_down[a]) / (2.0 * h);
            let product = (scn.lambda0[a] - moments.mean_lambda[a]) * (peak[b] - moments.mean_a[b]);
            response.set(a, b, -slope + product);
        }
    }
    let mut max_disagreement: f64 = 0.0;
    let mut canonical_deviation: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            max_disagreement = max_disagreement.max((direct.get(a, b) - response.get(a, b)).abs());
            let id = if a == b { 1.0 } else { 0.0 };
            canonical_deviation = canonical_deviation.max((direct.get(a, b) + id).abs());
        }
    }
    if max_disagreement > agreement_tol {
        return Err(Error::RouteDisagreement {
            module: "fluct",
            detail: "direct multiplier-target covariance vs response route".into(),
            deviation: max_disagreement,
            tolerance: agreement_tol,
        });
    }
    Ok(CorrelationReport {
        direct,
        response,
        max_disagreement,
        canonical_deviation,
    })
}

/// Fluctuation density against its Gaussian reference.
#[derive(Debug, Clone)]
pub struct GaussianComparison {
    /// Total variation distance between pi and the grid-normalized Gaussian
    /// centered at the refined peak with covariance g^{-1} there.
    pub tv: f64,
    /// For one-axis grids: whether the total density has a single local
    /// maximum (axis edges count). Vacuously true in higher dimension.
    pub unimodal: bool,
    pub peak: Vec<f64>,
}

pub fn gaussian_comparison(
    scn: &FluctuationScenario,
    pi: &HyperDistribution,
) -> Result<GaussianComparison> {
    if pi.grid() != &scn.grid {
        return Err(Error::Invalid {
            module: "fluct",
            reason: "density and scenario live on different grids".into(),
        });
    }
    let grid = &scn.grid;
    let n = grid.len();
    let peak = refined_peak(pi);
    let peak_node = (0..n)
        .max_by(|a, b| pi.scalar_log_density(*a).total_cmp(&pi.scalar_log_density(*b)))
        .unwrap_or(0);
    let g = scn.metric.metric(peak_node);
    let w = grid.weights();
    let log_q: Vec<f64> = (0..n)
        .map(|i| {
            let theta = grid.node(i);
            let delta: Vec<f64> = theta.iter().zip(&peak).map(|(t, p)| t - p).collect();
            -0.5 * g.quadratic_form(&delta)
        })
        .collect();
    let norm = log_dot_exp(&log_q, &w);
    let mut tv = 0.0;
    for i in 0..n {
        let q = (log_q[i] - norm).exp();
        tv += 0.5 * w[i] * (pi.pi()[i] - q).abs();
    }
    let unimodal = if grid.dim() == 1 {
        let p = pi.pi();
        let mut maxima = 0;
        for i in 0..n {
            let left = i == 0 || p[i] > p[i - 1];
            let right = i + 1 == n || p[i] > p[i + 1];
            if left && right {
                maxima += 1;
            }
        }
        maxima <= 1
    } else {
        true
    };
    Ok(GaussianComparison { tv, unimodal, peak })
}

/// Everything the fluctuation analysis produces for one scenario, with the
/// internal consistency conditions already enforced.
#[derive(Debug, Clone)]
pub struct FluctuationReport {
    pub pi: HyperDistribution,
    pub moments: FluctuationMoments,
    pub correlation: CorrelationReport,
    pub gaussian: GaussianComparison,
    /// ||lambda(peak node) - lambda0||_inf.
    pub stationarity_gap: f64,
    /// Multiplier variation across the peak node's neighbors: the gap must
    /// stay below this, since the true peak is at most one cell away.
    pub stationarity_bound: f64,
}

pub fn fluctuation_report(
    scn: &FluctuationScenario,
    agreement_tol: f64,
) -> Result<FluctuationReport> {
    let pi = fluctuation_distribution(scn)?;
    let moments = fluctuation_moments(scn, &pi)?;
    let correlation = lambda_a_correlation(scn, agreement_tol)?;
    let gaussian = gaussian_comparison(scn, &pi)?;
    let grid = &scn.grid;
    let peak_node = (0..grid.len())
        .max_by(|a, b| pi.scalar_log_density(*a).total_cmp(&pi.scalar_log_density(*b)))
        .unwrap_or(0);
    let gap = scn.lambdas[peak_node]
        .iter()
        .zip(&scn.lambda0)
        .map(|(l, l0)| (l - l0).abs())
        .fold(0.0f64, f64::max);
    let multi = grid.multi_index(peak_node);
    let mut bound = 0.0f64;
    for j in 0..grid.dim() {
        for dir in [-1isize, 1] {
            let k = multi[j] as isize + dir;
            if k < 0 || k as usize >= grid.axis(j).len() {
                continue;
            }
            let mut nb = multi.clone();
            nb[j] = k as usize;
            let neighbor = grid.flat_index(&nb);
            let variation = scn.lambdas[neighbor]
                .iter()
                .zip(&scn.lambdas[peak_node])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            bound = bound.max(variation);
        }
    }
    let scale = scn.lambda0.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    if gap > bound + 1e-9 * scale {
        return Err(Error::Numerical {
            module: "fluct",
            reason: format!(
                "multiplier at the density peak is {gap:.3e} from lambda0, beyond the one-cell bound {bound:.3e}"
            ),
        });
    }
    Ok(FluctuationReport {
        pi,
        moments,
        correlation,
        gaussian,
        stationarity_gap: gap,
        stationarity_bound: bound,
    })
}

/// A finite reservoir coupled to the system: it absorbs whatever part of
/// the conserved totals the system does not take.
#[derive(Debug, Clone)]
pub struct BathSpec {
    space: Arc<SampleSpace>,
    observables: Vec<Observable>,
    total: Vec<f64>,
    options: SolverOptions,
}

impl BathSpec {
    pub fn new(
        space: Arc<SampleSpace>,
        observables: Vec<Observable>,
        total: Vec<f64>,
        options: SolverOptions,
    ) -> Result<Self> {
        if observables.is_empty() || observables.len() != total.len() {
            return Err(Error::Invalid {
                module: "fluct",
                reason: format!(
                    "{} bath observables with {} totals",
                    observables.len(),
                    total.len()
                ),
            });
        }
        for obs in &observables {
            if !SampleSpace::same_space(&space, obs.space()) {
                return Err(Error::SpaceMismatch { op: "bath spec" });
            }
        }
        if total.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid {
                module: "fluct",
                reason: "bath totals must be finite".into(),
            });
        }
        Ok(BathSpec {
            space,
            observables,
            total,
            options,
        })
    }
}

/// Exact fluctuation density for a system sharing conserved totals with a
/// finite bath.
#[derive(Debug, Clone)]
pub struct BathReport {
    pub pi: HyperDistribution,
    /// Fraction of grid nodes whose bath share was infeasible; those nodes
    /// carry zero density.
    pub excluded_fraction: f64,
    /// Set when more than a tenth of the grid was excluded: the grid then
    /// covers the joint hull poorly and moments are suspect.
    pub warned: bool,
}

/// pi(theta) ~ exp(S(theta) + S'(total - theta)) sqrt(det(g + g')), the
/// bath entropy and metric evaluated at the bath's share of the totals.
/// Nodes where that share is infeasible are excluded with zero density;
/// the fraction excluded is reported.
pub fn finite_bath_distribution(
    scn: &FluctuationScenario,
    bath: &BathSpec,
) -> Result<BathReport> {
    let d = scn.grid.dim();
    if bath.observables.len() != d {
        return Err(Error::Invalid {
            module: "fluct",
            reason: format!(
                "bath carries {} observables on a grid of dimension {d}",
                bath.observables.len()
            ),
        });
    }
    let n = scn.grid.len();
    let per_node = par_nodes(n, |i| {
        let theta = scn.grid.node(i);
        let share: Vec<f64> = bath.total.iter().zip(&theta).map(|(t, a)| t - a).collect();
        let cs = ConstraintSet::new(bath.observables.clone(), share)?;
        match solve_lagrange(&bath.space, &cs, &bath.options) {
            Ok(sol) => {
                let g_bath = sol.covariance.inverse_spd(1e-12).ok_or_else(|| Error::Numerical {
                    module: "fluct",
                    reason: format!("bath covariance at node {i} is singular"),
                })?;
                Ok(Some((sol.entropy, g_bath)))
            }
            Err(Error::Infeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let excluded = per_node.iter().filter(|r| r.is_none()).count();
    if excluded == n {
        return Err(Error::DegenerateDensity {
            module: "fluct",
            reason: "every grid node puts the bath outside its feasible range".into(),
        });
    }
    let mut matrices = Vec::with_capacity(n);
    let mut scalars = Vec::with_capacity(n);
    for (i, entry) in per_node.into_iter().enumerate() {
        match entry {
            Some((bath_entropy, g_bath)) => {
                matrices.push(scn.metric.metric(i).added(&g_bath));
                scalars.push(scn.profile.value(i) + bath_entropy);
            }
            None => {
                // excluded: density is zero there, the metric entry only
                // keeps the field total
                matrices.push(scn.metric.metric(i).clone());
                scalars.push(f64::NEG_INFINITY);
            }
        }
    }
    let combined = MetricField::from_parts(
        scn.grid.clone(),
        matrices,
        scn.metric.method(),
        (0..n).map(|i| scn.metric.boundary(i)).collect(),
    )?;
    let field = Arc::new(combined);
    let log_total: Vec<f64> = scalars
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.is_finite() {
                s + field.half_log_det(i)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let pi = HyperDistribution::from_log_total(field, log_total, 1.0)?;
    let excluded_fraction = excluded as f64 / n as f64;
    Ok(BathReport {
        pi,
        excluded_fraction,
        warned: excluded_fraction > 0.1,
    })
}

/// Total variation distance between two densities on the same grid.
pub fn total_variation(a: &HyperDistribution, b: &HyperDistribution) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::Invalid {
            module: "fluct",
            reason: "total variation needs a common grid".into(),
        });
    }
    let w = a.grid().weights();
    Ok((0..w.len())
        .map(|i| 0.5 * w[i] * (a.pi()[i] - b.pi()[i]).abs())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{identity_observable, linspace_axis, two_state};
    use approx::assert_abs_diff_eq;

    fn quadratic_scenario(lambda0: f64) -> FluctuationScenario {
        // S = -theta^2/2, so lambda = -theta and g = 1: the fluctuation
        // density is exactly Gaussian with mean -lambda0, variance 1
        let axis = linspace_axis("A", -6.0, 6.0, 1201, -10.0, 10.0).unwrap();
        let grid = ParameterGrid::new(vec![axis]).unwrap();
        let entropy: Vec<f64> = (0..grid.len()).map(|i| -0.5 * grid.node(i)[0].powi(2)).collect();
        let lambdas: Vec<Vec<f64>> = (0..grid.len()).map(|i| vec![-grid.node(i)[0]]).collect();
        let metrics = vec![Matrix::scalar(1.0); grid.len()];
        FluctuationScenario::synthetic(grid, entropy, lambdas, metrics, vec![lambda0]).unwrap()
    }

    fn two_state_scenario(lambda0: f64) -> FluctuationScenario {
        let space = two_state();
        let obs = identity_observable(&space, "A");
        let axis = linspace_axis("A", 0.05, 0.95, 19, 0.0, 1.0).unwrap();
        FluctuationScenario::build(
            &space,
            vec![obs],
            vec![lambda0],
            ParameterGrid::new(vec![axis]).unwrap(),
            SolverOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_profile_gives_exact_gaussian_fluctuations() {
        let scn = quadratic_scenario(0.5);
        let pi = fluctuation_distribution(&scn).unwrap();
        let m = fluctuation_moments(&scn, &pi).unwrap();
        assert_abs_diff_eq!(m.mean_a[0], -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(m.cov_a.get(0, 0), 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(m.mean_lambda[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(m.cov_lambda.get(0, 0), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn quadratic_profile_correlation_routes_agree() {
        let scn = quadratic_scenario(0.5);
        let report = lambda_a_correlation(&scn, 1e-5).unwrap();
        assert_abs_diff_eq!(report.direct.get(0, 0), -1.0, epsilon = 1e-5);
        assert!(report.canonical_deviation <= 1e-5);
        assert!(report.max_disagreement <= 1e-6);
    }

    #[test]
    fn quadratic_profile_matches_its_gaussian_reference() {
        let scn = quadratic_scenario(0.5);
        let report = fluctuation_report(&scn, 1e-5).unwrap();
        assert_abs_diff_eq!(report.gaussian.peak[0], -0.5, epsilon = 1e-9);
        assert!(report.gaussian.tv <= 1e-9);
        assert!(report.gaussian.unimodal);
        assert!(report.stationarity_gap <= report.stationarity_bound + 1e-12);
    }

    #[test]
    fn two_state_scenario_tabulates_closed_forms() {
        let lambda0 = -(7.0f64 / 3.0).ln();
        let scn = two_state_scenario(lambda0);
        // node 9 is A = 0.5, node 13 is A = 0.7
        assert_abs_diff_eq!(scn.profile().value(9), 2.0f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(scn.lambda(13)[0], lambda0, epsilon = 1e-9);
        assert_abs_diff_eq!(scn.metric().metric(9).get(0, 0), 4.0, epsilon = 1e-5);
        let pi = fluctuation_distribution(&scn).unwrap();
        let peak_node = (0..scn.grid().len())
            .max_by(|a, b| pi.scalar_log_density(*a).total_cmp(&pi.scalar_log_density(*b)))
            .unwrap();
        assert_eq!(peak_node, 13);
        let peak = refined_peak(&pi);
        assert_abs_diff_eq!(peak[0], 0.7, epsilon = 2e-3);
    }

    #[test]
    fn correlation_rejects_an_unreachable_tolerance() {
        let scn = two_state_scenario(-(7.0f64 / 3.0).ln());
        // a single unit has a visible peak-offset product; demanding
        // near-exact route agreement must fail loudly
        let err = lambda_a_correlation(&scn, 1e-15).unwrap_err();
        assert!(matches!(err, Error::RouteDisagreement { .. }));
        assert!(lambda_a_correlation(&scn, 0.1).is_ok());
    }

    #[test]
    fn bath_density_is_symmetric_when_system_equals_bath() {
        let space = two_state();
        let obs = identity_observable(&space, "A");
        let axis = linspace_axis("A", 0.1, 0.7, 61, 0.0, 1.0).unwrap();
        let scn = FluctuationScenario::build(
            &space,
            vec![obs.clone()],
            vec![0.0],
            ParameterGrid::new(vec![axis]).unwrap(),
            SolverOptions::default(),
        )
        .unwrap();
        let bath = BathSpec::new(space, vec![obs], vec![0.8], SolverOptions::default()).unwrap();
        let report = finite_bath_distribution(&scn, &bath).unwrap();
        assert_eq!(report.excluded_fraction, 0.0);
        assert!(!report.warned);
        // system and bath are identical and the grid is symmetric about
        // A_total/2, so the density must be symmetric under reflection
        let p = report.pi.pi();
        for i in 0..p.len() {
            let j = p.len() - 1 - i;
            assert_abs_diff_eq!(p[i], p[j], epsilon = 1e-6 * p[i].abs().max(1e-300));
        }
    }

    #[test]
    fn bath_excludes_infeasible_shares() {
        let space = two_state();
        let obs = identity_observable(&space, "A");
        let axis = linspace_axis("A", 0.1, 0.7, 61, 0.0, 1.0).unwrap();
        let scn = FluctuationScenario::build(
            &space,
            vec![obs.clone()],
            vec![0.0],
            ParameterGrid::new(vec![axis]).unwrap(),
            SolverOptions::default(),
        )
        .unwrap();
        // total 1.2 forces the bath share above 1 for A <= 0.2: the first
        // 11 nodes drop out, which is past the warning threshold
        let bath = BathSpec::new(
            space.clone(),
            vec![obs.clone()],
            vec![1.2],
            SolverOptions::default(),
        )
        .unwrap();
        let report = finite_bath_distribution(&scn, &bath).unwrap();
        assert_abs_diff_eq!(report.excluded_fraction, 11.0 / 61.0, epsilon = 1e-12);
        assert!(report.warned);
        for i in 0..11 {
            assert_eq!(report.pi.pi()[i], 0.0);
        }
        let all_out = BathSpec::new(space, vec![obs], vec![3.0], SolverOptions::default()).unwrap();
        let err = finite_bath_distribution(&scn, &all_out).unwrap_err();
        assert!(matches!(err, Error::DegenerateDensity { .. }));
    }

    #[test]
    fn bimodal_density_is_flagged() {
        let axis = linspace_axis("A", 1.0, 5.0, 5, 0.0, 6.0).unwrap();
        let grid = ParameterGrid::new(vec![axis]).unwrap();
        let entropy = vec![0.0, 2.0, 0.0, 2.0, 0.0];
        let lambdas = vec![vec![0.0]; 5];
        let metrics = vec![Matrix::scalar(1.0); 5];
        let scn =
            FluctuationScenario::synthetic(grid, entropy, lambdas, metrics, vec![0.0]).unwrap();
        let pi = fluctuation_distribution(&scn).unwrap();
        let report = gaussian_comparison(&scn, &pi).unwrap();
        assert!(!report.unimodal);
    }

    #[test]
    fn total_variation_vanishes_on_identical_densities() {
        let scn = quadratic_scenario(0.5);
        let a = fluctuation_distribution(&scn).unwrap();
        let b = fluctuation_distribution(&scn).unwrap();
        assert_eq!(total_variation(&a, &b).unwrap(), 0.0);
        let other = quadratic_scenario(0.0);
        let c = fluctuation_distribution(&other).unwrap();
        assert!(total_variation(&a, &c).unwrap() > 0.1);
    }
}
