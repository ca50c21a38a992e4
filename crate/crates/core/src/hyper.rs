//! Entropy-weighted distributions on parameter space.
//!
//! Given an entropy profile S(theta) and a metric field g(theta) on a grid,
//! the extended maximum-entropy posterior is
//!     pi(theta) ~ exp(S(theta)) sqrt(det g(theta)),
//! the alpha=1 member of the entropic prior family
//!     pi(theta, alpha) ~ exp(alpha S(theta)) sqrt(det g(theta)).
//! pi is stored as a total density with respect to d theta, volume factor
//! included, so sum_i pi_i w_i = 1 on the grid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{fisher_metric, par_nodes, FamilyKind, MetricField, ModelFamily, ParameterGrid};
use crate::linalg::Matrix;
use crate::numerics::log_dot_exp;
use crate::space::relative_entropy;

/// Entropy values S(theta) tabulated over a parameter grid.
#[derive(Debug, Clone)]
pub struct EntropyProfile {
    grid: ParameterGrid,
    values: Vec<f64>,
}

impl EntropyProfile {
    pub fn new(grid: ParameterGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Invalid {
                module: "hyper",
                reason: format!("{} entropy values on a grid of {} nodes", values.len(), grid.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid {
                module: "hyper",
                reason: "entropy values must be finite".into(),
            });
        }
        Ok(EntropyProfile { grid, values })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }
}

/// Entropy profile of a family over its grid. Target-parametrized families
/// get the solver's entropy (already Legendre-checked); everything else is
/// the relative entropy of the evaluated distribution.
pub fn entropy_profile(family: &ModelFamily) -> Result<EntropyProfile> {
    let grid = family.grid().clone();
    let values = par_nodes(grid.len(), |i| {
        let theta = grid.node(i);
        match family.kind() {
            FamilyKind::ByTarget => Ok(family.solve_at(&theta)?.entropy),
            _ => relative_entropy(&family.evaluate(&theta)?),
        }
    })?;
    EntropyProfile::new(grid, values)
}

/// Normalized distribution over parameter-grid nodes. The density is total:
/// the sqrt(det g) volume factor is already inside `pi`, and
/// sum_i pi_i w_i = 1 for the grid's quadrature weights w.
#[derive(Debug, Clone)]
pub struct HyperDistribution {
    metric: Arc<MetricField>,
    pi: Vec<f64>,
    log_pi: Vec<f64>,
    log_zeta: f64,
    alpha: f64,
}

impl HyperDistribution {
    /// Normalize exp(log_total) over the metric's grid. `log_total` is the
    /// log of the unnormalized total density (volume factor included).
    pub(crate) fn from_log_total(
        metric: Arc<MetricField>,
        log_total: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let grid = metric.grid();
        if log_total.len() != grid.len() {
            return Err(Error::Invalid {
                module: "hyper",
                reason: format!(
                    "{} density values on a grid of {} nodes",
                    log_total.len(),
                    grid.len()
                ),
            });
        }
        if log_total.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Invalid {
                module: "hyper",
                reason: "log density must be finite or -inf".into(),
            });
        }
        let w = grid.weights();
        let log_zeta = log_dot_exp(&log_total, &w);
        if !log_zeta.is_finite() {
            return Err(Error::DegenerateDensity {
                module: "hyper",
                reason: format!("normalizer is exp({log_zeta})"),
            });
        }
        let log_pi: Vec<f64> = log_total.iter().map(|lt| lt - log_zeta).collect();
        let pi: Vec<f64> = log_pi.iter().map(|lp| lp.exp()).collect();
        Ok(HyperDistribution {
            metric,
            pi,
            log_pi,
            log_zeta,
            alpha,
        })
    }

    /// Normalize exp(log_scalar) sqrt(det g): the scalar part of the density
    /// is supplied, the volume factor comes from the metric.
    pub(crate) fn from_log_scalar(
        metric: Arc<MetricField>,
        log_scalar: &[f64],
        alpha: f64,
    ) -> Result<Self> {
        let log_total: Vec<f64> = log_scalar
            .iter()
            .enumerate()
            .map(|(i, ls)| ls + metric.half_log_det(i))
            .collect();
        Self::from_log_total(metric, log_total, alpha)
    }

    pub fn grid(&self) -> &ParameterGrid {
        self.metric.grid()
    }

    pub fn metric(&self) -> &Arc<MetricField> {
        &self.metric
    }

    /// Total density per node (volume factor included).
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn log_pi(&self) -> &[f64] {
        &self.log_pi
    }

    /// Log of the grid normalizer of the unnormalized density this
    /// distribution was built from.
    pub fn log_zeta(&self) -> f64 {
        self.log_zeta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Scalar part pi / sqrt(det g); 0 where the density vanishes.
    pub fn scalar_density(&self, node: usize) -> f64 {
        if self.pi[node] == 0.0 {
            return 0.0;
        }
        self.pi[node] / self.metric.sqrt_det(node)
    }

    /// log(pi / sqrt(det g)), -inf where pi vanishes. Peaks of this scalar
    /// field are stationary points of the exponent alone.
    pub fn scalar_log_density(&self, node: usize) -> f64 {
        if self.pi[node] == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_pi[node] - self.metric.half_log_det(node)
    }

    pub fn argmax(&self) -> usize {
        self.pi
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Mean of theta under pi, one entry per axis.
    pub fn mean(&self) -> Vec<f64> {
        let grid = self.grid();
        let d = grid.dim();
        let mut m = vec![0.0; d];
        for i in 0..grid.len() {
            let mass = self.pi[i] * grid.weight(i);
            if mass == 0.0 {
                continue;
            }
            for (j, t) in grid.node(i).iter().enumerate() {
                m[j] += mass * t;
            }
        }
        m
    }

    /// Covariance of theta under pi.
    pub fn covariance(&self) -> Matrix {
        let grid = self.grid();
        let d = grid.dim();
        let mean = self.mean();
        let mut c = Matrix::zeros(d);
        for i in 0..grid.len() {
            let mass = self.pi[i] * grid.weight(i);
            if mass == 0.0 {
                continue;
            }
            let theta = grid.node(i);
            for a in 0..d {
                for b in a..d {
                    let v = c.get(a, b) + mass * (theta[a] - mean[a]) * (theta[b] - mean[b]);
                    c.set(a, b, v);
                    c.set(b, a, v);
                }
            }
        }
        c
    }

    /// Probability of the axis-aligned box [lo, hi], summed over the grid
    /// nodes inside it (inclusive, with a relative slack of 1e-12 so nodes
    /// sitting exactly on the box faces count).
    pub fn interval_probability(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let grid = self.grid();
        let d = grid.dim();
        if lo.len() != d || hi.len() != d {
            return Err(Error::Invalid {
                module: "hyper",
                reason: format!("box bounds of length {}/{} on {d} axes", lo.len(), hi.len()),
            });
        }
        let mut total = 0.0;
        for i in 0..grid.len() {
            let theta = grid.node(i);
            let inside = (0..d).all(|j| {
                let eps = 1e-12 * lo[j].abs().max(hi[j].abs()).max(1.0);
                theta[j] >= lo[j] - eps && theta[j] <= hi[j] + eps
            });
            if inside {
                total += self.pi[i] * grid.weight(i);
            }
        }
        Ok(total)
    }
}

fn require_same_grid(a: &ParameterGrid, b: &ParameterGrid, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Invalid {
            module: "hyper",
            reason: format!("{what} live on different grids"),
        });
    }
    Ok(())
}

/// Member alpha of the entropic prior family:
/// pi(theta, alpha) ~ exp(alpha S(theta)) sqrt(det g(theta)).
pub fn entropic_prior(
    profile: &EntropyProfile,
    metric: Arc<MetricField>,
    alpha: f64,
) -> Result<HyperDistribution> {
    require_same_grid(profile.grid(), metric.grid(), "entropy profile and metric")?;
    if !alpha.is_finite() {
        return Err(Error::Invalid {
            module: "hyper",
            reason: format!("alpha must be finite, got {alpha}"),
        });
    }
    let log_scalar: Vec<f64> = profile.values().iter().map(|s| alpha * s).collect();
    HyperDistribution::from_log_scalar(metric, &log_scalar, alpha)
}

/// The extended maximum-entropy posterior: the alpha = 1 entropic prior.
pub fn extended_me_posterior(
    profile: &EntropyProfile,
    metric: Arc<MetricField>,
) -> Result<HyperDistribution> {
    entropic_prior(profile, metric, 1.0)
}

/// The sigma entropy of a hyperdistribution:
/// sigma[pi] = -sum_i w_i pi_i log(pi_i / sqrt(det g_i)) + sum_i w_i pi_i S_i.
///
/// On a single-node grid there is no volume to integrate over and the value
/// reported is S(theta_0) by convention.
pub fn sigma_entropy(h: &HyperDistribution, profile: &EntropyProfile) -> Result<f64> {
    require_same_grid(h.grid(), profile.grid(), "hyperdistribution and entropy profile")?;
    let grid = h.grid();
    if grid.len() == 1 {
        return Ok(profile.value(0));
    }
    let mut sigma = 0.0;
    for i in 0..grid.len() {
        let mass = h.pi()[i] * grid.weight(i);
        if mass == 0.0 {
            continue;
        }
        let log_scalar = h.scalar_log_density(i);
        if !log_scalar.is_finite() {
            return Err(Error::Numerical {
                module: "hyper",
                reason: format!("density is positive at node {i} where sqrt(det g) vanishes"),
            });
        }
        sigma += mass * (profile.value(i) - log_scalar);
    }
    Ok(sigma)
}

/// Sigma entropies over a sweep of alpha values, with alpha = 1 always
/// included, and flags for whether alpha = 1 attains the maximum.
#[derive(Debug, Clone)]
pub struct AlphaReport {
    /// (alpha, sigma) pairs in evaluation order.
    pub entries: Vec<(f64, f64)>,
    pub sigma_at_one: f64,
    /// sigma(1) >= sigma(alpha) for every swept alpha, up to roundoff slack.
    pub one_is_maximal: bool,
    /// Some alpha != 1 ties sigma(1) within the slack.
    pub tie: bool,
}

pub fn alpha_optimality_check(
    profile: &EntropyProfile,
    metric: Arc<MetricField>,
    alphas: &[f64],
) -> Result<AlphaReport> {
    let mut sweep: Vec<f64> = alphas.to_vec();
    if !sweep.iter().any(|&a| a == 1.0) {
        sweep.push(1.0);
    }
    let mut entries = Vec::with_capacity(sweep.len());
    let mut sigma_at_one = f64::NAN;
    for &alpha in &sweep {
        let h = entropic_prior(profile, metric.clone(), alpha)?;
        let sigma = sigma_entropy(&h, profile)?;
        if alpha == 1.0 {
            sigma_at_one = sigma;
        }
        entries.push((alpha, sigma));
    }
    let slack = 1e-12 * sigma_at_one.abs().max(1.0);
    let one_is_maximal = entries.iter().all(|&(_, s)| s <= sigma_at_one + slack);
    let tie = entries
        .iter()
        .any(|&(a, s)| a != 1.0 && (s - sigma_at_one).abs() <= slack);
    Ok(AlphaReport {
        entries,
        sigma_at_one,
        one_is_maximal,
        tie,
    })
}

/// n independent repetitions of a family: the product family on X^n with
/// the same parameter grid, its entropy profile, metric, and naive prior
/// pi^(n) ~ exp(n S) sqrt(det n g).
#[derive(Debug, Clone)]
pub struct RepeatReport {
    pub family: ModelFamily,
    pub profile: EntropyProfile,
    pub metric: MetricField,
    pub prior: HyperDistribution,
    /// max_i |S^(n)_i - n S^(1)_i|
    pub profile_deviation: f64,
    /// max over nodes and entries of |g^(n) - n g^(1)| (same scoring scheme
    /// on both sides so the finite-difference bias cancels)
    pub metric_deviation: f64,
}

/// Build the n-fold repetition of a family and verify the additivity
/// identities S^(n) = n S^(1) and g^(n) = n g^(1) on the grid; both are
/// asserted, not assumed, and a violation is a numerical failure.
pub fn repeat_family(family: &ModelFamily, n: usize) -> Result<RepeatReport> {
    if n == 0 {
        return Err(Error::Invalid {
            module: "hyper",
            reason: "repetition count must be at least 1".into(),
        });
    }
    let base_space = family.space();
    let k = base_space.len() as u128;
    let total = k.checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > 1_000_000 {
        return Err(Error::Resource {
            module: "hyper",
            reason: format!("product space would have {total} points, cap is 1e6"),
        });
    }
    let total = total as usize;
    let dim = base_space.dim();

    // Product space: point j decomposes into base indices digit by digit,
    // first factor slowest.
    let digits = |j: usize| -> Vec<usize> {
        let mut rem = j;
        let mut idx = vec![0usize; n];
        for i in (0..n).rev() {
            idx[i] = rem % base_space.len();
            rem /= base_space.len();
        }
        idx
    };
    let mut coords = Vec::with_capacity(total * dim * n);
    let mut dx = Vec::with_capacity(total);
    let mut measure = Vec::with_capacity(total);
    for j in 0..total {
        let idx = digits(j);
        let mut vol = 1.0;
        let mut m = 1.0;
        for &ki in &idx {
            coords.extend_from_slice(base_space.point(ki));
            vol *= base_space.cell_volume()[ki];
            m *= base_space.measure()[ki];
        }
        dx.push(vol);
        measure.push(m);
    }
    let product_space = crate::space::SampleSpace::with_dim(coords, dim * n, dx, measure)?;

    let base = family.clone();
    let ps = product_space.clone();
    let reps = n;
    let product_family = ModelFamily::tabulated(
        product_space.clone(),
        family.grid().clone(),
        move |theta| {
            let p = base.evaluate(theta)?;
            let kb = p.space().len();
            let total = kb.pow(reps as u32);
            let mut density = Vec::with_capacity(total);
            for j in 0..total {
                let mut rem = j;
                let mut prod = 1.0;
                for _ in 0..reps {
                    prod *= p.density()[rem % kb];
                    rem /= kb;
                }
                density.push(prod);
            }
            crate::space::Distribution::new(ps.clone(), density)
        },
    )?;

    let profile_n = entropy_profile(&product_family)?;
    let metric_n = fisher_metric(&product_family)?;

    // Reference: the base family scored by the same finite-difference rule,
    // so the additivity comparison is free of discretization bias.
    let base_fd = family.as_tabulated();
    let profile_1 = entropy_profile(&base_fd)?;
    let metric_1 = fisher_metric(&base_fd)?;

    let nf = n as f64;
    let mut profile_dev = 0.0f64;
    for i in 0..profile_n.grid().len() {
        profile_dev = profile_dev.max((profile_n.value(i) - nf * profile_1.value(i)).abs());
    }
    let mut metric_dev = 0.0f64;
    let d = metric_n.dim();
    for i in 0..metric_n.grid().len() {
        for a in 0..d {
            for b in 0..d {
                metric_dev = metric_dev.max(
                    (metric_n.metric(i).get(a, b) - nf * metric_1.metric(i).get(a, b)).abs(),
                );
            }
        }
    }
    let profile_scale: f64 = profile_1
        .values()
        .iter()
        .fold(1.0f64, |m, s| m.max(nf * s.abs()));
    let metric_scale: f64 = (0..metric_1.grid().len())
        .map(|i| metric_1.metric(i).max_abs() * nf)
        .fold(1.0f64, f64::max);
    if profile_dev > 1e-9 * profile_scale {
        return Err(Error::Numerical {
            module: "hyper",
            reason: format!("entropy additivity violated: deviation {profile_dev:.3e}"),
        });
    }
    if metric_dev > 1e-9 * metric_scale {
        return Err(Error::Numerical {
            module: "hyper",
            reason: format!("metric additivity violated: deviation {metric_dev:.3e}"),
        });
    }

    let prior = extended_me_posterior(&profile_n, Arc::new(metric_n.clone()))?;
    Ok(RepeatReport {
        family: product_family,
        profile: profile_n,
        metric: metric_n,
        prior,
        profile_deviation: profile_dev,
        metric_deviation: metric_dev,
    })
}

/// Prior over theta for n repetitions under the constraint that the joint
/// distribution of (x_1, theta) marginalizes to the single-experiment joint.
/// The per-point likelihood factor cancels pointwise in the marginalization
/// identity; what remains numerically is the sample-space mass at each
/// theta, so the returned prior is pi^(1)(theta) / mass(theta) renormalized
/// and the reported deviation is max_theta |mass(theta) - 1|.
pub fn consistency_constrained_prior(
    family: &ModelFamily,
    n: usize,
) -> Result<(HyperDistribution, f64)> {
    if n < 2 {
        return Err(Error::Invalid {
            module: "hyper",
            reason: "the marginalization constraint needs n >= 2 repetitions".into(),
        });
    }
    let profile = entropy_profile(family)?;
    let metric = Arc::new(fisher_metric(family)?);
    let grid = family.grid().clone();
    let masses = par_nodes(grid.len(), |i| {
        let theta = grid.node(i);
        let p = family.evaluate(&theta)?;
        let mass: f64 = p
            .density()
            .iter()
            .zip(p.space().cell_volume())
            .map(|(pk, dxk)| pk * dxk)
            .sum();
        Ok(mass)
    })?;
    let deviation = masses
        .iter()
        .fold(0.0f64, |d, &m| d.max((m - 1.0).abs()));
    let log_scalar: Vec<f64> = profile
        .values()
        .iter()
        .zip(&masses)
        .map(|(s, m)| s - m.ln())
        .collect();
    let prior = HyperDistribution::from_log_scalar(metric, &log_scalar, 1.0)?;
    Ok((prior, deviation))
}

/// Bayes update of a prior over theta from i.i.d. observations. Each
/// observation must coincide with a point of the family's one-dimensional
/// sample space; the likelihood is the density at that point.
pub fn bayes_update(
    prior: &HyperDistribution,
    family: &ModelFamily,
    observations: &[f64],
) -> Result<HyperDistribution> {
    require_same_grid(prior.grid(), family.grid(), "prior and family")?;
    if family.space().dim() != 1 {
        return Err(Error::Invalid {
            module: "hyper",
            reason: "bayes_update expects a one-dimensional sample space".into(),
        });
    }
    if observations.is_empty() {
        return Ok(prior.clone());
    }
    let space = family.space();
    let mut counts: Vec<usize> = vec![0; space.len()];
    for &obs in observations {
        let tol = 1e-9 * obs.abs().max(1.0);
        let found = (0..space.len()).find(|&k| (space.point(k)[0] - obs).abs() <= tol);
        match found {
            Some(k) => counts[k] += 1,
            None => {
                return Err(Error::Invalid {
                    module: "hyper",
                    reason: format!("observation {obs} is not a point of the sample space"),
                })
            }
        }
    }
    let grid = prior.grid().clone();
    let log_lik = par_nodes(grid.len(), |i| {
        let p = family.evaluate(&grid.node(i))?;
        let mut ll = 0.0f64;
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pk = p.density()[k];
            if pk == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += c as f64 * pk.ln();
        }
        Ok(ll)
    })?;
    let log_total: Vec<f64> = prior
        .log_pi()
        .iter()
        .zip(&log_lik)
        .map(|(lp, ll)| lp + ll)
        .collect();
    HyperDistribution::from_log_total(prior.metric().clone(), log_total, prior.alpha())
        .map_err(|e| match e {
            Error::DegenerateDensity { module, .. } => Error::DegenerateDensity {
                module,
                reason: "observations have zero likelihood at every grid node".into(),
            },
            other => other,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridAxis, ParameterGrid};
    use crate::solver::SolverOptions;
    use crate::space::{Distribution, Observable, SampleSpace};
    use approx::assert_abs_diff_eq;

    fn two_state() -> Arc<SampleSpace> {
        SampleSpace::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    fn bernoulli_family(nodes: Vec<f64>) -> ModelFamily {
        let space = two_state();
        let obs = Observable::new(space.clone(), "a", vec![0.0, 1.0]).unwrap();
        let grid =
            ParameterGrid::new(vec![GridAxis::from_nodes("A", nodes, 0.0, 1.0).unwrap()]).unwrap();
        ModelFamily::by_target(space, vec![obs], grid, SolverOptions::default()).unwrap()
    }

    fn single_node_family(node: f64, width: f64) -> ModelFamily {
        let space = two_state();
        let obs = Observable::new(space.clone(), "a", vec![0.0, 1.0]).unwrap();
        let grid = ParameterGrid::new(vec![
            GridAxis::single("A", node, width, 0.0, 1.0).unwrap()
        ])
        .unwrap();
        ModelFamily::by_target(space, vec![obs], grid, SolverOptions::default()).unwrap()
    }

    #[test]
    fn bernoulli_profile_peaks_at_log_two() {
        let fam = bernoulli_family(vec![0.3, 0.5, 0.7]);
        let profile = entropy_profile(&fam).unwrap();
        assert_abs_diff_eq!(profile.value(1), (2.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(profile.value(0), 0.6108643020548935, epsilon = 1e-10);
        assert_abs_diff_eq!(profile.value(2), 0.6108643020548935, epsilon = 1e-10);
    }

    #[test]
    fn single_node_posterior_is_inverse_width() {
        // with one node, pi must integrate to 1 over its cell: pi = 1/width
        let fam = single_node_family(0.5, 0.1);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let h = extended_me_posterior(&profile, metric).unwrap();
        assert_abs_diff_eq!(h.pi()[0], 10.0, epsilon = 1e-10);
        // zeta = width * exp(S) sqrt(g) = 0.1 * 2 * 2
        assert_abs_diff_eq!(h.log_zeta(), (0.4f64).ln(), epsilon = 1e-10);
    }

    #[test]
    fn total_scalar_split_reproduces_volume_factor() {
        let fam = single_node_family(0.5, 0.1);
        // e^S sqrt(g) at A = 0.5 is 2 * 2 = 4
        let profile = entropy_profile(&fam).unwrap();
        let metric = fisher_metric(&fam).unwrap();
        let unnorm = profile.value(0).exp() * metric.sqrt_det(0);
        assert_abs_diff_eq!(unnorm, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn sigma_on_single_node_grid_is_entropy_at_node() {
        let fam = single_node_family(0.5, 0.1);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let h = extended_me_posterior(&profile, metric).unwrap();
        let sigma = sigma_entropy(&h, &profile).unwrap();
        assert_abs_diff_eq!(sigma, (2.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn sigma_of_the_posterior_equals_log_zeta() {
        let nodes: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
        let fam = bernoulli_family(nodes);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let h = extended_me_posterior(&profile, metric).unwrap();
        let sigma = sigma_entropy(&h, &profile).unwrap();
        assert_abs_diff_eq!(sigma, h.log_zeta(), epsilon = 1e-12);
    }

    #[test]
    fn alpha_zero_prior_is_proportional_to_volume() {
        let nodes: Vec<f64> = (1..=9).map(|k| k as f64 * 0.1).collect();
        let fam = bernoulli_family(nodes);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let h = entropic_prior(&profile, metric.clone(), 0.0).unwrap();
        let ratio0 = h.pi()[0] / metric.sqrt_det(0);
        for i in 1..h.pi().len() {
            assert_abs_diff_eq!(h.pi()[i] / metric.sqrt_det(i), ratio0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigma_alpha_identity_holds_off_one() {
        // sigma(alpha) = log zeta(alpha) + (1 - alpha) <S>_alpha
        let nodes: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
        let fam = bernoulli_family(nodes);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        for alpha in [0.5, 2.0] {
            let h = entropic_prior(&profile, metric.clone(), alpha).unwrap();
            let sigma = sigma_entropy(&h, &profile).unwrap();
            let grid = h.grid();
            let mean_s: f64 = (0..grid.len())
                .map(|i| h.pi()[i] * grid.weight(i) * profile.value(i))
                .sum();
            assert_abs_diff_eq!(
                sigma,
                h.log_zeta() + (1.0 - alpha) * mean_s,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn alpha_one_wins_the_sweep() {
        let nodes: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
        let fam = bernoulli_family(nodes);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let report = alpha_optimality_check(&profile, metric, &[0.5, 2.0]).unwrap();
        assert!(report.one_is_maximal);
        assert!(!report.tie);
        for (alpha, sigma) in &report.entries {
            if *alpha != 1.0 {
                assert!(report.sigma_at_one > *sigma);
            }
        }
    }

    #[test]
    fn repeat_additivity_holds_on_bernoulli() {
        let nodes: Vec<f64> = (2..=8).map(|k| k as f64 * 0.1).collect();
        let fam = bernoulli_family(nodes);
        let report = repeat_family(&fam, 2).unwrap();
        assert!(report.profile_deviation <= 1e-9);
        assert!(report.metric_deviation <= 1e-9);
        assert_eq!(report.family.space().len(), 4);
    }

    #[test]
    fn naive_repeat_prior_concentrates() {
        let nodes: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
        let fam = bernoulli_family(nodes);
        let var1 = repeat_family(&fam, 1).unwrap().prior.covariance().get(0, 0);
        let var2 = repeat_family(&fam, 2).unwrap().prior.covariance().get(0, 0);
        assert!(var2 < var1, "var2 = {var2}, var1 = {var1}");
    }

    #[test]
    fn repeat_cap_is_enforced() {
        let space = SampleSpace::new(
            (0..=100).map(|k| k as f64).collect(),
            vec![1.0; 101],
            vec![1.0; 101],
        )
        .unwrap();
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "t",
            vec![0.4, 0.6],
            0.0,
            1.0,
        )
        .unwrap()])
        .unwrap();
        let sp = space.clone();
        let fam = ModelFamily::tabulated(space, grid, move |_| {
            Distribution::normalize(sp.clone(), vec![1.0; 101])
        })
        .unwrap();
        assert!(matches!(
            repeat_family(&fam, 3),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn constrained_prior_is_the_single_experiment_posterior() {
        let nodes: Vec<f64> = (1..=9).map(|k| k as f64 * 0.1).collect();
        let fam = bernoulli_family(nodes);
        let (constrained, deviation) = consistency_constrained_prior(&fam, 2).unwrap();
        assert!(deviation <= 1e-12, "mass deviation {deviation}");
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let single = extended_me_posterior(&profile, metric).unwrap();
        for i in 0..constrained.pi().len() {
            assert_abs_diff_eq!(constrained.pi()[i], single.pi()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn bayes_update_moves_the_mode_to_the_frequency() {
        let nodes: Vec<f64> = (1..=999).map(|k| 0.001 * k as f64).collect();
        let space = two_state();
        let grid =
            ParameterGrid::new(vec![GridAxis::from_nodes("A", nodes, 0.0, 1.0).unwrap()])
                .unwrap();
        let sp = space.clone();
        let fam = ModelFamily::tabulated(space, grid, move |theta| {
            Distribution::new(sp.clone(), vec![1.0 - theta[0], theta[0]])
        })
        .unwrap();
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let prior = extended_me_posterior(&profile, metric).unwrap();
        let mut obs = vec![1.0; 60];
        obs.extend(vec![0.0; 40]);
        let post = bayes_update(&prior, &fam, &obs).unwrap();
        let mode = post.grid().node(post.argmax())[0];
        assert_abs_diff_eq!(mode, 0.6, epsilon = 1e-9);
        // posterior is tighter than the prior
        assert!(post.covariance().get(0, 0) < prior.covariance().get(0, 0));
    }

    #[test]
    fn bayes_update_rejects_off_grid_observations() {
        let fam = bernoulli_family(vec![0.3, 0.5, 0.7]);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let prior = extended_me_posterior(&profile, metric).unwrap();
        assert!(matches!(
            bayes_update(&prior, &fam, &[0.25]),
            Err(Error::Invalid { .. })
        ));
    }

    #[test]
    fn bayes_update_with_impossible_data_is_degenerate() {
        let space = SampleSpace::new(vec![0.0, 1.0, 2.0], vec![1.0; 3], vec![1.0; 3]).unwrap();
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "t",
            vec![0.3, 0.7],
            0.0,
            1.0,
        )
        .unwrap()])
        .unwrap();
        let sp = space.clone();
        let fam = ModelFamily::tabulated(space, grid, move |theta| {
            // point 2 never carries mass
            Distribution::new(sp.clone(), vec![1.0 - theta[0], theta[0], 0.0])
        })
        .unwrap();
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let prior = extended_me_posterior(&profile, metric).unwrap();
        assert!(matches!(
            bayes_update(&prior, &fam, &[2.0]),
            Err(Error::DegenerateDensity { .. })
        ));
    }

    #[test]
    fn bayes_update_without_observations_is_identity() {
        let fam = bernoulli_family(vec![0.3, 0.5, 0.7]);
        let profile = entropy_profile(&fam).unwrap();
        let metric = Arc::new(fisher_metric(&fam).unwrap());
        let prior = extended_me_posterior(&profile, metric).unwrap();
        let same = bayes_update(&prior, &fam, &[]).unwrap();
        for i in 0..prior.pi().len() {
            assert_eq!(prior.pi()[i], same.pi()[i]);
        }
    }
}
