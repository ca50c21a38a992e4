//! Information geometry over parameter grids.
//!
//! A model family assigns a distribution on a fixed sample space to every
//! node of a parameter grid. The Fisher-Rao metric is computed analytically
//! when the family is canonical (the constraint covariance, or its inverse
//! in target coordinates) and by finite-difference score functions when the
//! family is an arbitrary tabulated rule. Keeping both routes alive is the
//! point: they cross-check each other and the test suite asserts their
//! agreement rather than assuming it.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::numerics::trapezoid_weights;
use crate::solver::{
    canonical_distribution, canonical_moments, solve_lagrange, MaxEntSolution, SolverOptions,
};
use crate::space::{ConstraintSet, Distribution, Observable, SampleSpace};

/// One axis of a parameter grid: ordered nodes, quadrature widths, and the
/// open interval the parameter lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    name: String,
    nodes: Vec<f64>,
    widths: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl GridAxis {
    /// Uniform axis with spacing `resolution`, inset from both ends of
    /// (lower, upper) by `offset_frac` of the range. The offset keeps grid
    /// nodes away from boundary singularities of entropy profiles.
    pub fn uniform(
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        resolution: f64,
        offset_frac: f64,
    ) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!("axis bounds ({lower}, {upper}) are not an interval"),
            });
        }
        if !(resolution > 0.0) || !(offset_frac >= 0.0) || !(offset_frac < 0.5) {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!("bad resolution {resolution} or offset fraction {offset_frac}"),
            });
        }
        let range = upper - lower;
        let lo = lower + offset_frac * range;
        let hi = upper - offset_frac * range;
        let count = ((hi - lo) / resolution + 1e-9).floor() as usize + 1;
        let nodes: Vec<f64> = (0..count).map(|k| lo + k as f64 * resolution).collect();
        let widths = trapezoid_weights(&nodes);
        Ok(GridAxis {
            name: name.into(),
            nodes,
            widths,
            lower,
            upper,
        })
    }

    /// Axis from explicit nodes (at least two, strictly increasing, inside
    /// the open bounds). Widths are trapezoidal.
    pub fn from_nodes(
        name: impl Into<String>,
        nodes: Vec<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Invalid {
                module: "geometry",
                reason: "an explicit axis needs at least two nodes (use single() otherwise)".into(),
            });
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|n| !n.is_finite()) {
            return Err(Error::Invalid {
                module: "geometry",
                reason: "axis nodes must be finite and strictly increasing".into(),
            });
        }
        if !(lower < nodes[0]) || !(*nodes.last().unwrap() < upper) {
            return Err(Error::Invalid {
                module: "geometry",
                reason: "axis nodes must lie strictly inside the bounds".into(),
            });
        }
        let widths = trapezoid_weights(&nodes);
        Ok(GridAxis {
            name: name.into(),
            nodes,
            widths,
            lower,
            upper,
        })
    }

    /// Single-node axis with an explicit cell width.
    pub fn single(name: impl Into<String>, node: f64, width: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(lower < node && node < upper) || !(width > 0.0) {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!("single node {node} with width {width} outside ({lower}, {upper})"),
            });
        }
        Ok(GridAxis {
            name: name.into(),
            nodes: vec![node],
            widths: vec![width],
            lower,
            upper,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Tensor-product parameter grid. Nodes are enumerated row-major with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    axes: Vec<GridAxis>,
    strides: Vec<usize>,
    len: usize,
}

impl ParameterGrid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Invalid {
                module: "geometry",
                reason: "a parameter grid needs at least one axis".into(),
            });
        }
        let mut len = 1usize;
        for ax in &axes {
            len = len.checked_mul(ax.len()).ok_or(Error::Resource {
                module: "geometry",
                reason: "grid size overflows".into(),
            })?;
        }
        if len > 100_000_000 {
            return Err(Error::Resource {
                module: "geometry",
                reason: format!("grid has {len} nodes, cap is 1e8"),
            });
        }
        let d = axes.len();
        let mut strides = vec![1usize; d];
        for j in (0..d.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * axes[j + 1].len();
        }
        Ok(ParameterGrid { axes, strides, len })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, j: usize) -> &GridAxis {
        &self.axes[j]
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rem = i;
        self.strides
            .iter()
            .map(|&s| {
                let k = rem / s;
                rem %= s;
                k
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .zip(&self.axes)
            .map(|(&k, ax)| ax.nodes[k])
            .collect()
    }

    /// Quadrature weight of node i: product of the per-axis widths.
    pub fn weight(&self, i: usize) -> f64 {
        self.multi_index(i)
            .iter()
            .zip(&self.axes)
            .map(|(&k, ax)| ax.widths[k])
            .product()
    }

    /// All quadrature weights, node order.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.weight(i)).collect()
    }
}

/// How a family produces a distribution at a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// theta are constraint targets; each node is a maximum-entropy solve.
    ByTarget,
    /// theta are Lagrange multipliers; densities are canonical directly.
    ByMultiplier,
    /// theta indexes an arbitrary user rule.
    Tabulated,
}

type Evaluator = Arc<dyn Fn(&[f64]) -> Result<Distribution> + Send + Sync>;

/// Parametric family of distributions on a common sample space, defined on
/// (and evaluable near) a parameter grid. The evaluator must be continuous
/// in theta between grid nodes; finite-difference routines probe off-node
/// points within the axis bounds.
#[derive(Clone)]
pub struct ModelFamily {
    kind: FamilyKind,
    space: Arc<SampleSpace>,
    grid: ParameterGrid,
    observables: Vec<Observable>,
    options: SolverOptions,
    evaluator: Evaluator,
}

impl std::fmt::Debug for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelFamily")
            .field("kind", &self.kind)
            .field("space_points", &self.space.len())
            .field("grid_nodes", &self.grid.len())
            .finish()
    }
}

impl ModelFamily {
    /// Family parametrized by constraint targets: theta_j = A_j.
    pub fn by_target(
        space: Arc<SampleSpace>,
        observables: Vec<Observable>,
        grid: ParameterGrid,
        options: SolverOptions,
    ) -> Result<Self> {
        if observables.len() != grid.dim() {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!(
                    "{} observables for a grid of dimension {}",
                    observables.len(),
                    grid.dim()
                ),
            });
        }
        for obs in &observables {
            if !SampleSpace::same_space(&space, obs.space()) {
                return Err(Error::SpaceMismatch { op: "model family" });
            }
        }
        let sp = space.clone();
        let obs = observables.clone();
        let opts = options;
        let evaluator: Evaluator = Arc::new(move |theta: &[f64]| {
            let cs = ConstraintSet::new(obs.clone(), theta.to_vec())?;
            Ok(solve_lagrange(&sp, &cs, &opts)?.distribution)
        });
        Ok(ModelFamily {
            kind: FamilyKind::ByTarget,
            space,
            grid,
            observables,
            options,
            evaluator,
        })
    }

    /// Family parametrized by multipliers: theta_j = lambda_j.
    pub fn by_multiplier(
        space: Arc<SampleSpace>,
        observables: Vec<Observable>,
        grid: ParameterGrid,
        options: SolverOptions,
    ) -> Result<Self> {
        if observables.len() != grid.dim() {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!(
                    "{} observables for a grid of dimension {}",
                    observables.len(),
                    grid.dim()
                ),
            });
        }
        for obs in &observables {
            if !SampleSpace::same_space(&space, obs.space()) {
                return Err(Error::SpaceMismatch { op: "model family" });
            }
        }
        let sp = space.clone();
        let obs = observables.clone();
        let evaluator: Evaluator =
            Arc::new(move |theta: &[f64]| canonical_distribution(&sp, &obs, theta));
        Ok(ModelFamily {
            kind: FamilyKind::ByMultiplier,
            space,
            grid,
            observables,
            options,
            evaluator,
        })
    }

    /// Family given by an arbitrary evaluation rule.
    pub fn tabulated(
        space: Arc<SampleSpace>,
        grid: ParameterGrid,
        evaluator: impl Fn(&[f64]) -> Result<Distribution> + Send + Sync + 'static,
    ) -> Result<Self> {
        Ok(ModelFamily {
            kind: FamilyKind::Tabulated,
            space,
            grid,
            observables: Vec::new(),
            options: SolverOptions::default(),
            evaluator: Arc::new(evaluator),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Distribution at an arbitrary parameter value within the axis bounds.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Distribution> {
        if theta.len() != self.grid.dim() {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!(
                    "theta has {} components on a grid of dimension {}",
                    theta.len(),
                    self.grid.dim()
                ),
            });
        }
        let dist = (self.evaluator)(theta)?;
        if !SampleSpace::same_space(&self.space, dist.space()) {
            return Err(Error::SpaceMismatch { op: "family evaluator" });
        }
        Ok(dist)
    }

    /// The same family with its kind demoted to Tabulated, so metric and
    /// profile computations go through the generic finite-difference route.
    /// Useful when two quantities must be compared under the same scoring
    /// scheme so that discretization bias cancels.
    pub fn as_tabulated(&self) -> ModelFamily {
        let mut f = self.clone();
        f.kind = FamilyKind::Tabulated;
        f
    }

    /// Full maximum-entropy solve at a target vector (ByTarget families).
    pub fn solve_at(&self, target: &[f64]) -> Result<MaxEntSolution> {
        if self.kind != FamilyKind::ByTarget {
            return Err(Error::Invalid {
                module: "geometry",
                reason: "solve_at is only defined for target-parametrized families".into(),
            });
        }
        let cs = ConstraintSet::new(self.observables.clone(), target.to_vec())?;
        solve_lagrange(&self.space, &cs, &self.options)
    }
}

/// How a metric field was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMethod {
    /// Closed-form exponential-family covariance (or its inverse).
    AnalyticExponential,
    /// Finite-difference score functions.
    FiniteDifferenceScore,
}

/// Fisher-Rao metric (or an entropy Hessian) tabulated over a grid.
#[derive(Debug, Clone)]
pub struct MetricField {
    grid: ParameterGrid,
    g: Vec<Matrix>,
    det: Vec<f64>,
    method: MetricMethod,
    boundary: Vec<bool>,
}

impl MetricField {
    /// Assemble a field from per-node matrices, computing (and clamping)
    /// the determinants.
    pub(crate) fn from_parts(
        grid: ParameterGrid,
        g: Vec<Matrix>,
        method: MetricMethod,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        let det = g
            .iter()
            .enumerate()
            .map(|(i, m)| clamp_det(m, i))
            .collect::<Result<Vec<f64>>>()?;
        Ok(MetricField {
            grid,
            g,
            det,
            method,
            boundary,
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn metric(&self, node: usize) -> &Matrix {
        &self.g[node]
    }

    pub fn det(&self, node: usize) -> f64 {
        self.det[node]
    }

    pub fn sqrt_det(&self, node: usize) -> f64 {
        self.det[node].max(0.0).sqrt()
    }

    /// 0.5 log det g, -inf where the determinant vanishes.
    pub fn half_log_det(&self, node: usize) -> f64 {
        let d = self.det[node];
        if d > 0.0 {
            0.5 * d.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn method(&self) -> MetricMethod {
        self.method
    }

    /// True when node i needed a one-sided stencil against the axis bounds.
    pub fn boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

/// Determinant with the tiny-negative clamp: roundoff can push a PSD
/// determinant slightly below zero; anything further below is an error.
fn clamp_det(g: &Matrix, node: usize) -> Result<f64> {
    let det = g.det_pivoted();
    if det >= 0.0 {
        return Ok(det);
    }
    let scale = g.max_abs().powi(g.dim() as i32);
    if det >= -1e-12 * scale {
        Ok(0.0)
    } else {
        Err(Error::Numerical {
            module: "geometry",
            reason: format!("metric determinant {det:.6e} at node {node} is negative beyond tolerance"),
        })
    }
}

/// Map node indices in parallel, failing on the first error in node order.
pub(crate) fn par_nodes<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    let mut out = Vec::with_capacity(n);
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

/// Finite-difference step per axis: relative to the axis range with an
/// absolute floor.
fn fd_step(axis: &GridAxis) -> f64 {
    (1e-4 * axis.range()).max(1e-6)
}

/// Fisher-Rao metric of a family over its grid.
///
/// ByMultiplier: g(lambda) = C(lambda), the constraint covariance.
/// ByTarget: g(A) = C^{-1}, the covariance inverse in target coordinates.
/// Tabulated: g_ij = E[s_i s_j] with finite-difference scores
/// s_i = d log p / d theta_i; central stencils inside, one-sided (and
/// flagged) where a stencil would cross the axis bounds.
pub fn fisher_metric(family: &ModelFamily) -> Result<MetricField> {
    let grid = family.grid().clone();
    let n = grid.len();
    match family.kind() {
        FamilyKind::ByMultiplier => {
            let g = par_nodes(n, |i| {
                let theta = grid.node(i);
                Ok(canonical_moments(family.space(), family.observables(), &theta)?.covariance)
            })?;
            MetricField::from_parts(grid, g, MetricMethod::AnalyticExponential, vec![false; n])
        }
        FamilyKind::ByTarget => {
            let g = par_nodes(n, |i| {
                let theta = grid.node(i);
                let sol = family.solve_at(&theta)?;
                sol.covariance.inverse_spd(1e-12).ok_or_else(|| Error::Numerical {
                    module: "geometry",
                    reason: format!("constraint covariance is singular at node {i}"),
                })
            })?;
            MetricField::from_parts(grid, g, MetricMethod::AnalyticExponential, vec![false; n])
        }
        FamilyKind::Tabulated => {
            let d = grid.dim();
            let results = par_nodes(n, |i| {
                let theta = grid.node(i);
                let p0 = family.evaluate(&theta)?;
                let mut scores: Vec<Vec<f64>> = Vec::with_capacity(d);
                let mut one_sided = false;
                for j in 0..d {
                    let (lo, hi) = grid.axis(j).bounds();
                    let h = fd_step(grid.axis(j));
                    let mut plus = theta.clone();
                    let mut minus = theta.clone();
                    plus[j] += h;
                    minus[j] -= h;
                    let (p_a, p_b, denom) = if minus[j] > lo && plus[j] < hi {
                        (family.evaluate(&plus)?, family.evaluate(&minus)?, 2.0 * h)
                    } else if plus[j] < hi {
                        one_sided = true;
                        (family.evaluate(&plus)?, p0.clone(), h)
                    } else if minus[j] > lo {
                        one_sided = true;
                        (p0.clone(), family.evaluate(&minus)?, h)
                    } else {
                        return Err(Error::StencilOutOfBounds { node: i, axis: j });
                    };
                    let s = score_column(i, &p0, &p_a, &p_b, denom)?;
                    scores.push(s);
                }
                let space = p0.space();
                // center the scores: exact scores have zero mean, and
                // subtracting the finite-difference mean keeps the metric
                // additive over independent repetitions, where the O(h^2)
                // score bias would otherwise enter squared n(n-1) times
                let means: Vec<f64> = (0..d)
                    .map(|a| {
                        p0.density()
                            .iter()
                            .enumerate()
                            .filter(|&(_, &p)| p > 0.0)
                            .map(|(k, &p)| p * space.cell_volume()[k] * scores[a][k])
                            .sum()
                    })
                    .collect();
                let mut g = Matrix::zeros(d);
                for a in 0..d {
                    for b in a..d {
                        let v: f64 = p0
                            .density()
                            .iter()
                            .enumerate()
                            .filter(|&(_, &p)| p > 0.0)
                            .map(|(k, &p)| {
                                p * space.cell_volume()[k]
                                    * (scores[a][k] - means[a])
                                    * (scores[b][k] - means[b])
                            })
                            .sum();
                        g.set(a, b, v);
                        g.set(b, a, v);
                    }
                }
                Ok((g, one_sided))
            })?;
            let (g, boundary): (Vec<Matrix>, Vec<bool>) = results.into_iter().unzip();
            MetricField::from_parts(grid, g, MetricMethod::FiniteDifferenceScore, boundary)
        }
    }
}

/// Score column (d log p / d theta_j) for one axis at one node.
/// Points where the density vanishes across the whole stencil contribute
/// nothing (score set to 0 there); support changing across the stencil is
/// an error.
fn score_column(
    node: usize,
    p0: &Distribution,
    p_plus: &Distribution,
    p_minus: &Distribution,
    denom: f64,
) -> Result<Vec<f64>> {
    let n = p0.density().len();
    let mut s = vec![0.0; n];
    for k in 0..n {
        let c0 = p0.density()[k] > 0.0;
        let cp = p_plus.density()[k] > 0.0;
        let cm = p_minus.density()[k] > 0.0;
        if !c0 && !cp && !cm {
            continue;
        }
        if !(c0 && cp && cm) {
            return Err(Error::MixedSupport { node, index: k });
        }
        s[k] = (p_plus.density()[k].ln() - p_minus.density()[k].ln()) / denom;
    }
    Ok(s)
}

/// Strictly monotone map of one axis: u = f(t) with derivative df.
#[derive(Clone)]
pub struct AxisMap {
    forward: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl AxisMap {
    pub fn new(
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AxisMap {
            forward: Arc::new(forward),
            derivative: Arc::new(derivative),
        }
    }

    pub fn identity() -> Self {
        AxisMap::new(|t| t, |_| 1.0)
    }

    pub fn linear(c: f64) -> Self {
        AxisMap::new(move |t| c * t, move |_| c)
    }

    pub fn forward(&self, t: f64) -> f64 {
        (self.forward)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.derivative)(t)
    }
}

/// Pull a metric field back through axis-separable monotone coordinate maps
/// u_j = f_j(theta_j): g'_{jl}(u) = g_{jl}(theta) / (f_j'(theta_j) f_l'(theta_l)),
/// equivalently the metric recomputed in the new coordinates. Decreasing
/// maps reverse the node order of their axis.
pub fn pullback_metric(field: &MetricField, maps: &[AxisMap]) -> Result<MetricField> {
    let grid = field.grid();
    let d = grid.dim();
    if maps.len() != d {
        return Err(Error::Invalid {
            module: "geometry",
            reason: format!("{} axis maps for a grid of dimension {d}", maps.len()),
        });
    }

    let mut new_axes = Vec::with_capacity(d);
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut reversed = vec![false; d];
    for (j, map) in maps.iter().enumerate() {
        let axis = grid.axis(j);
        let mut image: Vec<f64> = axis.nodes().iter().map(|&t| map.forward(t)).collect();
        let dv: Vec<f64> = axis.nodes().iter().map(|&t| map.derivative(t)).collect();
        for (k, &dk) in dv.iter().enumerate() {
            if dk == 0.0 || !dk.is_finite() {
                return Err(Error::SingularJacobian { node: k, axis: j });
            }
        }
        let increasing = image.windows(2).all(|w| w[0] < w[1]);
        let decreasing = image.windows(2).all(|w| w[0] > w[1]);
        if image.len() > 1 && !increasing && !decreasing {
            return Err(Error::Invalid {
                module: "geometry",
                reason: format!("axis map {j} is not strictly monotone on the grid"),
            });
        }
        if decreasing {
            reversed[j] = true;
            image.reverse();
        }
        let (lo, hi) = axis.bounds();
        let (mut b_lo, mut b_hi) = (map.forward(lo), map.forward(hi));
        if b_lo > b_hi {
            std::mem::swap(&mut b_lo, &mut b_hi);
        }
        let new_axis = if image.len() >= 2 {
            GridAxis::from_nodes(axis.name().to_string(), image, b_lo, b_hi)?
        } else {
            let w = axis.widths()[0] * dv[0].abs();
            GridAxis::single(axis.name().to_string(), image[0], w, b_lo, b_hi)?
        };
        new_axes.push(new_axis);
        derivs.push(dv);
    }
    let new_grid = ParameterGrid::new(new_axes)?;

    let n = grid.len();
    let mut g_new: Vec<Option<Matrix>> = vec![None; n];
    let mut boundary_new = vec![false; n];
    for i in 0..n {
        let multi = grid.multi_index(i);
        let new_multi: Vec<usize> = multi
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if reversed[j] {
                    grid.axis(j).len() - 1 - k
                } else {
                    k
                }
            })
            .collect();
        let target = new_grid.flat_index(&new_multi);
        let g = field.metric(i);
        let transformed = Matrix::from_fn(d, |a, b| {
            g.get(a, b) / (derivs[a][multi[a]] * derivs[b][multi[b]])
        });
        g_new[target] = Some(transformed);
        boundary_new[target] = field.boundary(i);
    }
    let g_new: Vec<Matrix> = g_new.into_iter().map(|m| m.unwrap()).collect();
    MetricField::from_parts(new_grid, g_new, field.method(), boundary_new)
}

/// Finite-difference Hessian of a scalar function on a grid, with central
/// second differences on the diagonal and four-point mixed stencils off it.
/// Each entry is Richardson-extrapolated from steps h and h/2, which buys
/// fourth-order accuracy; plain central differences at h lose too many
/// digits where the profile's fourth derivative blows up near the hull
/// boundary. Stencils must stay strictly inside the axis bounds at the
/// full step: no one-sided fallback exists for second derivatives, so
/// boundary-adjacent nodes are an error rather than a silently degraded
/// estimate.
pub fn hessian_of_profile(
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
    grid: &ParameterGrid,
) -> Result<MetricField> {
    let d = grid.dim();
    let steps: Vec<f64> = (0..d).map(|j| fd_step(grid.axis(j))).collect();
    let n = grid.len();
    let g = par_nodes(n, |i| {
        let theta = grid.node(i);
        for j in 0..d {
            let (lo, hi) = grid.axis(j).bounds();
            if !(theta[j] - steps[j] > lo && theta[j] + steps[j] < hi) {
                return Err(Error::StencilOutOfBounds { node: i, axis: j });
            }
        }
        let f0 = f(&theta)?;
        let diag = |j: usize, h: f64| -> Result<f64> {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            Ok((f(&plus)? - 2.0 * f0 + f(&minus)?) / (h * h))
        };
        let mixed = |a: usize, b: usize, ha: f64, hb: f64| -> Result<f64> {
            let mut pp = theta.clone();
            let mut pm = theta.clone();
            let mut mp = theta.clone();
            let mut mm = theta.clone();
            pp[a] += ha;
            pp[b] += hb;
            pm[a] += ha;
            pm[b] -= hb;
            mp[a] -= ha;
            mp[b] += hb;
            mm[a] -= ha;
            mm[b] -= hb;
            Ok((f(&pp)? - f(&pm)? - f(&mp)? + f(&mm)?) / (4.0 * ha * hb))
        };
        let mut h = Matrix::zeros(d);
        for j in 0..d {
            let coarse = diag(j, steps[j])?;
            let fine = diag(j, 0.5 * steps[j])?;
            h.set(j, j, (4.0 * fine - coarse) / 3.0);
        }
        for a in 0..d {
            for b in a + 1..d {
                let coarse = mixed(a, b, steps[a], steps[b])?;
                let fine = mixed(a, b, 0.5 * steps[a], 0.5 * steps[b])?;
                let value = (4.0 * fine - coarse) / 3.0;
                h.set(a, b, value);
                h.set(b, a, value);
            }
        }
        // the metric candidate is minus the Hessian of the profile
        Ok(h.scaled(-1.0))
    })?;
    for (i, m) in g.iter().enumerate() {
        let min_eig = m.min_eigenvalue();
        if min_eig < -1e-10 * m.trace().abs().max(m.max_abs()) {
            return Err(Error::Numerical {
                module: "geometry",
                reason: format!(
                    "profile Hessian at node {i} is not negative semidefinite (metric eigenvalue {min_eig:.3e})"
                ),
            });
        }
    }
    MetricField::from_parts(
        grid.clone(),
        g,
        MetricMethod::FiniteDifferenceScore,
        vec![false; n],
    )
}

/// Metric candidate -d^2 S / dA dA for a target-parametrized family, from
/// finite differences of the entropy profile. For canonical families this
/// equals the Fisher metric in target coordinates; the check suite asserts
/// the agreement against [`fisher_metric`].
pub fn hessian_entropy(family: &ModelFamily) -> Result<MetricField> {
    if family.kind() != FamilyKind::ByTarget {
        return Err(Error::Invalid {
            module: "geometry",
            reason: "hessian_entropy needs a target-parametrized family".into(),
        });
    }
    hessian_of_profile(|theta| Ok(family.solve_at(theta)?.entropy), family.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Observable;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn two_state() -> Arc<SampleSpace> {
        SampleSpace::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    fn bernoulli_by_target(nodes: Vec<f64>) -> ModelFamily {
        let space = two_state();
        let obs = Observable::new(space.clone(), "a", vec![0.0, 1.0]).unwrap();
        let grid =
            ParameterGrid::new(vec![GridAxis::from_nodes("A", nodes, 0.0, 1.0).unwrap()]).unwrap();
        ModelFamily::by_target(space, vec![obs], grid, SolverOptions::default()).unwrap()
    }

    fn bernoulli_tabulated(nodes: Vec<f64>) -> ModelFamily {
        let space = two_state();
        let grid =
            ParameterGrid::new(vec![GridAxis::from_nodes("A", nodes, 0.0, 1.0).unwrap()]).unwrap();
        let sp = space.clone();
        ModelFamily::tabulated(space, grid, move |theta| {
            Distribution::new(sp.clone(), vec![1.0 - theta[0], theta[0]])
        })
        .unwrap()
    }

    #[test]
    fn uniform_axis_is_inset_and_evenly_spaced() {
        let ax = GridAxis::uniform("A", 0.0, 1.0, 0.1, 1e-3).unwrap();
        assert_abs_diff_eq!(ax.nodes()[0], 1e-3, epsilon = 1e-15);
        assert!(*ax.nodes().last().unwrap() <= 0.999 + 1e-12);
        for w in ax.nodes().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.1, epsilon = 1e-12);
        }
        let total: f64 = ax.widths().iter().sum();
        assert_abs_diff_eq!(
            total,
            ax.nodes().last().unwrap() - ax.nodes()[0],
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_enumerates_row_major_last_axis_fastest() {
        let a = GridAxis::from_nodes("x", vec![0.0, 1.0], -1.0, 2.0).unwrap();
        let b = GridAxis::from_nodes("y", vec![10.0, 20.0, 30.0], 0.0, 40.0).unwrap();
        let grid = ParameterGrid::new(vec![a, b]).unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid.node(0), vec![0.0, 10.0]);
        assert_eq!(grid.node(1), vec![0.0, 20.0]);
        assert_eq!(grid.node(3), vec![1.0, 10.0]);
        assert_eq!(grid.multi_index(5), vec![1, 2]);
        assert_eq!(grid.flat_index(&[1, 2]), 5);
    }

    #[test]
    fn fisher_by_target_matches_bernoulli_closed_form() {
        let field = fisher_metric(&bernoulli_by_target(vec![0.5, 0.7])).unwrap();
        // g(A) = 1/(A(1-A))
        assert_abs_diff_eq!(field.metric(0).get(0, 0), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(field.metric(1).get(0, 0), 4.761904761904762, epsilon = 1e-8);
        assert_eq!(field.method(), MetricMethod::AnalyticExponential);
    }

    #[test]
    fn fisher_by_multiplier_is_the_covariance() {
        let space = two_state();
        let obs = Observable::new(space.clone(), "a", vec![0.0, 1.0]).unwrap();
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "lambda",
            vec![-1.0, 0.0, 1.0],
            -10.0,
            10.0,
        )
        .unwrap()])
        .unwrap();
        let fam =
            ModelFamily::by_multiplier(space, vec![obs], grid, SolverOptions::default()).unwrap();
        let field = fisher_metric(&fam).unwrap();
        // at lambda = 0: Var(a) = 1/4
        assert_abs_diff_eq!(field.metric(1).get(0, 0), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn fd_scores_agree_with_analytic_metric() {
        let nodes = vec![0.3, 0.5, 0.7];
        let analytic = fisher_metric(&bernoulli_by_target(nodes.clone())).unwrap();
        let fd = fisher_metric(&bernoulli_tabulated(nodes)).unwrap();
        assert_eq!(fd.method(), MetricMethod::FiniteDifferenceScore);
        for i in 0..3 {
            assert_relative_eq!(
                fd.metric(i).get(0, 0),
                analytic.metric(i).get(0, 0),
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn gaussian_location_scale_metric_is_diag_one_two() {
        // x-grid wide and fine enough that the truncated Gaussian moments
        // match the continuum to well below the assertion tolerance
        let nx = 1601;
        let (x_lo, x_hi) = (-12.0, 12.0);
        let h = (x_hi - x_lo) / (nx - 1) as f64;
        let xs: Vec<f64> = (0..nx).map(|k| x_lo + k as f64 * h).collect();
        let dx = trapezoid_weights(&xs);
        let space = SampleSpace::new(xs.clone(), dx, vec![1.0; nx]).unwrap();
        let grid = ParameterGrid::new(vec![
            GridAxis::from_nodes("mu", vec![-0.2, 0.0, 0.2], -1.0, 1.0).unwrap(),
            GridAxis::from_nodes("sigma", vec![0.9, 1.0, 1.1], 0.5, 2.0).unwrap(),
        ])
        .unwrap();
        let sp = space.clone();
        let fam = ModelFamily::tabulated(space, grid, move |theta| {
            let (mu, sigma) = (theta[0], theta[1]);
            let field: Vec<f64> = xs
                .iter()
                .map(|x| (-((x - mu) * (x - mu)) / (2.0 * sigma * sigma)).exp())
                .collect();
            Distribution::normalize(sp.clone(), field)
        })
        .unwrap();
        let field = fisher_metric(&fam).unwrap();
        // node (mu=0, sigma=1) is flat index 1*3 + 1 = 4
        let g = field.metric(4);
        assert_abs_diff_eq!(g.get(0, 0), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(g.get(1, 1), 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(g.get(0, 1), 0.0, epsilon = 1e-3);
    }

    #[test]
    fn one_sided_stencils_are_flagged_at_bounds() {
        // nodes hug the axis bounds so the central stencil does not fit
        let space = two_state();
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "A",
            vec![0.00005, 0.5, 0.99995],
            0.0,
            1.0,
        )
        .unwrap()])
        .unwrap();
        let sp = space.clone();
        let fam = ModelFamily::tabulated(space, grid, move |theta| {
            Distribution::new(sp.clone(), vec![1.0 - theta[0], theta[0]])
        })
        .unwrap();
        let field = fisher_metric(&fam).unwrap();
        assert!(field.boundary(0));
        assert!(!field.boundary(1));
        assert!(field.boundary(2));
    }

    #[test]
    fn mixed_support_across_stencil_is_an_error() {
        let space = SampleSpace::new(vec![0.0, 1.0, 2.0], vec![1.0; 3], vec![1.0; 3]).unwrap();
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "t",
            vec![0.3, 0.55],
            0.0,
            1.0,
        )
        .unwrap()])
        .unwrap();
        let sp = space.clone();
        let fam = ModelFamily::tabulated(space, grid, move |theta| {
            // support jumps from two to three points at t = 0.55
            let third = if theta[0] >= 0.55 { 0.5 } else { 0.0 };
            Distribution::normalize(sp.clone(), vec![1.0, 1.0, third])
        })
        .unwrap();
        let err = fisher_metric(&fam).unwrap_err();
        assert!(matches!(err, Error::MixedSupport { node: 1, index: 2 }));
    }

    #[test]
    fn zero_metric_has_zero_determinant() {
        // constant family: scores vanish identically
        let space = two_state();
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
            Distribution::new(sp.clone(), vec![0.5, 0.5])
        })
        .unwrap();
        let field = fisher_metric(&fam).unwrap();
        assert_eq!(field.det(0), 0.0);
        assert_eq!(field.det(1), 0.0);
    }

    #[test]
    fn pullback_through_identity_is_identity() {
        let field = fisher_metric(&bernoulli_by_target(vec![0.3, 0.5, 0.7])).unwrap();
        let pulled = pullback_metric(&field, &[AxisMap::identity()]).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(
                pulled.metric(i).get(0, 0),
                field.metric(i).get(0, 0),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                pulled.grid().node(i)[0],
                field.grid().node(i)[0],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn pullback_through_linear_map_scales_by_c_squared() {
        let field = fisher_metric(&bernoulli_by_target(vec![0.3, 0.5, 0.7])).unwrap();
        let pulled = pullback_metric(&field, &[AxisMap::linear(2.0)]).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(
                pulled.metric(i).get(0, 0),
                field.metric(i).get(0, 0) / 4.0,
                epsilon = 1e-9
            );
        }
        assert_abs_diff_eq!(pulled.grid().node(0)[0], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn pullback_through_square_map_matches_closed_form() {
        let field = fisher_metric(&bernoulli_by_target(vec![0.3, 0.5, 0.7])).unwrap();
        let square = AxisMap::new(|t| t * t, |t| 2.0 * t);
        let pulled = pullback_metric(&field, &[square]).unwrap();
        for i in 0..3 {
            let u = pulled.grid().node(i)[0];
            let su = u.sqrt();
            // g'(u) = 1 / (4 u sqrt(u) (1 - sqrt(u)))
            let expected = 1.0 / (4.0 * u * su * (1.0 - su));
            assert_relative_eq!(pulled.metric(i).get(0, 0), expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn pullback_through_decreasing_map_reverses_nodes() {
        let field = fisher_metric(&bernoulli_by_target(vec![0.3, 0.7])).unwrap();
        let pulled = pullback_metric(&field, &[AxisMap::linear(-2.0)]).unwrap();
        // image nodes sorted ascending: -1.4 then -0.6
        assert_abs_diff_eq!(pulled.grid().node(0)[0], -1.4, epsilon = 1e-15);
        assert_abs_diff_eq!(pulled.grid().node(1)[0], -0.6, epsilon = 1e-15);
        // node 0 of the image came from node 1 (A = 0.7) of the original
        assert_abs_diff_eq!(
            pulled.metric(0).get(0, 0),
            field.metric(1).get(0, 0) / 4.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let field = fisher_metric(&bernoulli_by_target(vec![0.3, 0.5])).unwrap();
        let flat = AxisMap::new(|t| t * t * t, |t| 3.0 * t * t);
        // derivative vanishes nowhere on the grid, so this succeeds
        assert!(pullback_metric(&field, &[flat]).is_ok());
        let stationary = AxisMap::new(|t| (t - 0.5) * (t - 0.5), |t| 2.0 * (t - 0.5));
        let err = pullback_metric(&field, &[stationary]).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { node: 1, axis: 0 }));
    }

    #[test]
    fn hessian_entropy_matches_bernoulli_closed_form() {
        let field = hessian_entropy(&bernoulli_by_target(vec![0.5, 0.7])).unwrap();
        assert_abs_diff_eq!(field.metric(0).get(0, 0), 4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(field.metric(1).get(0, 0), 4.761904761904762, epsilon = 1e-6);
    }

    #[test]
    fn hessian_of_quadratic_profile_is_constant() {
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "A",
            vec![-0.5, 0.0, 0.5],
            -2.0,
            2.0,
        )
        .unwrap()])
        .unwrap();
        let field = hessian_of_profile(|t| Ok(-t[0] * t[0]), &grid).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(field.metric(i).get(0, 0), 2.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn hessian_stencil_at_boundary_is_an_error() {
        // node at 0.00005 cannot host a central stencil of width 1e-4
        let space = two_state();
        let obs = Observable::new(space.clone(), "a", vec![0.0, 1.0]).unwrap();
        let grid = ParameterGrid::new(vec![GridAxis::from_nodes(
            "A",
            vec![0.00005, 0.5],
            0.0,
            1.0,
        )
        .unwrap()])
        .unwrap();
        let fam =
            ModelFamily::by_target(space, vec![obs], grid, SolverOptions::default()).unwrap();
        let err = hessian_entropy(&fam).unwrap_err();
        assert!(matches!(
            err,
            Error::StencilOutOfBounds { node: 0, axis: 0 }
        ));
    }
}
