//! Canonical maximum-entropy solver.
//!
//! Given a base measure m and expectation constraints <a_alpha> = A_alpha,
//! the maximizer of relative entropy is the canonical distribution
//! p(x) = m(x) exp(-lambda . a(x)) / Z(lambda). Finding lambda is an
//! unconstrained convex problem: minimize the dual
//! g(lambda) = log Z(lambda) + lambda . A, whose gradient is A - <a> and
//! whose Hessian is the constraint covariance. We run damped Newton on g.
//!
//! [`brute_force_maxent`] solves the same problem as a direct primal
//! optimization over point masses, never forming the exponential family.
//! It exists so the two routes can be compared on small spaces; keep it
//! independent of the dual path.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::numerics::log_sum_exp;
use crate::space::{relative_entropy, ConstraintSet, Distribution, Observable, SampleSpace};

/// Tuning knobs for the dual Newton iteration.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Convergence threshold on the moment residual max_alpha |A - <a>|.
    pub tolerance: f64,
    /// Newton iteration budget.
    pub max_iterations: usize,
    /// Step-halving factor applied while the dual objective would increase.
    pub damping: f64,
    /// Relative margin (in units of the observable span) kept to the
    /// boundary of the feasible hull.
    pub feasibility_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iterations: 200,
            damping: 0.5,
            feasibility_margin: 1e-9,
        }
    }
}

/// Converged canonical state.
#[derive(Debug, Clone)]
pub struct MaxEntSolution {
    pub lambda: Vec<f64>,
    pub log_partition: f64,
    pub distribution: Distribution,
    /// Entropy relative to the measure, computed directly from the density.
    pub entropy: f64,
    /// Constraint covariance at the solution (the dual Hessian).
    pub covariance: Matrix,
    /// Final moment residual, max-norm.
    pub residual: f64,
    pub iterations: usize,
    /// True when the covariance was rank-deficient at some Newton step and
    /// the update fell back to the floored pseudo-inverse.
    pub degenerate: bool,
}

/// Mean and covariance of a set of observables under the canonical
/// distribution at a given multiplier, together with log Z.
#[derive(Debug, Clone)]
pub struct CanonicalMoments {
    pub log_partition: f64,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

fn validate_observables(
    space: &Arc<SampleSpace>,
    observables: &[Observable],
    lambda_len: usize,
    op: &'static str,
) -> Result<()> {
    if observables.len() != lambda_len {
        return Err(Error::Invalid {
            module: "solver",
            reason: format!(
                "{op}: {} observables with a multiplier of length {lambda_len}",
                observables.len()
            ),
        });
    }
    for obs in observables {
        if !SampleSpace::same_space(space, obs.space()) {
            return Err(Error::SpaceMismatch { op: "solver" });
        }
    }
    Ok(())
}

/// log Z(lambda) = log sum_k m_k dx_k exp(-lambda . a_k), max-shifted.
pub fn log_partition(
    lambda: &[f64],
    space: &Arc<SampleSpace>,
    observables: &[Observable],
) -> Result<f64> {
    validate_observables(space, observables, lambda.len(), "log_partition")?;
    Ok(log_sum_exp(&log_terms(space, observables, lambda)))
}

/// Log canonical masses log(m_k dx_k) - lambda . a_k (not normalized).
fn log_terms(space: &SampleSpace, observables: &[Observable], lambda: &[f64]) -> Vec<f64> {
    let n = space.len();
    let mut t = space.log_mass().to_vec();
    for (l, obs) in lambda.iter().zip(observables) {
        if *l == 0.0 {
            continue;
        }
        let vals = obs.values();
        for k in 0..n {
            if t[k].is_finite() {
                t[k] -= l * vals[k];
            }
        }
    }
    t
}

/// Canonical mean and covariance at a fixed multiplier.
pub fn canonical_moments(
    space: &Arc<SampleSpace>,
    observables: &[Observable],
    lambda: &[f64],
) -> Result<CanonicalMoments> {
    validate_observables(space, observables, lambda.len(), "canonical_moments")?;
    let t = log_terms(space, observables, lambda);
    let log_z = log_sum_exp(&t);
    if !log_z.is_finite() {
        return Err(Error::Numerical {
            module: "solver",
            reason: format!("log partition is {log_z}"),
        });
    }
    let w: Vec<f64> = t.iter().map(|&tk| (tk - log_z).exp()).collect();
    let n_a = observables.len();
    let mean: Vec<f64> = observables
        .iter()
        .map(|obs| obs.values().iter().zip(&w).map(|(a, wk)| a * wk).sum())
        .collect();
    let mut cov = Matrix::zeros(n_a);
    for i in 0..n_a {
        for j in i..n_a {
            let ai = observables[i].values();
            let aj = observables[j].values();
            let c: f64 = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * (ai[k] - mean[i]) * (aj[k] - mean[j]))
                .sum();
            cov.set(i, j, c);
            cov.set(j, i, c);
        }
    }
    Ok(CanonicalMoments {
        log_partition: log_z,
        mean,
        covariance: cov,
    })
}

/// Canonical density at a fixed multiplier (no solving).
pub fn canonical_distribution(
    space: &Arc<SampleSpace>,
    observables: &[Observable],
    lambda: &[f64],
) -> Result<Distribution> {
    validate_observables(space, observables, lambda.len(), "canonical_distribution")?;
    let t = log_terms(space, observables, lambda);
    let log_z = log_sum_exp(&t);
    if !log_z.is_finite() {
        return Err(Error::Numerical {
            module: "solver",
            reason: format!("log partition is {log_z}"),
        });
    }
    let p: Vec<f64> = t
        .iter()
        .zip(space.cell_volume())
        .map(|(&tk, &dx)| if tk.is_finite() { (tk - log_z).exp() / dx } else { 0.0 })
        .collect();
    Distribution::normalize(space.clone(), p)
}

/// Rejects targets on or outside the feasible hull. The margin is relative
/// to the span of each observable over the support of the measure.
pub(crate) fn check_feasibility(
    space: &SampleSpace,
    observables: &[Observable],
    targets: &[f64],
    margin: f64,
) -> Result<()> {
    for (alpha, (obs, &target)) in observables.iter().zip(targets).enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, &v) in obs.values().iter().enumerate() {
            if space.measure()[k] > 0.0 {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = hi - lo;
        if span == 0.0 {
            return Err(Error::Infeasible {
                component: alpha,
                target,
                reason: format!("observable is constant ({lo:.9}) on the support"),
            });
        }
        let delta = margin * span;
        if !(target > lo + delta && target < hi - delta) {
            return Err(Error::Infeasible {
                component: alpha,
                target,
                reason: format!("hull is ({lo:.9}, {hi:.9}) with margin {delta:.3e}"),
            });
        }
    }
    Ok(())
}

/// Solve for the multipliers matching the constraint targets.
pub fn solve_lagrange(
    space: &Arc<SampleSpace>,
    constraints: &ConstraintSet,
    options: &SolverOptions,
) -> Result<MaxEntSolution> {
    Ok(solve_lagrange_traced(space, constraints, options)?.0)
}

/// Like [`solve_lagrange`] but also returns the dual objective after each
/// accepted step (starting value included). The trace is non-increasing;
/// the property suite asserts this.
pub fn solve_lagrange_traced(
    space: &Arc<SampleSpace>,
    constraints: &ConstraintSet,
    options: &SolverOptions,
) -> Result<(MaxEntSolution, Vec<f64>)> {
    if !SampleSpace::same_space(space, constraints.space()) {
        return Err(Error::SpaceMismatch { op: "solve_lagrange" });
    }
    let observables = constraints.observables();
    let targets = constraints.targets();
    check_feasibility(space, observables, targets, options.feasibility_margin)?;

    let n_a = observables.len();
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };

    let mut lambda = vec![0.0; n_a];
    let mut mom = canonical_moments(space, observables, &lambda)?;
    let mut dual = mom.log_partition + dot(&lambda, targets);
    let mut trace = vec![dual];
    let mut degenerate = false;
    let mut iterations = 0usize;

    // Inside this residual the Newton decrement is far below the
    // self-concordance threshold, so undamped steps contract; the dual
    // value itself is useless as an acceptance test here because logZ and
    // lambda . A cancel to roughly their own roundoff.
    let basin = 1e-6 * targets.iter().fold(1.0f64, |s, t| s.max(t.abs()));

    let (residual, grad) = loop {
        let grad: Vec<f64> = targets.iter().zip(&mom.mean).map(|(a, m)| a - m).collect();
        let residual = grad.iter().fold(0.0f64, |r, g| r.max(g.abs()));
        if residual <= options.tolerance {
            break (residual, grad);
        }
        if iterations >= options.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        // Diverging multipliers with a non-vanishing gradient mean the
        // joint target sits outside the feasible hull even though each
        // component passed the per-observable interval check.
        if lambda.iter().any(|l| l.abs() > 1e3) {
            let worst = grad
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            return Err(Error::Infeasible {
                component: worst,
                target: targets[worst],
                reason: format!("multiplier diverged with residual {residual:.3e}"),
            });
        }
        let floor = 1e-12 * mom.covariance.trace().max(0.0);
        let (dir, dropped) = mom.covariance.solve_eigen_floored(&grad, floor);
        if dropped {
            degenerate = true;
        }
        // Newton step on the dual: lambda <- lambda - t C^{-1} (A - <a>)
        let mut t = 1.0;
        let accepted = loop {
            let lam_try: Vec<f64> = lambda.iter().zip(&dir).map(|(l, d)| l - t * d).collect();
            let mom_try = canonical_moments(space, observables, &lam_try)?;
            let dual_try = mom_try.log_partition + dot(&lam_try, targets);
            if residual <= basin || dual_try <= dual {
                break Some((lam_try, mom_try, dual_try));
            }
            t *= options.damping;
            if t < 1e-18 {
                break None;
            }
        };
        match accepted {
            Some((lam_new, mom_new, dual_new)) => {
                lambda = lam_new;
                mom = mom_new;
                dual = dual_new;
                trace.push(dual);
                iterations += 1;
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations,
                    residual,
                });
            }
        }
    };
    let _ = grad;

    // Polish: a few undamped Newton steps past the tolerance drive the
    // residual to its roundoff floor. Downstream second differences of the
    // entropy then see noise at machine scale instead of at `tolerance`,
    // which matters because the step width squared divides that noise.
    let mut residual = residual;
    for _ in 0..3 {
        if residual == 0.0 {
            break;
        }
        let grad: Vec<f64> = targets.iter().zip(&mom.mean).map(|(a, m)| a - m).collect();
        let floor = 1e-12 * mom.covariance.trace().max(0.0);
        let (dir, _) = mom.covariance.solve_eigen_floored(&grad, floor);
        let lam_try: Vec<f64> = lambda.iter().zip(&dir).map(|(l, d)| l - d).collect();
        let mom_try = canonical_moments(space, observables, &lam_try)?;
        let r_try = targets
            .iter()
            .zip(&mom_try.mean)
            .map(|(a, m)| (a - m).abs())
            .fold(0.0f64, f64::max);
        if r_try < residual {
            lambda = lam_try;
            mom = mom_try;
            residual = r_try;
        } else {
            break;
        }
    }

    let min_eig = mom.covariance.min_eigenvalue();
    if min_eig < -1e-10 * mom.covariance.trace().abs() {
        return Err(Error::Numerical {
            module: "solver",
            reason: format!("covariance has eigenvalue {min_eig:.3e} at the solution"),
        });
    }

    let distribution = canonical_distribution(space, observables, &lambda)?;
    let entropy = relative_entropy(&distribution)?;
    let legendre = mom.log_partition + dot(&lambda, targets);
    if (entropy - legendre).abs() > 1e-9 * legendre.abs().max(1.0) {
        return Err(Error::Numerical {
            module: "solver",
            reason: format!(
                "entropy {entropy:.12} and Legendre value {legendre:.12} disagree"
            ),
        });
    }

    Ok((
        MaxEntSolution {
            lambda,
            log_partition: mom.log_partition,
            distribution,
            entropy,
            covariance: mom.covariance,
            residual,
            iterations,
            degenerate,
        },
        trace,
    ))
}

/// Direct primal maximization of the relative entropy subject to the
/// constraints, over the simplex of point masses. Nothing exponential-family
/// shaped is assumed: the optimizer works on the masses themselves with the
/// normalization and moment conditions as linear equality constraints
/// (infeasible-start Newton with a fraction-to-boundary step rule).
/// Capped at 64 points; this is an oracle for small spaces, not a solver.
pub fn brute_force_maxent(
    space: &Arc<SampleSpace>,
    observables: &[Observable],
    targets: &[f64],
) -> Result<Distribution> {
    if space.len() > 64 {
        return Err(Error::Resource {
            module: "solver",
            reason: format!("brute force is capped at 64 points, space has {}", space.len()),
        });
    }
    if observables.len() != targets.len() {
        return Err(Error::Invalid {
            module: "solver",
            reason: format!(
                "{} observables with {} targets",
                observables.len(),
                targets.len()
            ),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Invalid {
            module: "solver",
            reason: "targets must be finite".into(),
        });
    }
    for obs in observables {
        if !SampleSpace::same_space(space, obs.space()) {
            return Err(Error::SpaceMismatch { op: "brute_force_maxent" });
        }
    }
    // No constraints: the entropy maximizer is the normalized measure.
    if observables.is_empty() {
        let p: Vec<f64> = space.measure().to_vec();
        return Distribution::normalize(space.clone(), p);
    }
    check_feasibility(space, observables, targets, SolverOptions::default().feasibility_margin)?;

    // Work in mass variables q_k = p_k dx_k over the support of the measure.
    let support: Vec<usize> = (0..space.len())
        .filter(|&k| space.measure()[k] > 0.0)
        .collect();
    let ns = support.len();
    let nc = 1 + observables.len(); // normalization row + one row per moment
    let log_mass: Vec<f64> = support.iter().map(|&k| space.log_mass()[k]).collect();

    // Constraint matrix B: row 0 is all ones, row alpha+1 holds a_alpha.
    let b_row = |r: usize, k: usize| -> f64 {
        if r == 0 {
            1.0
        } else {
            observables[r - 1].values()[support[k]]
        }
    };
    let mut rhs = vec![1.0];
    rhs.extend_from_slice(targets);

    // Interior start proportional to the measure.
    let total: f64 = log_mass.iter().map(|lm| lm.exp()).sum();
    let mut q: Vec<f64> = log_mass.iter().map(|lm| lm.exp() / total).collect();
    let mut nu = vec![0.0; nc];

    let residual = |q: &[f64], nu: &[f64]| -> (Vec<f64>, Vec<f64>) {
        // dual residual of min sum q log(q / m dx):  log q - log(m dx) + 1 + B^T nu
        let r_dual: Vec<f64> = (0..ns)
            .map(|k| q[k].ln() - log_mass[k] + 1.0 + (0..nc).map(|r| b_row(r, k) * nu[r]).sum::<f64>())
            .collect();
        let r_pri: Vec<f64> = (0..nc)
            .map(|r| (0..ns).map(|k| b_row(r, k) * q[k]).sum::<f64>() - rhs[r])
            .collect();
        (r_dual, r_pri)
    };
    let norm2 = |a: &[f64], b: &[f64]| -> f64 {
        (a.iter().map(|x| x * x).sum::<f64>() + b.iter().map(|x| x * x).sum::<f64>()).sqrt()
    };
    let norm_inf = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .chain(b.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    };

    let (mut r_dual, mut r_pri) = residual(&q, &nu);
    for iter in 0..500 {
        if norm_inf(&r_dual, &r_pri) <= 1e-12 {
            let mut p = vec![0.0; space.len()];
            for (idx, &k) in support.iter().enumerate() {
                p[k] = q[idx] / space.cell_volume()[k];
            }
            return Distribution::normalize(space.clone(), p);
        }
        // KKT system with H = diag(1/q): eliminate dq through the Schur
        // complement S = B diag(q) B^T.
        let mut schur = Matrix::zeros(nc);
        for r in 0..nc {
            for s in r..nc {
                let v: f64 = (0..ns).map(|k| b_row(r, k) * q[k] * b_row(s, k)).sum();
                schur.set(r, s, v);
                schur.set(s, r, v);
            }
        }
        // S dnu = r_pri - B diag(q) r_dual
        let srhs: Vec<f64> = (0..nc)
            .map(|r| {
                r_pri[r] - (0..ns).map(|k| b_row(r, k) * q[k] * r_dual[k]).sum::<f64>()
            })
            .collect();
        let floor = 1e-14 * schur.trace().max(0.0);
        let (dnu, _) = schur.solve_eigen_floored(&srhs, floor);
        let dq: Vec<f64> = (0..ns)
            .map(|k| {
                -q[k] * (r_dual[k] + (0..nc).map(|r| b_row(r, k) * dnu[r]).sum::<f64>())
            })
            .collect();

        // Fraction-to-boundary rule keeps the masses strictly positive.
        let mut t_max = 1.0f64;
        for k in 0..ns {
            if dq[k] < 0.0 {
                t_max = t_max.min(0.99 * q[k] / -dq[k]);
            }
        }
        let base = norm2(&r_dual, &r_pri);
        let mut t = t_max;
        let mut accepted = false;
        for _ in 0..60 {
            let q_try: Vec<f64> = q.iter().zip(&dq).map(|(x, d)| x + t * d).collect();
            let nu_try: Vec<f64> = nu.iter().zip(&dnu).map(|(x, d)| x + t * d).collect();
            let (rd, rp) = residual(&q_try, &nu_try);
            if norm2(&rd, &rp) <= (1.0 - 0.01 * t) * base {
                q = q_try;
                nu = nu_try;
                r_dual = rd;
                r_pri = rp;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: norm_inf(&r_dual, &r_pri),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: 500,
        residual: norm_inf(&r_dual, &r_pri),
    })
}
