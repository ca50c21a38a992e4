//! Spec-to-engine wiring and the per-subcommand drivers.
//!
//! Everything here is deterministic given the spec file: builders map the
//! validated spec onto engine types, drivers call the engine and lay the
//! results out as tables. No driver writes anything; emission is the
//! caller's job (the one exception is `check`, whose per-property report
//! is its stdout contract).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use maxent_core::checks::{run_all, CheckConfig};
use maxent_core::fluct::{
    finite_bath_distribution, fluctuation_report, total_variation, BathSpec, FluctuationScenario,
};
use maxent_core::geometry::{fisher_metric, GridAxis, ModelFamily, ParameterGrid};
use maxent_core::hyper::{
    alpha_optimality_check, bayes_update, consistency_constrained_prior, entropic_prior,
    entropy_profile, extended_me_posterior, repeat_family, EntropyProfile, HyperDistribution,
};
use maxent_core::linalg::Matrix;
use maxent_core::models;
use maxent_core::solver::{solve_lagrange, SolverOptions};
use maxent_core::space::{ConstraintSet, Observable, SampleSpace};

use crate::emit::{Bundle, Cell, Table};
use crate::spec::{
    AxisSpec, BathBlock, ModelSpec, ObservableSpec, Overrides, ReferenceSpec, SolverBlock,
    SpaceSpec, Task,
};
use crate::CliError;

pub struct LoadedSpec {
    pub spec: ModelSpec,
    pub raw: Vec<u8>,
    /// Directory of the spec file; reference specs resolve against it.
    pub dir: PathBuf,
}

pub fn load_spec(path: &Path) -> Result<LoadedSpec, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&raw)
        .map_err(|e| CliError::Parse(format!("{}: not valid utf-8: {e}", path.display())))?;
    let spec: ModelSpec = match serde_json::from_str(text) {
        Ok(s) => s,
        Err(e) => {
            // serde_json puts line and column into the message for every
            // category; the split here only decides the exit code: documents
            // that are not JSON fail as parse errors, documents with the
            // wrong fields fail as schema errors.
            let msg = format!("{}: {e}", path.display());
            use serde_json::error::Category;
            return Err(match e.classify() {
                Category::Syntax | Category::Eof => CliError::Parse(msg),
                Category::Io => CliError::Io(msg),
                Category::Data => CliError::Usage(msg),
            });
        }
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok(LoadedSpec { spec, raw, dir })
}

pub fn run_task(loaded: &LoadedSpec, task: Task, ov: &Overrides) -> Result<Bundle, CliError> {
    match task {
        Task::Solve => run_solve(loaded),
        Task::Prior => run_prior(loaded, ov),
        Task::Fluct => run_fluct(loaded, ov),
        Task::Repeat => run_repeat(loaded, ov),
        Task::Check => run_check(loaded),
    }
}

fn usage(path: &str, msg: &str) -> CliError {
    CliError::Usage(format!("{path}: {msg}"))
}

fn solver_options(block: &Option<SolverBlock>) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(b) = block {
        if let Some(t) = b.tolerance {
            opts.tolerance = t;
        }
        if let Some(n) = b.max_iterations {
            opts.max_iterations = n;
        }
        if let Some(d) = b.damping {
            opts.damping = d;
        }
        if let Some(m) = b.feasibility_margin {
            opts.feasibility_margin = m;
        }
    }
    opts
}

fn build_space(s: &SpaceSpec) -> Result<Arc<SampleSpace>, CliError> {
    if let Some(g) = &s.generator {
        let space = match g.as_str() {
            "two-state" => models::two_state(),
            "k-state" => models::k_state(s.k.expect("validated"))?,
            "binomial-units" => models::binomial_units(s.units.expect("validated"))?,
            "gaussian-grid" => {
                let [lo, hi] = s.x_range.expect("validated");
                let res = s.resolution.expect("validated");
                let n = ((hi - lo) / res).round() as usize + 1;
                models::uniform_interval(lo, hi, n)?
            }
            other => unreachable!("generator '{other}' passed validation"),
        };
        return Ok(space);
    }
    let dim = s.dim.unwrap_or(1);
    Ok(SampleSpace::with_dim(
        s.points.clone().expect("validated"),
        dim,
        s.cell_volumes.clone().expect("validated"),
        s.measure.clone().expect("validated"),
    )?)
}

fn build_observables(
    space: &Arc<SampleSpace>,
    list: &[ObservableSpec],
    path: &str,
) -> Result<Vec<Observable>, CliError> {
    let mut out = Vec::with_capacity(list.len());
    for (i, o) in list.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let obs = match (&o.builtin, &o.values) {
            (Some(b), None) => {
                if space.dim() != 1 {
                    return Err(usage(
                        &format!("{p}.builtin"),
                        "builtin observables need a one-dimensional space",
                    ));
                }
                match b.as_str() {
                    "identity" => models::identity_observable(space, o.name.clone()),
                    "power" => models::power_observable(space, o.name.clone(), o.exponent.expect("validated"))?,
                    other => unreachable!("builtin '{other}' passed validation"),
                }
            }
            (None, Some(v)) => {
                if v.len() != space.len() {
                    return Err(usage(
                        &format!("{p}.values"),
                        &format!("expected {} entries, one per space point, got {}", space.len(), v.len()),
                    ));
                }
                Observable::new(space.clone(), o.name.clone(), v.clone())?
            }
            _ => unreachable!("shape passed validation"),
        };
        out.push(obs);
    }
    Ok(out)
}

fn build_axis(a: &AxisSpec) -> Result<GridAxis, CliError> {
    let [lo, hi] = a.range;
    let axis = match (a.resolution, a.count) {
        (Some(r), None) => GridAxis::uniform(a.name.clone(), lo, hi, r, a.offset.unwrap_or(0.0))?,
        (None, Some(c)) => {
            let [blo, bhi] = a.bounds.expect("validated");
            models::linspace_axis(a.name.clone(), lo, hi, c, blo, bhi)?
        }
        _ => unreachable!("layout passed validation"),
    };
    Ok(axis)
}

fn build_axes(spec: &ModelSpec) -> Result<Vec<GridAxis>, CliError> {
    spec.parameter_grid
        .as_ref()
        .expect("validated")
        .axes
        .iter()
        .map(build_axis)
        .collect()
}

fn build_family(spec: &ModelSpec, space: Arc<SampleSpace>, axes: Vec<GridAxis>) -> Result<ModelFamily, CliError> {
    match spec.family.as_deref().unwrap_or("by-target") {
        "by-target" => {
            let obs = build_observables(&space, &spec.observables, "observables")?;
            let grid = ParameterGrid::new(axes)?;
            Ok(ModelFamily::by_target(space, obs, grid, solver_options(&spec.solver))?)
        }
        "gaussian-location-scale" => {
            let mut it = axes.into_iter();
            let mu = it.next().expect("validated");
            let sigma = it.next().expect("validated");
            Ok(models::gaussian_family(space, mu, sigma)?)
        }
        other => unreachable!("family '{other}' passed validation"),
    }
}

fn summary_table() -> Table {
    Table::new("summary", &["quantity", "value", "unit"], &["", "", ""])
}

fn push_summary(t: &mut Table, quantity: &str, value: f64, unit: &str) {
    t.push(vec![Cell::text(quantity), Cell::num(value), Cell::text(unit)]);
}

fn matrix_table(name: &str, labels: &[String], m: &Matrix) -> Table {
    let mut t = Table::new(name, &["row", "col", "value"], &["", "", "1"]);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            t.push(vec![
                Cell::text(labels[i].clone()),
                Cell::text(labels[j].clone()),
                Cell::num(m.get(i, j)),
            ]);
        }
    }
    t
}

/// Density table over a parameter grid: one row per node with the node
/// coordinates, the normalized density pi, the scalar part of the density
/// (pi without the sqrt(det g) volume factor), the entropy profile when
/// one is attached, and sqrt(det g).
fn pi_table(name: &str, pi: &HyperDistribution, profile: Option<&EntropyProfile>) -> Table {
    let grid = pi.grid();
    let metric = pi.metric().clone();
    let mut columns: Vec<String> = grid.axes().iter().map(|a| a.name().to_string()).collect();
    let mut units: Vec<String> = vec!["1".into(); grid.dim()];
    columns.push("pi".into());
    units.push("1".into());
    columns.push("scalar_density".into());
    units.push("1".into());
    if profile.is_some() {
        columns.push("S".into());
        units.push("nat".into());
    }
    columns.push("sqrt_g".into());
    units.push("1".into());
    let mut t = Table::named(name, columns, units);
    for i in 0..grid.len() {
        let mut row: Vec<Cell> = grid.node(i).into_iter().map(Cell::num).collect();
        row.push(Cell::num(pi.pi()[i]));
        row.push(Cell::num(pi.scalar_density(i)));
        if let Some(p) = profile {
            row.push(Cell::num(p.value(i)));
        }
        row.push(Cell::num(metric.sqrt_det(i)));
        t.push(row);
    }
    t
}

fn axis_names(grid: &ParameterGrid) -> Vec<String> {
    grid.axes().iter().map(|a| a.name().to_string()).collect()
}

fn format_alpha(a: f64) -> String {
    format!("{a}")
}

fn run_solve(loaded: &LoadedSpec) -> Result<Bundle, CliError> {
    let spec = &loaded.spec;
    let space = build_space(spec.space.as_ref().expect("validated"))?;
    let observables = build_observables(&space, &spec.observables, "observables")?;
    let names: Vec<String> = observables.iter().map(|o| o.name().to_string()).collect();
    let targets = spec.constraints.as_ref().expect("validated").targets.clone();
    let constraints = ConstraintSet::new(observables, targets.clone())?;
    let solution = solve_lagrange(&space, &constraints, &solver_options(&spec.solver))?;

    let mut bundle = Bundle::new("solve", &spec.name, &loaded.raw);

    let mut multipliers = Table::new("multipliers", &["observable", "target", "lambda"], &["", "1", "1"]);
    for (j, name) in names.iter().enumerate() {
        multipliers.push(vec![
            Cell::text(name.clone()),
            Cell::num(targets[j]),
            Cell::num(solution.lambda[j]),
        ]);
    }
    bundle.tables.push(multipliers);

    let d = space.dim();
    let mut columns: Vec<String> = if d == 1 {
        vec!["x".into()]
    } else {
        (0..d).map(|j| format!("x{j}")).collect()
    };
    let mut units: Vec<String> = vec!["1".into(); d];
    for extra in ["cell_volume", "measure", "p"] {
        columns.push(extra.into());
        units.push("1".into());
    }
    let mut density = Table::named("density", columns, units);
    for k in 0..space.len() {
        let mut row: Vec<Cell> = space.point(k).iter().map(|&x| Cell::num(x)).collect();
        row.push(Cell::num(space.cell_volume()[k]));
        row.push(Cell::num(space.measure()[k]));
        row.push(Cell::num(solution.distribution.density()[k]));
        density.push(row);
    }
    bundle.tables.push(density);

    bundle.tables.push(matrix_table("covariance", &names, &solution.covariance));

    let mut summary = summary_table();
    push_summary(&mut summary, "log_partition", solution.log_partition, "1");
    push_summary(&mut summary, "entropy", solution.entropy, "nat");
    push_summary(&mut summary, "residual", solution.residual, "1");
    push_summary(&mut summary, "iterations", solution.iterations as f64, "1");
    summary.push(vec![Cell::text("degenerate"), Cell::flag(solution.degenerate), Cell::text("")]);
    bundle.tables.push(summary);

    Ok(bundle)
}

fn run_prior(loaded: &LoadedSpec, ov: &Overrides) -> Result<Bundle, CliError> {
    let spec = &loaded.spec;
    let space = build_space(spec.space.as_ref().expect("validated"))?;
    let axes = build_axes(spec)?;
    let family = build_family(spec, space, axes)?;
    let profile = entropy_profile(&family)?;
    let metric = Arc::new(fisher_metric(&family)?);

    let alphas: Vec<f64> = ov
        .alpha
        .clone()
        .or_else(|| spec.alpha.clone())
        .unwrap_or_else(|| vec![1.0]);

    let mut bundle = Bundle::new("prior", &spec.name, &loaded.raw);
    let mut summary = summary_table();

    for &alpha in &alphas {
        let pi = entropic_prior(&profile, metric.clone(), alpha)?;
        let name = format!("pi_alpha_{}", format_alpha(alpha));
        bundle.tables.push(pi_table(&name, &pi, Some(&profile)));
        push_summary(&mut summary, &format!("log_zeta_alpha_{}", format_alpha(alpha)), pi.log_zeta(), "1");
    }

    if !alphas.is_empty() {
        let report = alpha_optimality_check(&profile, metric.clone(), &alphas)?;
        let mut sigma = Table::new("sigma", &["alpha", "sigma"], &["1", "nat"]);
        for (a, s) in &report.entries {
            sigma.push(vec![Cell::num(*a), Cell::num(*s)]);
        }
        bundle.tables.push(sigma);
        push_summary(&mut summary, "sigma_at_one", report.sigma_at_one, "nat");
        summary.push(vec![Cell::text("one_is_maximal"), Cell::flag(report.one_is_maximal), Cell::text("")]);
        summary.push(vec![Cell::text("tie"), Cell::flag(report.tie), Cell::text("")]);
    }

    if let Some(observations) = &spec.observations {
        let prior = extended_me_posterior(&profile, metric.clone())?;
        let posterior = bayes_update(&prior, &family, observations)?;
        bundle.tables.push(pi_table("posterior", &posterior, Some(&profile)));
        let names = axis_names(family.grid());
        let mean = posterior.mean();
        let cov = posterior.covariance();
        for (j, name) in names.iter().enumerate() {
            push_summary(&mut summary, &format!("posterior_mean_{name}"), mean[j], "1");
            push_summary(&mut summary, &format!("posterior_var_{name}"), cov.get(j, j), "1");
        }
        let mode = family.grid().node(posterior.argmax());
        for (j, name) in names.iter().enumerate() {
            push_summary(&mut summary, &format!("posterior_mode_{name}"), mode[j], "1");
        }
        push_summary(&mut summary, "observation_count", observations.len() as f64, "1");
    }

    if !summary.rows.is_empty() {
        bundle.tables.push(summary);
    }
    Ok(bundle)
}

fn run_fluct(loaded: &LoadedSpec, ov: &Overrides) -> Result<Bundle, CliError> {
    let spec = &loaded.spec;
    let space = build_space(spec.space.as_ref().expect("validated"))?;
    let observables = build_observables(&space, &spec.observables, "observables")?;
    let axes = build_axes(spec)?;
    let grid = ParameterGrid::new(axes)?;
    let lambda0 = spec.lambda0.clone().expect("validated");
    let scenario = FluctuationScenario::build(
        &space,
        observables,
        lambda0.clone(),
        grid,
        solver_options(&spec.solver),
    )?;
    let report = fluctuation_report(&scenario, spec.agreement_tolerance.unwrap_or(1e-3))?;

    let mut bundle = Bundle::new("fluct", &spec.name, &loaded.raw);
    bundle.tables.push(pi_table("pi", &report.pi, Some(scenario.profile())));

    let names = axis_names(scenario.grid());
    let mut moments = Table::new("moments", &["quantity", "value", "unit"], &["", "", ""]);
    for (j, name) in names.iter().enumerate() {
        push_summary(&mut moments, &format!("mean_{name}"), report.moments.mean_a[j], "1");
    }
    for (j, name) in names.iter().enumerate() {
        push_summary(&mut moments, &format!("mean_lambda_{name}"), report.moments.mean_lambda[j], "1");
    }
    bundle.tables.push(moments);
    bundle.tables.push(matrix_table("covariance_targets", &names, &report.moments.cov_a));
    bundle.tables.push(matrix_table("covariance_multipliers", &names, &report.moments.cov_lambda));

    let mut correlation = Table::new("correlation", &["row", "col", "direct", "response"], &["", "", "1", "1"]);
    for i in 0..names.len() {
        for j in 0..names.len() {
            correlation.push(vec![
                Cell::text(names[i].clone()),
                Cell::text(names[j].clone()),
                Cell::num(report.correlation.direct.get(i, j)),
                Cell::num(report.correlation.response.get(i, j)),
            ]);
        }
    }
    bundle.tables.push(correlation);

    let mut summary = summary_table();
    push_summary(&mut summary, "max_disagreement", report.correlation.max_disagreement, "1");
    push_summary(&mut summary, "canonical_deviation", report.correlation.canonical_deviation, "1");
    push_summary(&mut summary, "stationarity_gap", report.stationarity_gap, "1");
    push_summary(&mut summary, "stationarity_bound", report.stationarity_bound, "1");
    push_summary(&mut summary, "gaussian_tv", report.gaussian.tv, "1");
    summary.push(vec![Cell::text("gaussian_unimodal"), Cell::flag(report.gaussian.unimodal), Cell::text("")]);
    for (j, name) in names.iter().enumerate() {
        push_summary(&mut summary, &format!("peak_{name}"), report.gaussian.peak[j], "1");
    }

    if ov.finite_bath {
        let bath_block = spec.bath.as_ref().expect("validated");
        let bath = build_bath(bath_block, &names)?;
        let bath_report = finite_bath_distribution(&scenario, &bath)?;
        let tv = total_variation(&bath_report.pi, &report.pi)?;
        bundle.tables.push(pi_table("bath_pi", &bath_report.pi, None));
        push_summary(&mut summary, "bath_excluded_fraction", bath_report.excluded_fraction, "1");
        summary.push(vec![Cell::text("bath_warned"), Cell::flag(bath_report.warned), Cell::text("")]);
        push_summary(&mut summary, "bath_canonical_tv", tv, "1");
    }

    bundle.tables.push(summary);
    Ok(bundle)
}

fn build_bath(block: &BathBlock, axis_names: &[String]) -> Result<BathSpec, CliError> {
    let space = build_space(&block.space)?;
    let observables = if block.observables.is_empty() {
        if space.dim() != 1 {
            return Err(usage("bath.observables", "a multi-dimensional bath space needs explicit observables"));
        }
        axis_names
            .iter()
            .map(|n| models::identity_observable(&space, n.clone()))
            .collect()
    } else {
        build_observables(&space, &block.observables, "bath.observables")?
    };
    Ok(BathSpec::new(
        space,
        observables,
        block.total.clone(),
        solver_options(&block.solver),
    )?)
}

fn run_repeat(loaded: &LoadedSpec, ov: &Overrides) -> Result<Bundle, CliError> {
    let spec = &loaded.spec;
    let space = build_space(spec.space.as_ref().expect("validated"))?;
    let axes = build_axes(spec)?;
    let family = build_family(spec, space, axes)?;
    let n = ov.n.or(spec.repetitions).expect("validated");

    let profile_one = entropy_profile(&family)?;
    let metric_one = Arc::new(fisher_metric(&family)?);
    let prior_one = extended_me_posterior(&profile_one, metric_one.clone())?;
    let report = repeat_family(&family, n)?;

    let mut bundle = Bundle::new("repeat", &spec.name, &loaded.raw);
    bundle.tables.push(pi_table("pi_base", &prior_one, Some(&profile_one)));
    bundle.tables.push(pi_table("pi_repeat", &report.prior, Some(&report.profile)));

    let names = axis_names(family.grid());
    let mut summary = summary_table();
    push_summary(&mut summary, "repetitions", n as f64, "1");
    push_summary(&mut summary, "profile_deviation", report.profile_deviation, "nat");
    push_summary(&mut summary, "metric_deviation", report.metric_deviation, "1");
    let var_one = prior_one.covariance();
    let var_n = report.prior.covariance();
    for (j, name) in names.iter().enumerate() {
        push_summary(&mut summary, &format!("var_base_{name}"), var_one.get(j, j), "1");
        push_summary(&mut summary, &format!("var_repeat_{name}"), var_n.get(j, j), "1");
    }

    if n >= 2 {
        let (constrained, mass_deviation) = consistency_constrained_prior(&family, n)?;
        let gap = constrained
            .pi()
            .iter()
            .zip(prior_one.pi())
            .map(|(c, p)| (c - p).abs())
            .fold(0.0f64, f64::max);
        bundle.tables.push(pi_table("constrained_pi", &constrained, None));
        push_summary(&mut summary, "mass_deviation", mass_deviation, "1");
        push_summary(&mut summary, "constrained_deviation", gap, "1");
    }

    bundle.tables.push(summary);
    Ok(bundle)
}

fn run_check(loaded: &LoadedSpec) -> Result<Bundle, CliError> {
    let block = loaded.spec.check.as_ref().expect("validated");
    let config = CheckConfig {
        seed: block.seed,
        instances: block.instances,
    };
    let outcomes = run_all(&config);
    let mut checks = Table::new("checks", &["check", "passed", "detail"], &["", "", ""]);
    let mut failed = 0usize;
    for o in &outcomes {
        println!("{} {} ({})", if o.passed { "    ok" } else { "FAILED" }, o.name, o.detail);
        if !o.passed {
            failed += 1;
        }
        checks.push(vec![Cell::text(o.name), Cell::flag(o.passed), Cell::text(o.detail.clone())]);
    }

    for r in &block.reference_specs {
        let label = format!("spec/{} ({})", r.path, r.command);
        match run_reference(&loaded.dir.join(&r.path), r) {
            Ok(tables) => {
                let detail = format!("{tables} tables");
                println!("    ok {label} ({detail})");
                checks.push(vec![Cell::text(label), Cell::flag(true), Cell::text(detail)]);
            }
            Err(e) => {
                let detail = e.message().to_string();
                println!("FAILED {label} ({detail})");
                checks.push(vec![Cell::text(label), Cell::flag(false), Cell::text(detail)]);
                failed += 1;
            }
        }
    }

    let total = checks.rows.len();
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "checks: {failed}/{total} properties failed"
        )));
    }
    println!("all {total} properties hold");

    let mut bundle = Bundle::new("check", &loaded.spec.name, &loaded.raw);
    bundle.tables.push(checks);
    Ok(bundle)
}

/// Run one referenced spec end to end (ingest, validate, run). The bundle
/// is assembled and dropped: what the check wants is that the full pipeline
/// succeeds, with every internal cross-check live.
fn run_reference(path: &Path, r: &ReferenceSpec) -> Result<usize, CliError> {
    let loaded = load_spec(path)?;
    let (task, ov) = match r.command.as_str() {
        "solve" => (Task::Solve, Overrides::default()),
        "prior" => (Task::Prior, Overrides::default()),
        "fluct" => (
            Task::Fluct,
            Overrides {
                finite_bath: r.finite_bath,
                ..Overrides::default()
            },
        ),
        "repeat" => (
            Task::Repeat,
            Overrides {
                n: r.n,
                ..Overrides::default()
            },
        ),
        other => unreachable!("command '{other}' passed validation"),
    };
    crate::spec::validate(&loaded.spec, task, &ov)?;
    let bundle = run_task(&loaded, task, &ov)?;
    Ok(bundle.tables.len())
}
