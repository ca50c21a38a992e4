//! Spec file schema and validation.
//!
//! Parsing is two-phase on purpose. serde rejects documents that are not
//! JSON at all (a parse failure, reported with line and column) and
//! documents whose fields have the wrong shape (a schema failure). The
//! `validate` pass then applies the cross-field rules a derive cannot
//! express, naming the offending field by path so a failing spec can be
//! fixed without reading this file.

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    /// "by-target" (default) or "gaussian-location-scale".
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub constraints: Option<ConstraintsSpec>,
    #[serde(default)]
    pub parameter_grid: Option<GridSpec>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda0: Option<Vec<f64>>,
    /// Accepted disagreement between the direct and response routes to the
    /// multiplier-target covariance. The routes differ by a peak-offset
    /// product that shrinks with system size, so small systems need a
    /// looser setting than the 1e-3 default.
    #[serde(default)]
    pub agreement_tolerance: Option<f64>,
    #[serde(default)]
    pub bath: Option<BathBlock>,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub observations: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: Option<SolverBlock>,
    #[serde(default)]
    pub check: Option<CheckBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    #[serde(default)]
    pub generator: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub units: Option<usize>,
    #[serde(default)]
    pub x_range: Option<[f64; 2]>,
    #[serde(default)]
    pub resolution: Option<f64>,
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub cell_volumes: Option<Vec<f64>>,
    #[serde(default)]
    pub measure: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    /// "identity" or "power"; exclusive with `values`.
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub exponent: Option<i32>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsSpec {
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

/// One grid axis, in one of two layouts: `resolution` fixes the node
/// spacing (with nodes inset from the range ends by `offset` of the range),
/// `count` fixes the node number on exactly [range], with explicit open
/// `bounds` strictly containing it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub name: String,
    pub range: [f64; 2],
    #[serde(default)]
    pub resolution: Option<f64>,
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    pub space: SpaceSpec,
    /// Defaults to one identity observable per grid axis.
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    pub total: Vec<f64>,
    #[serde(default)]
    pub solver: Option<SolverBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub feasibility_margin: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Further specs run end to end as part of the suite, paths relative
    /// to the check spec's directory.
    #[serde(default)]
    pub reference_specs: Vec<ReferenceSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub path: String,
    pub command: String,
    #[serde(default)]
    pub finite_bath: bool,
    #[serde(default)]
    pub n: Option<usize>,
}

fn default_seed() -> u64 {
    17
}

fn default_instances() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Solve,
    Prior,
    Fluct,
    Repeat,
    Check,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::Prior => "prior",
            Task::Fluct => "fluct",
            Task::Repeat => "repeat",
            Task::Check => "check",
        }
    }
}

/// Command-line settings that fill in or replace spec fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub finite_bath: bool,
}

fn usage(path: &str, msg: &str) -> CliError {
    CliError::Usage(format!("{path}: {msg}"))
}

pub fn validate(spec: &ModelSpec, task: Task, ov: &Overrides) -> Result<(), CliError> {
    if spec.schema_version != 1 {
        return Err(usage(
            "schema_version",
            &format!("unsupported version {} (this build reads version 1)", spec.schema_version),
        ));
    }
    if spec.name.is_empty() {
        return Err(usage("name", "must not be empty"));
    }
    if let Some(s) = &spec.solver {
        validate_solver(s, "solver")?;
    }
    match task {
        Task::Check => {
            let cb = spec
                .check
                .as_ref()
                .ok_or_else(|| usage("check", "block is required by the check subcommand"))?;
            if cb.instances == 0 {
                return Err(usage("check.instances", "must be at least 1"));
            }
            for (i, r) in cb.reference_specs.iter().enumerate() {
                let path = format!("check.reference_specs[{i}]");
                if r.path.is_empty() {
                    return Err(usage(&format!("{path}.path"), "must not be empty"));
                }
                match r.command.as_str() {
                    "solve" | "prior" | "fluct" | "repeat" => {}
                    "check" => return Err(usage(&format!("{path}.command"), "reference specs cannot nest check")),
                    other => {
                        return Err(usage(
                            &format!("{path}.command"),
                            &format!("unknown command '{other}' (expected solve, prior, fluct or repeat)"),
                        ))
                    }
                }
            }
            return Ok(());
        }
        Task::Solve => {
            let space = require_space(spec, "solve")?;
            validate_space(space, "space")?;
            if spec.observables.is_empty() {
                return Err(usage("observables", "solve needs at least one observable"));
            }
            validate_observables(&spec.observables, "observables")?;
            let cs = spec
                .constraints
                .as_ref()
                .ok_or_else(|| usage("constraints", "block is required by solve"))?;
            if cs.targets.len() != spec.observables.len() {
                return Err(usage(
                    "constraints.targets",
                    &format!("expected {} entries, one per observable, got {}", spec.observables.len(), cs.targets.len()),
                ));
            }
            if let Some(i) = cs.targets.iter().position(|t| !t.is_finite()) {
                return Err(usage(&format!("constraints.targets[{i}]"), "must be finite"));
            }
        }
        Task::Prior | Task::Fluct | Task::Repeat => {
            let space = require_space(spec, task.name())?;
            validate_space(space, "space")?;
            let grid = spec
                .parameter_grid
                .as_ref()
                .ok_or_else(|| usage("parameter_grid", &format!("block is required by {}", task.name())))?;
            if grid.axes.is_empty() {
                return Err(usage("parameter_grid.axes", "needs at least one axis"));
            }
            for (i, a) in grid.axes.iter().enumerate() {
                validate_axis(a, &format!("parameter_grid.axes[{i}]"))?;
            }
            validate_family(spec, grid, task)?;
            match task {
                Task::Prior => {
                    let alphas = ov.alpha.as_ref().or(spec.alpha.as_ref());
                    if let Some(list) = alphas {
                        if let Some(i) = list.iter().position(|a| !a.is_finite()) {
                            return Err(usage(&format!("alpha[{i}]"), "must be finite"));
                        }
                    }
                    if let Some(obs) = &spec.observations {
                        if let Some(i) = obs.iter().position(|o| !o.is_finite()) {
                            return Err(usage(&format!("observations[{i}]"), "must be finite"));
                        }
                    }
                }
                Task::Fluct => {
                    let lam = spec
                        .lambda0
                        .as_ref()
                        .ok_or_else(|| usage("lambda0", "block is required by fluct"))?;
                    if lam.len() != grid.axes.len() {
                        return Err(usage(
                            "lambda0",
                            &format!("expected {} entries, one per grid axis, got {}", grid.axes.len(), lam.len()),
                        ));
                    }
                    if let Some(i) = lam.iter().position(|l| !l.is_finite()) {
                        return Err(usage(&format!("lambda0[{i}]"), "must be finite"));
                    }
                    if let Some(t) = spec.agreement_tolerance {
                        if !(t > 0.0) || !t.is_finite() {
                            return Err(usage("agreement_tolerance", "must be a positive number"));
                        }
                    }
                    if ov.finite_bath {
                        let bath = spec
                            .bath
                            .as_ref()
                            .ok_or_else(|| usage("bath", "block is required with --finite-bath"))?;
                        validate_space(&bath.space, "bath.space")?;
                        if !bath.observables.is_empty() {
                            validate_observables(&bath.observables, "bath.observables")?;
                            if bath.observables.len() != grid.axes.len() {
                                return Err(usage(
                                    "bath.observables",
                                    &format!("expected {} entries, one per grid axis, got {}", grid.axes.len(), bath.observables.len()),
                                ));
                            }
                        }
                        if bath.total.len() != grid.axes.len() {
                            return Err(usage(
                                "bath.total",
                                &format!("expected {} entries, one per grid axis, got {}", grid.axes.len(), bath.total.len()),
                            ));
                        }
                        if let Some(i) = bath.total.iter().position(|t| !t.is_finite()) {
                            return Err(usage(&format!("bath.total[{i}]"), "must be finite"));
                        }
                        if let Some(s) = &bath.solver {
                            validate_solver(s, "bath.solver")?;
                        }
                    }
                }
                Task::Repeat => {
                    let n = ov.n.or(spec.repetitions);
                    match n {
                        Some(n) if n >= 1 => {}
                        _ => {
                            return Err(usage(
                                "repetitions",
                                "a positive repetition count is required (set the field or pass --n)",
                            ))
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(())
}

fn require_space<'a>(spec: &'a ModelSpec, task: &str) -> Result<&'a SpaceSpec, CliError> {
    spec.space
        .as_ref()
        .ok_or_else(|| usage("space", &format!("block is required by {task}")))
}

fn validate_family(spec: &ModelSpec, grid: &GridSpec, task: Task) -> Result<(), CliError> {
    match spec.family.as_deref().unwrap_or("by-target") {
        "by-target" => {
            if spec.observables.is_empty() {
                return Err(usage("observables", "a target-parametrized family needs one observable per grid axis"));
            }
            validate_observables(&spec.observables, "observables")?;
            if spec.observables.len() != grid.axes.len() {
                return Err(usage(
                    "parameter_grid.axes",
                    &format!("{} axes for {} observables", grid.axes.len(), spec.observables.len()),
                ));
            }
        }
        "gaussian-location-scale" => {
            if task == Task::Fluct {
                return Err(usage("family", "fluct runs on target-parametrized families"));
            }
            if grid.axes.len() != 2 {
                return Err(usage(
                    "parameter_grid.axes",
                    &format!("the gaussian-location-scale family takes exactly 2 axes (location, scale), got {}", grid.axes.len()),
                ));
            }
            if !spec.observables.is_empty() {
                return Err(usage("observables", "the gaussian-location-scale family derives its own observables"));
            }
        }
        other => return Err(usage("family", &format!("unknown family '{other}'"))),
    }
    Ok(())
}

fn validate_space(s: &SpaceSpec, path: &str) -> Result<(), CliError> {
    if let Some(g) = &s.generator {
        let inline = [
            (s.points.is_some(), "points"),
            (s.dim.is_some(), "dim"),
            (s.cell_volumes.is_some(), "cell_volumes"),
            (s.measure.is_some(), "measure"),
        ];
        if let Some((_, f)) = inline.iter().find(|(set, _)| *set) {
            return Err(usage(&format!("{path}.{f}"), "inline fields are not allowed with a generator"));
        }
        let forbid = |cond: bool, field: &str, gen: &str| -> Result<(), CliError> {
            if cond {
                Err(usage(&format!("{path}.{field}"), &format!("only meaningful for the {gen} generator")))
            } else {
                Ok(())
            }
        };
        match g.as_str() {
            "two-state" => {
                forbid(s.k.is_some(), "k", "k-state")?;
                forbid(s.units.is_some(), "units", "binomial-units")?;
                forbid(s.x_range.is_some(), "x_range", "gaussian-grid")?;
                forbid(s.resolution.is_some(), "resolution", "gaussian-grid")?;
            }
            "k-state" => {
                forbid(s.units.is_some(), "units", "binomial-units")?;
                forbid(s.x_range.is_some(), "x_range", "gaussian-grid")?;
                forbid(s.resolution.is_some(), "resolution", "gaussian-grid")?;
                match s.k {
                    Some(k) if k >= 2 => {}
                    _ => return Err(usage(&format!("{path}.k"), "the k-state generator needs k >= 2")),
                }
            }
            "binomial-units" => {
                forbid(s.k.is_some(), "k", "k-state")?;
                forbid(s.x_range.is_some(), "x_range", "gaussian-grid")?;
                forbid(s.resolution.is_some(), "resolution", "gaussian-grid")?;
                match s.units {
                    Some(n) if n >= 1 => {}
                    _ => return Err(usage(&format!("{path}.units"), "the binomial-units generator needs units >= 1")),
                }
            }
            "gaussian-grid" => {
                forbid(s.k.is_some(), "k", "k-state")?;
                forbid(s.units.is_some(), "units", "binomial-units")?;
                let [lo, hi] = s
                    .x_range
                    .ok_or_else(|| usage(&format!("{path}.x_range"), "the gaussian-grid generator needs x_range"))?;
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(usage(&format!("{path}.x_range"), "must be a finite interval [lo, hi] with lo < hi"));
                }
                match s.resolution {
                    Some(r) if r > 0.0 && r.is_finite() && r <= hi - lo => {}
                    _ => {
                        return Err(usage(
                            &format!("{path}.resolution"),
                            "the gaussian-grid generator needs a positive node spacing no wider than x_range",
                        ))
                    }
                }
            }
            other => {
                return Err(usage(
                    &format!("{path}.generator"),
                    &format!("unknown generator '{other}' (expected two-state, k-state, binomial-units or gaussian-grid)"),
                ))
            }
        }
        return Ok(());
    }
    let points = s
        .points
        .as_ref()
        .ok_or_else(|| usage(&format!("{path}.points"), "an inline space needs points (or set a generator)"))?;
    let cells = s
        .cell_volumes
        .as_ref()
        .ok_or_else(|| usage(&format!("{path}.cell_volumes"), "an inline space needs cell volumes"))?;
    let measure = s
        .measure
        .as_ref()
        .ok_or_else(|| usage(&format!("{path}.measure"), "an inline space needs a base measure"))?;
    let dim = s.dim.unwrap_or(1);
    if dim == 0 {
        return Err(usage(&format!("{path}.dim"), "must be at least 1"));
    }
    if points.is_empty() || points.len() % dim != 0 {
        return Err(usage(
            &format!("{path}.points"),
            &format!("{} coordinates do not split into points of dimension {dim}", points.len()),
        ));
    }
    let n = points.len() / dim;
    if cells.len() != n {
        return Err(usage(&format!("{path}.cell_volumes"), &format!("expected {n} entries, got {}", cells.len())));
    }
    if measure.len() != n {
        return Err(usage(&format!("{path}.measure"), &format!("expected {n} entries, got {}", measure.len())));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(usage(&format!("{path}.points"), "must be finite"));
    }
    if cells.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(usage(&format!("{path}.cell_volumes"), "must be finite and positive"));
    }
    if measure.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(usage(&format!("{path}.measure"), "must be finite and nonnegative"));
    }
    Ok(())
}

fn validate_observables(list: &[ObservableSpec], path: &str) -> Result<(), CliError> {
    for (i, o) in list.iter().enumerate() {
        let p = format!("{path}[{i}]");
        if o.name.is_empty() {
            return Err(usage(&format!("{p}.name"), "must not be empty"));
        }
        match (&o.builtin, &o.values) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(usage(&p, "exactly one of builtin or values"));
            }
            (Some(b), None) => match b.as_str() {
                "identity" => {
                    if o.exponent.is_some() {
                        return Err(usage(&format!("{p}.exponent"), "only meaningful for the power builtin"));
                    }
                }
                "power" => {
                    if o.exponent.is_none() {
                        return Err(usage(&format!("{p}.exponent"), "the power builtin needs an exponent"));
                    }
                }
                other => {
                    return Err(usage(
                        &format!("{p}.builtin"),
                        &format!("unknown builtin '{other}' (expected identity or power)"),
                    ))
                }
            },
            (None, Some(v)) => {
                if o.exponent.is_some() {
                    return Err(usage(&format!("{p}.exponent"), "only meaningful for the power builtin"));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(usage(&format!("{p}.values"), "must be finite"));
                }
            }
        }
    }
    Ok(())
}

fn validate_axis(a: &AxisSpec, path: &str) -> Result<(), CliError> {
    if a.name.is_empty() {
        return Err(usage(&format!("{path}.name"), "must not be empty"));
    }
    let [lo, hi] = a.range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(usage(&format!("{path}.range"), "must be a finite interval [lo, hi] with lo < hi"));
    }
    match (a.resolution, a.count) {
        (Some(_), Some(_)) | (None, None) => Err(usage(
            path,
            "exactly one of resolution or count selects the node layout",
        )),
        (Some(r), None) => {
            if !(r > 0.0) || !r.is_finite() {
                return Err(usage(&format!("{path}.resolution"), "must be a positive number"));
            }
            if a.bounds.is_some() {
                return Err(usage(
                    &format!("{path}.bounds"),
                    "only the count form takes explicit bounds; the resolution form uses range as bounds",
                ));
            }
            let off = a.offset.unwrap_or(0.0);
            if !(off >= 0.0) || !(off < 0.5) {
                return Err(usage(&format!("{path}.offset"), "must lie in [0, 0.5)"));
            }
            Ok(())
        }
        (None, Some(c)) => {
            if c < 2 {
                return Err(usage(&format!("{path}.count"), "needs at least 2 nodes"));
            }
            if a.offset.is_some() {
                return Err(usage(&format!("{path}.offset"), "only meaningful for the resolution form"));
            }
            let [blo, bhi] = a
                .bounds
                .ok_or_else(|| usage(&format!("{path}.bounds"), "the count form needs open bounds containing range"))?;
            if !(blo < lo && hi < bhi) || !blo.is_finite() || !bhi.is_finite() {
                return Err(usage(
                    &format!("{path}.bounds"),
                    "must strictly contain range (bounds are open interval ends)",
                ));
            }
            Ok(())
        }
    }
}

fn validate_solver(s: &SolverBlock, path: &str) -> Result<(), CliError> {
    if let Some(t) = s.tolerance {
        if !(t > 0.0) || !t.is_finite() {
            return Err(usage(&format!("{path}.tolerance"), "must be a positive number"));
        }
    }
    if let Some(n) = s.max_iterations {
        if n == 0 {
            return Err(usage(&format!("{path}.max_iterations"), "must be at least 1"));
        }
    }
    if let Some(d) = s.damping {
        if !(d > 0.0 && d < 1.0) {
            return Err(usage(&format!("{path}.damping"), "must lie in (0, 1)"));
        }
    }
    if let Some(m) = s.feasibility_margin {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(usage(&format!("{path}.feasibility_margin"), "must be nonnegative"));
        }
    }
    Ok(())
}
