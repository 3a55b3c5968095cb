//! Configuration-driven discovery runs, their artifacts and parameter sweeps.

mod config;
mod report;

pub use config::{
    AlgebraicSection, DynamicsSection, Eps, LibrarySpec, PipelineConfig, SweepSpec, TiebreakKind,
    CONFIG_SCHEMA,
};
pub use report::{
    emit_report, DiagnosticsRecord, Report, ReportFormat, StepRecord, TraceFile, TraceRun,
};

use crate::algfinder::{
    run_algebraic_finder, AlgebraicResult, CandidateRestriction, FinderError, TiebreakPolicy,
};
use crate::benchgen::{recovery_metrics, BenchError, RecoveryMetrics};
use crate::dynfinder::{
    assemble_dae, assign_variable_roles, discover_dynamics, dynamic_ranges, format_model,
    refit_coefficients, DiscoveredModel, DynError, DynamicsConfig, TraceEntry,
};
use crate::sparsereg::SparseError;
use crate::termlib::{
    build_grid_library, build_polynomial_library, evaluate_library, grid_phase, grid_power,
    grid_speed, CandidateLibrary, Term, TermError,
};
use crate::timeseries::{
    derivative_table, load_table, smooth_table, TimeSeriesError, TimeSeriesTable,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

type Table = TimeSeriesTable<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    NoRelations,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
            ErrorKind::NoRelations => 5,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config_error",
            ErrorKind::Data => "data_error",
            ErrorKind::Numerical => "numerical_failure",
            ErrorKind::NoRelations => "no_relations_found",
        }
    }
}

/// Failure of a pipeline stage, tagged with the module and operation that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{module}::{operation}: {message}")]
pub struct PipelineError {
    pub module: String,
    pub operation: String,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    module: &'a str,
    operation: &'a str,
    code: String,
    exit_code: i32,
    message: &'a str,
}

impl PipelineError {
    pub fn new(module: &str, operation: &str, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            module: module.into(),
            operation: operation.into(),
            kind,
            message: message.into(),
        }
    }

    /// Module-qualified code such as `algfinder.no_relations_found`.
    pub fn code(&self) -> String {
        format!("{}.{}", self.module, self.kind.name())
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON diagnostic.
    pub fn to_json_line(&self) -> String {
        let line = ErrorLine {
            module: &self.module,
            operation: &self.operation,
            code: self.code(),
            exit_code: self.exit_code(),
            message: &self.message,
        };
        serde_json::to_string(&line).expect("error serializes")
    }
}

fn table_error(operation: &str, e: TimeSeriesError) -> PipelineError {
    use TimeSeriesError::*;
    let kind = match e {
        EvenWindow(_)
        | WindowNotAbovePolyorder { .. }
        | UnsupportedOrder(_)
        | PolyorderBelowOrder { .. }
        | NegativeNoise(_) => ErrorKind::Config,
        _ => ErrorKind::Data,
    };
    PipelineError::new("timeseries", operation, kind, e.to_string())
}

fn term_error(operation: &str, e: TermError) -> PipelineError {
    let kind = if matches!(e, TermError::NonFinite(_)) {
        ErrorKind::Data
    } else {
        ErrorKind::Config
    };
    PipelineError::new("termlib", operation, kind, e.to_string())
}

fn sparse_kind(e: &SparseError) -> ErrorKind {
    match e {
        SparseError::NonFinite => ErrorKind::Data,
        SparseError::InvalidConfig(_) => ErrorKind::Config,
        _ => ErrorKind::Numerical,
    }
}

fn finder_error(e: FinderError<f64>) -> PipelineError {
    let kind = match &e {
        FinderError::NoRelationFound { .. } => ErrorKind::NoRelations,
        FinderError::InvalidConfig(_) => ErrorKind::Config,
        FinderError::Term(t) => return term_error("run_algebraic_finder", t.clone()),
        FinderError::Sparse(s) => sparse_kind(s),
        _ => ErrorKind::Numerical,
    };
    PipelineError::new("algfinder", "run_algebraic_finder", kind, e.to_string())
}

fn dyn_error(operation: &str, e: DynError) -> PipelineError {
    let kind = match &e {
        DynError::UnknownPreference(_) => ErrorKind::Config,
        DynError::Term(t) => return term_error(operation, t.clone()),
        DynError::Sparse(s) => sparse_kind(s),
        DynError::Format(_) => ErrorKind::Data,
        _ => ErrorKind::Numerical,
    };
    PipelineError::new("dynfinder", operation, kind, e.to_string())
}

fn bench_error(operation: &str, e: BenchError) -> PipelineError {
    let kind = match &e {
        BenchError::Invalid(_) => ErrorKind::Config,
        BenchError::Table(t) => return table_error(operation, t.clone()),
        BenchError::Incomparable(_) => ErrorKind::Data,
        BenchError::Integrate(_) | BenchError::NoSteadyState => ErrorKind::Numerical,
    };
    PipelineError::new("benchgen", operation, kind, e.to_string())
}

fn config_error(operation: &str, message: String) -> PipelineError {
    PipelineError::new("cli", operation, ErrorKind::Config, message)
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub model: DiscoveredModel<f64>,
    pub trace: TraceFile,
    pub metrics: Option<RecoveryMetrics>,
}

impl RunOutcome {
    pub fn model_json(&self) -> String {
        self.model.to_json()
    }

    pub fn trace_json(&self) -> String {
        self.trace.to_json()
    }

    pub fn equations(&self) -> String {
        format_model(&self.model)
    }

    pub fn metrics_json(&self) -> Option<String> {
        self.metrics.as_ref().map(report::pretty)
    }

    /// Writes model.json, trace.json, equations.txt and, with a truth model, metrics.json.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), PipelineError> {
        let io = |e: std::io::Error| {
            PipelineError::new(
                "cli",
                "write_artifacts",
                ErrorKind::Data,
                format!("{}: {e}", dir.display()),
            )
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("model.json"), self.model_json()).map_err(io)?;
        std::fs::write(dir.join("trace.json"), self.trace_json()).map_err(io)?;
        std::fs::write(dir.join("equations.txt"), self.equations()).map_err(io)?;
        if let Some(m) = self.metrics_json() {
            std::fs::write(dir.join("metrics.json"), m).map_err(io)?;
        }
        Ok(())
    }
}

/// Measurements plus the reference model, if one is known.
#[derive(Debug, Clone)]
pub struct RunData {
    pub table: Table,
    pub truth: Option<DiscoveredModel<f64>>,
}

pub fn load_truth(path: &Path) -> Result<DiscoveredModel<f64>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("load_truth", format!("{}: {e}", path.display())))?;
    DiscoveredModel::from_json(&text).map_err(|e| dyn_error("load_truth", e))
}

pub fn load_data(cfg: &PipelineConfig) -> Result<RunData, PipelineError> {
    let (table, mut truth) = match (&cfg.input, &cfg.generator) {
        (Some(path), None) => {
            let file = std::fs::File::open(path)
                .map_err(|e| config_error("load_data", format!("{}: {e}", path.display())))?;
            (
                load_table(std::io::BufReader::new(file))
                    .map_err(|e| table_error("load_table", e))?,
                None,
            )
        }
        (None, Some(generator)) => {
            let table = generator
                .simulate()
                .map_err(|e| bench_error("simulate", e))?;
            (
                table,
                Some(generator.truth().map_err(|e| bench_error("truth", e))?),
            )
        }
        _ => {
            return Err(config_error(
                "load_data",
                "exactly one of input or generator is required".into(),
            ))
        }
    };
    if let Some(path) = &cfg.truth {
        truth = Some(load_truth(path)?);
    }
    Ok(RunData { table, truth })
}

/// Validates the config, loads data, discovers the model and writes artifacts to `out`
/// (or the configured output directory). Nothing is written on failure.
pub fn run_pipeline(cfg: &PipelineConfig, out: Option<&Path>) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let outcome = discover(cfg, &data)?;
    if let Some(dir) = out.or(cfg.output.as_deref()) {
        outcome.write_artifacts(dir)?;
    }
    Ok(outcome)
}

/// State set, aliases and derivative orders after filling in library-specific defaults.
struct Plan {
    states: Vec<String>,
    aliases: BTreeMap<String, String>,
    orders: BTreeMap<String, usize>,
}

fn plan(cfg: &PipelineConfig, table: &Table) -> Result<Plan, PipelineError> {
    let mut aliases = cfg.dynamics.aliases.clone();
    let mut orders = BTreeMap::new();
    let states: Vec<String> = match &cfg.library {
        LibrarySpec::Polynomial {
            states: Some(s), ..
        } => s.clone(),
        LibrarySpec::Polynomial { states: None, .. } => {
            let hidden: BTreeSet<&String> = aliases.values().collect();
            table
                .names()
                .iter()
                .filter(|n| !hidden.contains(n))
                .cloned()
                .collect()
        }
        LibrarySpec::Grid {
            nodes, generators, ..
        } => {
            for i in 1..=*nodes {
                aliases
                    .entry(grid_phase(i))
                    .or_insert_with(|| grid_speed(i));
                orders.insert(grid_phase(i), if generators.contains(&i) { 2 } else { 1 });
            }
            (1..=*nodes)
                .map(grid_power)
                .chain((1..=*nodes).map(grid_phase))
                .collect()
        }
    };
    orders.extend(cfg.dynamics.orders.iter().map(|(k, v)| (k.clone(), *v)));
    let known: BTreeSet<&str> = states.iter().map(String::as_str).collect();
    let missing = |what: &str, name: &str| {
        config_error("validate", format!("{what} {name:?} is not a state"))
    };
    for s in &states {
        if table.column_index(s).is_none() {
            return Err(config_error(
                "validate",
                format!("state {s:?} missing from data"),
            ));
        }
    }
    for p in cfg.dynamics.preference.iter().flatten() {
        if !known.contains(p.as_str()) {
            return Err(missing("preference", p));
        }
    }
    for (s, k) in &orders {
        if !known.contains(s.as_str()) {
            return Err(missing("derivative order for", s));
        }
        if !(1..=2).contains(k) {
            return Err(config_error(
                "validate",
                format!("derivative order {k} for {s:?} is not 1 or 2"),
            ));
        }
    }
    for (s, a) in &aliases {
        if !known.contains(s.as_str()) {
            return Err(missing("alias for", s));
        }
        if table.column_index(a).is_none() {
            return Err(config_error(
                "validate",
                format!("alias column {a:?} missing from data"),
            ));
        }
    }
    Ok(Plan {
        states,
        aliases,
        orders,
    })
}

/// Derivative of the configured order for each differential state.
fn build_targets(
    raw: &Table,
    smoothed: &Table,
    states: &[String],
    plan: &Plan,
    cfg: &PipelineConfig,
) -> Result<Table, PipelineError> {
    let mut columns = Vec::with_capacity(states.len());
    for s in states {
        let order = plan.orders.get(s).copied().unwrap_or(1);
        let terr = |e| table_error("derivative_table", e);
        let col = match plan.aliases.get(s) {
            Some(a) if order == 1 => smoothed.column(a).map_err(terr)?,
            Some(a) => {
                let d =
                    derivative_table(&raw.select(&[a]).map_err(terr)?, order - 1, cfg.derivative)
                        .map_err(terr)?;
                d.table.column(a).map_err(terr)?
            }
            None => {
                let d = derivative_table(&raw.select(&[s]).map_err(terr)?, order, cfg.derivative)
                    .map_err(terr)?;
                d.table.column(s).map_err(terr)?
            }
        };
        columns.push((s.clone(), col));
    }
    let n = raw.n_rows();
    let values = nalgebra::DMatrix::from_fn(n, columns.len(), |r, c| columns[c].1[r]);
    let names = columns.into_iter().map(|(s, _)| s).collect();
    Table::new(
        raw.times().to_vec(),
        names,
        values,
        raw.segment_ids().to_vec(),
    )
    .map_err(|e| table_error("derivative_table", e))
}

struct AlgebraicStage {
    results: Vec<(String, AlgebraicResult<f64>)>,
    relations: Vec<crate::termlib::AlgebraicRelation<f64>>,
    dynamic_library: CandidateLibrary,
    regressors: BTreeMap<String, Vec<Term>>,
}

fn polynomial_stage(
    lib0: CandidateLibrary,
    smoothed: &Table,
    cfg: &PipelineConfig,
) -> Result<AlgebraicStage, PipelineError> {
    let alg = run_algebraic_finder(&lib0, smoothed, &cfg.algebraic.finder_config())
        .map_err(finder_error)?;
    Ok(AlgebraicStage {
        relations: alg.relations.clone(),
        dynamic_library: alg.refined_library.clone(),
        results: vec![("all".into(), alg)],
        regressors: BTreeMap::new(),
    })
}

/// Per-node power balance: `Pe_i` against the sine couplings of node `i`, then
/// node-local dynamics over `{1, Pe_i, phi_i, dphi_i}` (without `dphi_i` for first-order nodes).
fn grid_stage(
    nodes: usize,
    smoothed: &Table,
    cfg: &PipelineConfig,
    plan: &Plan,
) -> Result<AlgebraicStage, PipelineError> {
    let base = cfg.algebraic.finder_config();
    let runs: Vec<(usize, Result<AlgebraicResult<f64>, PipelineError>)> = (1..=nodes)
        .into_par_iter()
        .map(|i| {
            let run = || {
                let lib = build_grid_library(nodes, Some(i))
                    .map_err(|e| term_error("build_grid_library", e))?;
                let pe = Term::state(&grid_power(i));
                let sines: Vec<Term> = lib
                    .terms()
                    .iter()
                    .filter(|t| !t.atoms().is_empty())
                    .cloned()
                    .collect();
                let mut c = base.clone();
                c.k = Some(c.k.unwrap_or(1));
                c.tiebreak = TiebreakPolicy::Preference(vec![pe.encode()]);
                c.restriction = Some(CandidateRestriction {
                    targets: Some(vec![pe.clone()]),
                    regressors: BTreeMap::from([(pe, sines)]),
                });
                match run_algebraic_finder(&lib, smoothed, &c) {
                    Ok(r) => Ok(r),
                    Err(FinderError::NoRelationFound { partial, .. }) => Ok(*partial),
                    Err(e) => Err(finder_error(e)),
                }
            };
            (i, run())
        })
        .collect();
    let mut results = Vec::new();
    let mut relations = Vec::new();
    for (i, r) in runs {
        let mut r = r?;
        for rel in r
            .relations
            .iter_mut()
            .chain(r.trace.iter_mut().map(|s| &mut s.relation))
        {
            rel.iteration = i;
        }
        for s in r.trace.iter_mut() {
            s.iteration = i;
        }
        relations.extend(r.relations.iter().cloned());
        results.push((format!("node {i}"), r));
    }
    if relations.is_empty() && base.k.unwrap_or(1) > 0 {
        return Err(PipelineError::new(
            "algfinder",
            "run_algebraic_finder",
            ErrorKind::NoRelations,
            "no power-balance relation found at any node",
        ));
    }
    let mut terms = vec![Term::constant()];
    let mut regressors = BTreeMap::new();
    for i in 1..=nodes {
        let local = [grid_power(i), grid_phase(i), grid_speed(i)].map(|s| Term::state(&s));
        terms.extend(local.iter().cloned());
        let first_order = plan.orders.get(&grid_phase(i)).copied().unwrap_or(1) == 1;
        let speed = Term::state(&grid_speed(i));
        let allowed = std::iter::once(Term::constant())
            .chain(local)
            .filter(|t| !(first_order && *t == speed));
        regressors.insert(grid_phase(i), allowed.collect());
    }
    let dynamic_library =
        CandidateLibrary::new(terms).map_err(|e| term_error("build_grid_library", e))?;
    Ok(AlgebraicStage {
        results,
        relations,
        dynamic_library,
        regressors,
    })
}

/// Runs discovery on already loaded data.
pub fn discover(cfg: &PipelineConfig, data: &RunData) -> Result<RunOutcome, PipelineError> {
    let raw = &data.table;
    let plan = plan(cfg, raw)?;
    let smoothed = match cfg.smoothing {
        Some(p) => smooth_table(raw, p).map_err(|e| table_error("smooth_table", e))?,
        None => raw.clone(),
    };
    let state_refs: Vec<&str> = plan.states.iter().map(String::as_str).collect();
    let stage = match &cfg.library {
        LibrarySpec::Polynomial {
            degree, constant, ..
        } => {
            let lib = build_polynomial_library(&state_refs, *degree, *constant)
                .map_err(|e| term_error("build_polynomial_library", e))?;
            polynomial_stage(lib, &smoothed, cfg)?
        }
        LibrarySpec::Grid {
            nodes,
            restricted: false,
            ..
        } => {
            let lib = build_grid_library(*nodes, None)
                .map_err(|e| term_error("build_grid_library", e))?;
            polynomial_stage(lib, &smoothed, cfg)?
        }
        LibrarySpec::Grid {
            nodes,
            restricted: true,
            ..
        } => grid_stage(*nodes, &smoothed, cfg, &plan)?,
    };
    let state_table = smoothed
        .select(&state_refs)
        .map_err(|e| table_error("select", e))?;
    let ranges = dynamic_ranges(&state_table);
    let roles = assign_variable_roles(
        &plan.states,
        &stage.relations,
        cfg.dynamics.preference.as_deref(),
        &ranges,
    )
    .map_err(|e| dyn_error("assign_variable_roles", e))?;
    let targets = build_targets(raw, &smoothed, &roles.differential, &plan, cfg)?;
    let refined = evaluate_library(&stage.dynamic_library, &smoothed, true)
        .map_err(|e| term_error("evaluate_library", e))?;
    let dyn_cfg = DynamicsConfig {
        sparse: cfg.dynamics.sparse,
        orders: roles
            .differential
            .iter()
            .map(|s| (s.clone(), plan.orders.get(s).copied().unwrap_or(1)))
            .collect(),
        regressors: stage.regressors.clone(),
    };
    let outcome = discover_dynamics(&refined, &targets, &roles, &dyn_cfg)
        .map_err(|e| dyn_error("discover_dynamics", e))?;
    let mut model = assemble_dae(
        &plan.states,
        &stage.relations,
        &outcome,
        &roles,
        Some(&smoothed),
    )
    .map_err(|e| dyn_error("assemble_dae", e))?;
    model.trace = stage
        .results
        .iter()
        .flat_map(|(_, r)| r.trace.iter().map(TraceEntry::from_step))
        .collect();
    if cfg.dynamics.refit {
        model = refit_coefficients(&model, &smoothed, &targets)
            .map_err(|e| dyn_error("refit_coefficients", e))?;
    }
    let trace = TraceFile {
        runs: stage
            .results
            .iter()
            .map(|(label, r)| TraceRun::from_result(label, r))
            .collect(),
    };
    let metrics = match &data.truth {
        Some(truth) => Some(
            recovery_metrics(&model, truth, &cfg.metrics)
                .map_err(|e| bench_error("recovery_metrics", e))?,
        ),
        None => None,
    };
    Ok(RunOutcome {
        model,
        trace,
        metrics,
    })
}

/// One cell of a hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub threshold: f64,
    pub status: String,
    pub relations: Option<usize>,
    pub final_log_condition: Option<f64>,
    pub stop_reason: Option<String>,
    pub ode_terms: Option<usize>,
    pub mean_ode_score: Option<f64>,
    pub recovery_pct: Option<f64>,
}

/// Reruns discovery for every `(alpha, threshold)` pair, applied to both the
/// algebraic and the dynamic solver. Rows follow the grid order.
pub fn run_sweep(cfg: &PipelineConfig, data: &RunData) -> Result<Vec<SweepRow>, PipelineError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| config_error("run_sweep", "config has no sweep block".into()))?;
    let grid: Vec<(f64, f64)> = sweep
        .alpha
        .iter()
        .flat_map(|a| sweep.threshold.iter().map(move |t| (*a, *t)))
        .collect();
    Ok(grid
        .par_iter()
        .map(|&(alpha, threshold)| {
            let mut c = cfg.clone();
            c.algebraic.sparse.alpha = alpha;
            c.algebraic.sparse.threshold = threshold;
            c.dynamics.sparse.alpha = alpha;
            c.dynamics.sparse.threshold = threshold;
            let mut row = SweepRow {
                alpha,
                threshold,
                status: "ok".into(),
                relations: None,
                final_log_condition: None,
                stop_reason: None,
                ode_terms: None,
                mean_ode_score: None,
                recovery_pct: None,
            };
            match discover(&c, data) {
                Ok(out) => {
                    row.relations = Some(out.model.algebraic.len());
                    if let Some(run) = out.trace.runs.first() {
                        let last = run.steps.last().map_or(&run.initial, |s| &s.after);
                        row.final_log_condition = Some(last.log_condition);
                        row.stop_reason = serde_json::to_value(run.stop_reason)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_owned));
                    }
                    row.ode_terms =
                        Some(out.model.odes.values().map(|e| e.coefficients.len()).sum());
                    let scores: Vec<f64> =
                        out.model.odes.values().filter_map(|e| e.score).collect();
                    if !scores.is_empty() {
                        row.mean_ode_score = Some(crate::dynfinder::round_sig(
                            scores.iter().sum::<f64>() / scores.len() as f64,
                        ));
                    }
                    row.recovery_pct = out.metrics.map(|m| m.algebraic_recovery_pct);
                }
                Err(e) => row.status = e.code(),
            }
            row
        })
        .collect())
}

/// Sweep rows as CSV.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from(
        "alpha,threshold,status,relations,final_log_condition,stop_reason,ode_terms,mean_ode_score,recovery_pct\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.alpha,
            r.threshold,
            r.status,
            r.relations.map_or(String::new(), |v| v.to_string()),
            opt(r.final_log_condition),
            r.stop_reason.clone().unwrap_or_default(),
            r.ode_terms.map_or(String::new(), |v| v.to_string()),
            opt(r.mean_ode_score),
            opt(r.recovery_pct),
        ));
    }
    out
}
