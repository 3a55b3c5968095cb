use crate::algfinder::{AlgebraicResult, RefinementStep, StopReason, SvdDiagnostics};
use crate::dynfinder::{format_model, round_sig, DiscoveredModel, ModelFile};
use crate::scalar::Real;
use crate::termlib::Term;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsRecord {
    pub singular_values: Vec<f64>,
    pub variance_ratios: Vec<f64>,
    pub numeric_rank: usize,
    pub nullity_estimate: usize,
    pub log_condition: f64,
}

impl DiagnosticsRecord {
    pub fn from_diagnostics<T: Real>(d: &SvdDiagnostics<T>) -> Self {
        let r = |v: &[T]| v.iter().map(|x| round_sig(x.as_f64())).collect();
        Self {
            singular_values: r(&d.singular_values),
            variance_ratios: r(&d.variance_ratios),
            numeric_rank: d.numeric_rank,
            nullity_estimate: d.nullity_estimate,
            log_condition: round_sig(d.log_condition.as_f64()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub iteration: usize,
    pub terms: Vec<Term>,
    pub coeffs: Vec<f64>,
    pub score: f64,
    pub pivot: Term,
    pub removed: Vec<Term>,
    pub before: DiagnosticsRecord,
    pub after: DiagnosticsRecord,
}

impl StepRecord {
    pub fn from_step<T: Real>(s: &RefinementStep<T>) -> Self {
        Self {
            iteration: s.iteration,
            terms: s.relation.coefficients.keys().cloned().collect(),
            coeffs: s
                .relation
                .coefficients
                .values()
                .map(|c| round_sig(c.as_f64()))
                .collect(),
            score: round_sig(s.score.as_f64()),
            pivot: s.removed_pivot.clone(),
            removed: s.removed_set.clone(),
            before: DiagnosticsRecord::from_diagnostics(&s.diagnostics_before),
            after: DiagnosticsRecord::from_diagnostics(&s.diagnostics_after),
        }
    }
}

/// One run of the algebraic finder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRun {
    pub label: String,
    pub library_size: usize,
    pub refined_size: usize,
    pub initial: DiagnosticsRecord,
    pub steps: Vec<StepRecord>,
    pub rejected: Option<StepRecord>,
    pub stop_reason: StopReason,
}

impl TraceRun {
    pub fn from_result<T: Real>(label: &str, r: &AlgebraicResult<T>) -> Self {
        Self {
            label: label.to_string(),
            library_size: r.initial_library.len(),
            refined_size: r.refined_library.len(),
            initial: DiagnosticsRecord::from_diagnostics(&r.initial_diagnostics),
            steps: r.trace.iter().map(StepRecord::from_step).collect(),
            rejected: r.rejected.as_ref().map(StepRecord::from_step),
            stop_reason: r.stop_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    pub runs: Vec<TraceRun>,
}

impl TraceFile {
    pub fn to_json(&self) -> String {
        pretty(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub model: ModelFile,
    pub trace: TraceFile,
}

pub(crate) fn pretty<S: Serialize>(v: &S) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn fmt_num(x: f64) -> String {
    let x = round_sig(x);
    if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e9) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Renders a model and its refinement trace.
pub fn emit_report<T: Real>(
    model: &DiscoveredModel<T>,
    trace: &TraceFile,
    format: ReportFormat,
) -> Vec<u8> {
    match format {
        ReportFormat::Json => pretty(&Report {
            model: model.to_file(),
            trace: trace.clone(),
        })
        .into_bytes(),
        ReportFormat::Text => text_report(model, trace).into_bytes(),
    }
}

fn text_report<T: Real>(model: &DiscoveredModel<T>, trace: &TraceFile) -> String {
    let mut out = String::new();
    out.push_str("# equations\n");
    out.push_str(&format_model(model));
    out.push_str("\n# roles\n");
    for s in &model.states {
        let role = if model.roles.is_algebraic(s) {
            "algebraic"
        } else {
            "differential"
        };
        let why = model
            .roles
            .rationale
            .get(s)
            .map(|r| {
                serde_json::to_value(r)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default()
            })
            .unwrap_or_default();
        let _ = writeln!(out, "{s}: {role} ({why})");
    }
    let mut order: Vec<usize> = (0..model.algebraic.len()).collect();
    order.sort_by_key(|&i| model.algebraic[i].iteration);
    if !order.is_empty() {
        out.push_str("\n# relation diagnostics\n");
    }
    for i in order {
        let r = &model.algebraic[i];
        let claim = model.roles.claims.get(i).map_or("-", String::as_str);
        let res = model
            .residuals
            .get(i)
            .copied()
            .flatten()
            .map_or("-".to_string(), |v| fmt_num(v.as_f64()));
        let _ = writeln!(
            out,
            "{} eliminates {} claims {} score {} residual {}",
            r.iteration,
            r.eliminated.as_ref().unwrap_or(&r.pivot),
            claim,
            fmt_num(r.score.as_f64()),
            res
        );
    }
    if !model.undiscovered.is_empty() {
        out.push_str("\n# undiscovered\n");
        for (s, why) in &model.undiscovered {
            let _ = writeln!(out, "{s}: {why}");
        }
    }
    out.push_str("\n# refinement\n");
    for run in &trace.runs {
        let _ = writeln!(
            out,
            "{}: {} -> {} terms, ln-cond {}, nullity {}, stop {}",
            run.label,
            run.library_size,
            run.refined_size,
            fmt_num(run.initial.log_condition),
            run.initial.nullity_estimate,
            serde_json::to_value(run.stop_reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        );
        for s in &run.steps {
            let _ = writeln!(
                out,
                "  {} remove {} (+{}) ln-cond {} -> {} nullity {} -> {}",
                s.iteration,
                s.pivot,
                s.removed.len().saturating_sub(1),
                fmt_num(s.before.log_condition),
                fmt_num(s.after.log_condition),
                s.before.nullity_estimate,
                s.after.nullity_estimate
            );
        }
        if let Some(s) = &run.rejected {
            let _ = writeln!(
                out,
                "  {} rejected {} ln-cond {} -> {}",
                s.iteration,
                s.pivot,
                fmt_num(s.before.log_condition),
                fmt_num(s.after.log_condition)
            );
        }
    }
    out
}
