//! Variable roles, sparse ODE discovery on the refined library, and DAE assembly.

use crate::algfinder::RefinementStep;
use crate::scalar::Real;
use crate::sparsereg::{fit, fit_ols, SparseError, SparseFitConfig};
use crate::termlib::{evaluate_term, AlgebraicRelation, LibraryMatrix, Term, TermError};
use crate::timeseries::TimeSeriesTable;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("preference list names unknown state {0:?}")]
    UnknownPreference(String),
    #[error("relation {0} involves no known state")]
    RelationWithoutState(usize),
    #[error("differential state {0:?} has no ODE")]
    MissingOde(String),
    #[error("relation {0} claims no algebraic variable")]
    UnclaimedRelation(usize),
    #[error("state {state:?} is both algebraic and differential ({detail})")]
    RoleConflict { state: String, detail: String },
    #[error("target column for {0:?} missing")]
    MissingTarget(String),
    #[error("no dynamics found for {state:?}: {reason}")]
    NoRelation { state: String, reason: String },
    #[error("term error: {0}")]
    Term(#[from] TermError),
    #[error("solver error: {0}")]
    Sparse(#[from] SparseError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, DynError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleRationale {
    NoRelationMembership,
    UserPreference,
    PivotElimination,
    DynamicRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct VariableRoles {
    pub differential: Vec<String>,
    pub algebraic: Vec<String>,
    pub rationale: BTreeMap<String, RoleRationale>,
    /// Algebraic state claimed by each relation, in relation order.
    pub claims: Vec<String>,
}

impl VariableRoles {
    pub fn all_differential(states: &[String]) -> Self {
        Self {
            differential: states.to_vec(),
            algebraic: Vec::new(),
            rationale: states
                .iter()
                .map(|s| (s.clone(), RoleRationale::NoRelationMembership))
                .collect(),
            claims: Vec::new(),
        }
    }

    pub fn is_algebraic(&self, state: &str) -> bool {
        self.algebraic.iter().any(|s| s == state)
    }
}

/// `(max − min) / std` per column.
pub fn dynamic_ranges<T: Real>(table: &TimeSeriesTable<T>) -> BTreeMap<String, T> {
    let stds = crate::timeseries::column_stds(table);
    table
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = table.values().column(j);
            let span = col.max() - col.min();
            let sd = stds[name];
            (
                name.clone(),
                if sd > T::zero() { span / sd } else { T::zero() },
            )
        })
        .collect()
}

/// Decides which states each relation makes algebraic.
///
/// `preference` lists states the caller wants kept differential, most wanted first.
pub fn assign_variable_roles<T: Real>(
    states: &[String],
    relations: &[AlgebraicRelation<T>],
    preference: Option<&[String]>,
    ranges: &BTreeMap<String, T>,
) -> Result<VariableRoles> {
    let known: BTreeSet<&str> = states.iter().map(String::as_str).collect();
    let pref = preference.unwrap_or(&[]);
    if let Some(bad) = pref.iter().find(|p| !known.contains(p.as_str())) {
        return Err(DynError::UnknownPreference(bad.clone()));
    }
    let rank_of = |s: &str| pref.iter().position(|p| p == s);
    let mut algebraic: Vec<String> = Vec::new();
    let mut rationale = BTreeMap::new();
    let mut claims = Vec::new();
    for (i, rel) in relations.iter().enumerate() {
        let involved: BTreeSet<&str> = rel
            .coefficients
            .keys()
            .flat_map(|t| t.states())
            .filter(|s| known.contains(s))
            .collect();
        if involved.is_empty() {
            return Err(DynError::RelationWithoutState(i));
        }
        let free: Vec<&str> = involved
            .iter()
            .copied()
            .filter(|s| !algebraic.iter().any(|a| a == s))
            .collect();
        let by_range = |cands: &[&str]| -> String {
            let mut best = cands[0];
            for c in &cands[1..] {
                let (rc, rb) = (ranges.get(*c), ranges.get(best));
                if let (Some(rc), Some(rb)) = (rc, rb) {
                    if rc < rb {
                        best = c;
                    }
                }
            }
            best.to_string()
        };
        let pivot_state = rel
            .eliminated
            .as_ref()
            .and_then(|e| e.pure_power().map(|(s, _)| s))
            .filter(|s| free.contains(s) && rank_of(s).is_none());
        let (claim, why) = if free.is_empty() {
            let shared = involved
                .iter()
                .find(|s| algebraic.iter().any(|a| a == *s))
                .expect("involved is non-empty");
            (shared.to_string(), rationale[*shared])
        } else if let Some(s) = pivot_state {
            (s.to_string(), RoleRationale::PivotElimination)
        } else if !pref.is_empty() && free.iter().any(|s| rank_of(s).is_some()) {
            let unlisted: Vec<&str> = free
                .iter()
                .copied()
                .filter(|s| rank_of(s).is_none())
                .collect();
            if unlisted.is_empty() {
                let last = free
                    .iter()
                    .copied()
                    .max_by_key(|s| rank_of(s))
                    .expect("free is non-empty");
                (last.to_string(), RoleRationale::UserPreference)
            } else {
                (by_range(&unlisted), RoleRationale::UserPreference)
            }
        } else {
            (by_range(&free), RoleRationale::DynamicRange)
        };
        if !algebraic.contains(&claim) {
            algebraic.push(claim.clone());
            rationale.insert(claim.clone(), why);
        }
        claims.push(claim);
    }
    let algebraic: Vec<String> = states
        .iter()
        .filter(|s| algebraic.contains(s))
        .cloned()
        .collect();
    let mut differential = Vec::new();
    for s in states {
        if algebraic.contains(s) {
            continue;
        }
        differential.push(s.clone());
        let in_relation = relations.iter().any(|r| {
            r.coefficients
                .keys()
                .any(|t| t.states().contains(&s.as_str()))
        });
        let why = match (in_relation, rank_of(s)) {
            (false, _) => RoleRationale::NoRelationMembership,
            (true, Some(_)) => RoleRationale::UserPreference,
            (true, None) => RoleRationale::DynamicRange,
        };
        rationale.insert(s.clone(), why);
    }
    Ok(VariableRoles {
        differential,
        algebraic,
        rationale,
        claims,
    })
}

/// `d^order(state)/dt^order = Σ c_j θ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeEquation<T: Real> {
    pub order: usize,
    pub coefficients: BTreeMap<Term, T>,
    pub score: Option<T>,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DynamicsConfig {
    pub sparse: SparseFitConfig,
    /// Derivative order per state; missing entries are first order.
    pub orders: BTreeMap<String, usize>,
    /// Allowed regressors per state; missing entries allow the whole library.
    pub regressors: BTreeMap<String, Vec<Term>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsOutcome<T: Real> {
    pub odes: BTreeMap<String, OdeEquation<T>>,
    pub failures: BTreeMap<String, String>,
}

fn rms<T: Real>(v: &DVector<T>) -> T {
    (v.norm_squared() / T::lit(v.len().max(1) as f64)).sqrt()
}

/// Sparse fit of each differential state's target column against the refined library.
///
/// `targets` holds one column per differential state with the derivative of the configured order.
pub fn discover_dynamics<T: Real>(
    refined: &LibraryMatrix<T>,
    targets: &TimeSeriesTable<T>,
    roles: &VariableRoles,
    cfg: &DynamicsConfig,
) -> Result<DynamicsOutcome<T>> {
    cfg.sparse.validate()?;
    if targets.n_rows() != refined.n_rows() {
        return Err(DynError::Shape(format!(
            "{} target rows vs {} library rows",
            targets.n_rows(),
            refined.n_rows()
        )));
    }
    for s in &roles.differential {
        if targets.column_index(s).is_none() {
            return Err(DynError::MissingTarget(s.clone()));
        }
    }
    let usable = refined.usable();
    let lib = refined.library.terms();
    let results: Vec<(String, std::result::Result<OdeEquation<T>, String>)> = roles
        .differential
        .par_iter()
        .map(|state| {
            let order = cfg.orders.get(state).copied().unwrap_or(1);
            let cols: Vec<usize> = match cfg.regressors.get(state) {
                Some(allowed) => usable
                    .iter()
                    .copied()
                    .filter(|&j| allowed.contains(&lib[j]))
                    .collect(),
                None => usable.clone(),
            };
            let y = DVector::from_vec(targets.column(state).expect("checked above"));
            let scale = rms(&y);
            let empty = OdeEquation {
                order,
                coefficients: BTreeMap::new(),
                score: Some(T::one()),
                rank_deficient: false,
            };
            if scale == T::zero() {
                return (state.clone(), Ok(empty));
            }
            if cols.is_empty() {
                return (state.clone(), Err("no usable regressors".to_string()));
            }
            let x = refined.values.select_columns(cols.iter());
            let yn = &y / scale;
            let outcome = match fit(&x, &yn, &cfg.sparse) {
                Ok(res) => {
                    let coefficients: BTreeMap<Term, T> = res
                        .support
                        .iter()
                        .map(|&k| {
                            (
                                lib[cols[k]].clone(),
                                res.coefficients[k] * scale / refined.column_scales[cols[k]],
                            )
                        })
                        .collect();
                    Ok(OdeEquation {
                        order,
                        coefficients,
                        score: Some(res.r2),
                        rank_deficient: false,
                    })
                }
                Err(e) => Err(e.to_string()),
            };
            (state.clone(), outcome)
        })
        .collect();
    let mut out = DynamicsOutcome {
        odes: BTreeMap::new(),
        failures: BTreeMap::new(),
    };
    for (state, r) in results {
        match r {
            Ok(eq) => {
                out.odes.insert(state, eq);
            }
            Err(reason) => {
                out.failures.insert(state, reason);
            }
        }
    }
    Ok(out)
}

/// Condensed record of one accepted refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub pivot: Term,
    pub removed: Vec<Term>,
    pub log_condition_before: f64,
    pub log_condition_after: f64,
    pub nullity_before: usize,
    pub nullity_after: usize,
}

impl TraceEntry {
    pub fn from_step<T: Real>(step: &RefinementStep<T>) -> Self {
        Self {
            iteration: step.iteration,
            pivot: step.removed_pivot.clone(),
            removed: step.removed_set.clone(),
            log_condition_before: step.diagnostics_before.log_condition.as_f64(),
            log_condition_after: step.diagnostics_after.log_condition.as_f64(),
            nullity_before: step.diagnostics_before.nullity_estimate,
            nullity_after: step.diagnostics_after.nullity_estimate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveredModel<T: Real> {
    pub states: Vec<String>,
    pub roles: VariableRoles,
    pub algebraic: Vec<AlgebraicRelation<T>>,
    pub odes: BTreeMap<String, OdeEquation<T>>,
    /// Relative residual of each relation on the data it was assembled against.
    pub residuals: Vec<Option<T>>,
    /// Differential states whose equation was not found.
    pub undiscovered: BTreeMap<String, String>,
    pub trace: Vec<TraceEntry>,
}

/// Checks role consistency and bundles everything into one model.
pub fn assemble_dae<T: Real>(
    states: &[String],
    relations: &[AlgebraicRelation<T>],
    odes: &DynamicsOutcome<T>,
    roles: &VariableRoles,
    table: Option<&TimeSeriesTable<T>>,
) -> Result<DiscoveredModel<T>> {
    for s in &roles.algebraic {
        if roles.differential.contains(s) {
            return Err(DynError::RoleConflict {
                state: s.clone(),
                detail: "listed in both role sets".into(),
            });
        }
        if odes.odes.contains_key(s) {
            return Err(DynError::RoleConflict {
                state: s.clone(),
                detail: "algebraic state has an ODE".into(),
            });
        }
    }
    for s in &roles.differential {
        if !odes.odes.contains_key(s) && !odes.failures.contains_key(s) {
            return Err(DynError::MissingOde(s.clone()));
        }
    }
    if roles.claims.len() != relations.len() {
        return Err(DynError::Shape(format!(
            "{} claims for {} relations",
            roles.claims.len(),
            relations.len()
        )));
    }
    for (i, (rel, claim)) in relations.iter().zip(&roles.claims).enumerate() {
        if roles.differential.contains(claim) {
            return Err(DynError::RoleConflict {
                state: claim.clone(),
                detail: format!("claimed by relation {i}"),
            });
        }
        let touches = rel
            .coefficients
            .keys()
            .any(|t| t.states().iter().any(|s| roles.is_algebraic(s)));
        if !roles.is_algebraic(claim) || !touches {
            return Err(DynError::UnclaimedRelation(i));
        }
    }
    let residuals = relations
        .iter()
        .map(|r| table.and_then(|t| r.relative_residual(t).ok()))
        .collect();
    Ok(DiscoveredModel {
        states: states.to_vec(),
        roles: roles.clone(),
        algebraic: relations.to_vec(),
        odes: odes.odes.clone(),
        residuals,
        undiscovered: odes.failures.clone(),
        trace: Vec::new(),
    })
}

fn design<T: Real>(terms: &[&Term], table: &TimeSeriesTable<T>) -> Result<(DMatrix<T>, Vec<T>)> {
    let n = table.n_rows();
    let mut m = DMatrix::zeros(n, terms.len());
    let mut scales = Vec::with_capacity(terms.len());
    for (j, t) in terms.iter().enumerate() {
        let col = DVector::from_vec(evaluate_term(t, table)?);
        let s = rms(&col);
        let s = if s > T::zero() { s } else { T::one() };
        m.set_column(j, &(col / s));
        scales.push(s);
    }
    Ok((m, scales))
}

fn full_rank<T: Real>(m: &DMatrix<T>) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    let sv = m.singular_values();
    let top = sv.max();
    let tol = T::eps() * T::lit(m.nrows().max(m.ncols()) as f64) * top;
    sv.iter().all(|s| *s > tol)
}

/// Ordinary least squares on the fixed supports over the whole dataset.
pub fn refit_coefficients<T: Real>(
    model: &DiscoveredModel<T>,
    table: &TimeSeriesTable<T>,
    targets: &TimeSeriesTable<T>,
) -> Result<DiscoveredModel<T>> {
    let mut out = model.clone();
    out.algebraic.clear();
    for rel in &model.algebraic {
        let others: Vec<&Term> = rel
            .coefficients
            .keys()
            .filter(|t| **t != rel.pivot)
            .collect();
        let (x, scales) = design(&others, table)?;
        let y = DVector::from_vec(evaluate_term(&rel.pivot, table)?);
        let ys = rms(&y);
        let ys = if ys > T::zero() { ys } else { T::one() };
        let res = fit_ols(&x, &(&y / ys))?;
        let mut coefs = BTreeMap::new();
        coefs.insert(rel.pivot.clone(), -T::one());
        for (k, t) in others.iter().enumerate() {
            coefs.insert((*t).clone(), res.coefficients[k] * ys / scales[k]);
        }
        let mut refit = AlgebraicRelation::new(coefs, rel.pivot.clone(), res.r2, rel.iteration)?;
        refit.eliminated = rel.eliminated.clone();
        out.algebraic.push(refit);
    }
    for (state, eq) in out.odes.iter_mut() {
        let y = DVector::from_vec(
            targets
                .column(state)
                .map_err(|_| DynError::MissingTarget(state.clone()))?,
        );
        if y.len() != table.n_rows() {
            return Err(DynError::Shape(format!(
                "target {state:?} has {} rows",
                y.len()
            )));
        }
        let terms: Vec<&Term> = eq.coefficients.keys().collect();
        if terms.is_empty() {
            continue;
        }
        let (x, scales) = design(&terms, table)?;
        let ys = rms(&y);
        let ys = if ys > T::zero() { ys } else { T::one() };
        let res = fit_ols(&x, &(&y / ys))?;
        let coefficients = terms
            .iter()
            .enumerate()
            .map(|(k, t)| ((*t).clone(), res.coefficients[k] * ys / scales[k]))
            .collect();
        eq.rank_deficient = !full_rank(&x);
        eq.coefficients = coefficients;
        eq.score = Some(res.r2);
    }
    out.residuals = out
        .algebraic
        .iter()
        .map(|r| r.relative_residual(table).ok())
        .collect();
    Ok(out)
}

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Support terms ordered by complexity then encoding, both descending.
pub fn leading_order(terms: &mut [Term]) {
    terms.sort_by(|a, b| {
        b.complexity()
            .cmp(&a.complexity())
            .then_with(|| b.encode().cmp(&a.encode()))
    });
}

fn write_sum(out: &mut String, terms: &[(Term, f64)]) {
    if terms.is_empty() {
        out.push('0');
        return;
    }
    for (k, (t, c)) in terms.iter().enumerate() {
        let c = round_sig(*c);
        let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
        match (k, sign) {
            (0, "-") => out.push('-'),
            (0, _) => {}
            _ => {
                let _ = write!(out, " {sign} ");
            }
        }
        if t.is_constant() {
            let _ = write!(out, "{mag}");
        } else if mag == 1.0 {
            let _ = write!(out, "{t}");
        } else {
            let _ = write!(out, "{mag}*{t}");
        }
    }
}

/// `0 = ...` with the leading term scaled to coefficient one.
pub fn format_relation<T: Real>(rel: &AlgebraicRelation<T>) -> String {
    let mut terms: Vec<Term> = rel.coefficients.keys().cloned().collect();
    leading_order(&mut terms);
    let lead = rel.coefficients[&terms[0]].as_f64();
    let scaled: Vec<(Term, f64)> = terms
        .iter()
        .map(|t| (t.clone(), rel.coefficients[t].as_f64() / lead))
        .collect();
    let mut out = String::from("0 = ");
    write_sum(&mut out, &scaled);
    out
}

pub fn format_ode<T: Real>(state: &str, eq: &OdeEquation<T>) -> String {
    let mut terms: Vec<Term> = eq.coefficients.keys().cloned().collect();
    leading_order(&mut terms);
    let pairs: Vec<(Term, f64)> = terms
        .iter()
        .map(|t| (t.clone(), eq.coefficients[t].as_f64()))
        .collect();
    let mut out = match eq.order {
        1 => format!("d({state})/dt = "),
        k => format!("d{k}({state})/dt{k} = "),
    };
    write_sum(&mut out, &pairs);
    out
}

/// Relations in discovery order, then ODEs in state order.
pub fn format_model<T: Real>(model: &DiscoveredModel<T>) -> String {
    let mut rels: Vec<&AlgebraicRelation<T>> = model.algebraic.iter().collect();
    rels.sort_by_key(|r| r.iteration);
    let mut out = String::new();
    for r in rels {
        out.push_str(&format_relation(r));
        out.push('\n');
    }
    for s in &model.roles.differential {
        match model.odes.get(s) {
            Some(eq) => out.push_str(&format_ode(s, eq)),
            None => {
                let _ = write!(out, "d({s})/dt = ? (not found)");
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRecord {
    pub terms: Vec<Term>,
    pub coeffs: Vec<f64>,
    pub score: Option<f64>,
    pub pivot: Term,
    pub iteration: usize,
    pub eliminated: Option<Term>,
    pub claims: String,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeRecord {
    pub order: usize,
    pub terms: Vec<Term>,
    pub coeffs: Vec<f64>,
    pub score: Option<f64>,
    pub rank_deficient: bool,
}

/// Serialized model with values rounded to 12 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<String>,
    pub roles: VariableRoles,
    pub algebraic: Vec<RelationRecord>,
    pub odes: BTreeMap<String, OdeRecord>,
    pub undiscovered: BTreeMap<String, String>,
    pub trace: Vec<TraceEntry>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then(|| round_sig(x))
}

impl<T: Real> DiscoveredModel<T> {
    pub fn to_file(&self) -> ModelFile {
        let algebraic = self
            .algebraic
            .iter()
            .enumerate()
            .map(|(i, r)| RelationRecord {
                terms: r.coefficients.keys().cloned().collect(),
                coeffs: r
                    .coefficients
                    .values()
                    .map(|c| round_sig(c.as_f64()))
                    .collect(),
                score: finite(r.score.as_f64()),
                pivot: r.pivot.clone(),
                iteration: r.iteration,
                eliminated: r.eliminated.clone(),
                claims: self.roles.claims.get(i).cloned().unwrap_or_default(),
                residual: self
                    .residuals
                    .get(i)
                    .copied()
                    .flatten()
                    .and_then(|v| finite(v.as_f64())),
            })
            .collect();
        let odes = self
            .odes
            .iter()
            .map(|(s, e)| {
                let rec = OdeRecord {
                    order: e.order,
                    terms: e.coefficients.keys().cloned().collect(),
                    coeffs: e
                        .coefficients
                        .values()
                        .map(|c| round_sig(c.as_f64()))
                        .collect(),
                    score: e.score.and_then(|v| finite(v.as_f64())),
                    rank_deficient: e.rank_deficient,
                };
                (s.clone(), rec)
            })
            .collect();
        let trace = self
            .trace
            .iter()
            .map(|t| TraceEntry {
                log_condition_before: round_sig(t.log_condition_before),
                log_condition_after: round_sig(t.log_condition_after),
                ..t.clone()
            })
            .collect();
        ModelFile {
            states: self.states.clone(),
            roles: self.roles.clone(),
            algebraic,
            odes,
            undiscovered: self.undiscovered.clone(),
            trace,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let zip = |terms: &[Term], coeffs: &[f64]| -> Result<BTreeMap<Term, T>> {
            if terms.len() != coeffs.len() {
                return Err(DynError::Format(format!(
                    "{} terms vs {} coeffs",
                    terms.len(),
                    coeffs.len()
                )));
            }
            Ok(terms
                .iter()
                .cloned()
                .zip(coeffs.iter().map(|c| T::lit(*c)))
                .collect())
        };
        let mut algebraic = Vec::new();
        let mut residuals = Vec::new();
        for r in &file.algebraic {
            let score = r.score.map_or(T::neg_infinity(), T::lit);
            let mut rel = AlgebraicRelation::new(
                zip(&r.terms, &r.coeffs)?,
                r.pivot.clone(),
                score,
                r.iteration,
            )?;
            rel.eliminated = r.eliminated.clone();
            algebraic.push(rel);
            residuals.push(r.residual.map(T::lit));
        }
        let mut odes = BTreeMap::new();
        for (s, e) in &file.odes {
            let eq = OdeEquation {
                order: e.order,
                coefficients: zip(&e.terms, &e.coeffs)?,
                score: e.score.map(T::lit),
                rank_deficient: e.rank_deficient,
            };
            odes.insert(s.clone(), eq);
        }
        Ok(Self {
            states: file.states.clone(),
            roles: file.roles.clone(),
            algebraic,
            odes,
            residuals,
            undiscovered: file.undiscovered.clone(),
            trace: file.trace.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| DynError::Format(e.to_string()))?;
        Self::from_file(&file)
    }
}
