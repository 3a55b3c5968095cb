//! Comparison of a discovered model against a generating one.

use super::{BenchError, Result};
use crate::dynfinder::DiscoveredModel;
use crate::termlib::{Operand, Term, TrigKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Relative residual below which a relation counts as lying in a span.
    pub span_tol: f64,
    /// Coefficients below this fraction of the largest are treated as zero.
    pub support_tol: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            span_tol: 1e-6,
            support_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    /// Share of generating relations lying in the span of the discovered ones.
    pub algebraic_recovery_pct: f64,
    /// Share of discovered relations lying in the span of the generating ones.
    pub algebraic_precision_pct: f64,
    /// Span residual of each generating relation.
    pub relation_residuals: Vec<f64>,
    pub ode_support_exact: BTreeMap<String, bool>,
    pub coefficient_max_rel_err: Option<f64>,
}

type Poly = BTreeMap<Term, f64>;

/// Writes `sin(b-a)` as `-sin(a-b)` and `cos(b-a)` as `cos(a-b)` for `a < b`.
pub fn canonical_term(term: &Term) -> (Term, f64) {
    let mut sign = 1.0;
    let mut out = Term::constant();
    for (s, e) in term.monomial() {
        out = out.mul(&Term::power(s, *e));
    }
    for atom in term.atoms() {
        let operand = match &atom.operand {
            Operand::Diff(a, b) if a > b => {
                if atom.kind == TrigKind::Sin {
                    sign = -sign;
                }
                Operand::Diff(b.clone(), a.clone())
            }
            other => other.clone(),
        };
        out = out.mul(&Term::trig(atom.kind, operand));
    }
    (out, sign)
}

fn canonical(poly: &BTreeMap<Term, f64>) -> Poly {
    let mut out = Poly::new();
    for (t, c) in poly {
        let (ct, s) = canonical_term(t);
        *out.entry(ct).or_insert(0.0) += s * c;
    }
    out.retain(|_, c| *c != 0.0);
    out
}

fn unit(poly: Poly) -> Poly {
    let m = poly.values().fold(0.0f64, |a, c| a.max(c.abs()));
    if m == 0.0 {
        return poly;
    }
    poly.into_iter().map(|(t, c)| (t, c / m)).collect()
}

/// Polynomial monomials over `states` of degree at most `max_degree`, constant first.
fn monomials(states: &[String], max_degree: u32) -> Vec<Term> {
    let mut out = vec![Term::constant()];
    let mut frontier = vec![(Term::constant(), 0usize)];
    for _ in 0..max_degree {
        let mut next = Vec::new();
        for (t, start) in &frontier {
            for (k, s) in states.iter().enumerate().skip(*start) {
                let m = t.mul(&Term::state(s));
                out.push(m.clone());
                next.push((m, k));
            }
        }
        frontier = next;
    }
    out
}

/// Relations multiplied by every monomial that keeps all terms within `max_complexity`.
fn ideal_generators(relations: &[Poly], states: &[String], max_complexity: u32) -> Vec<Poly> {
    let mut gens = Vec::new();
    for r in relations {
        let top = r.keys().map(Term::complexity).max().unwrap_or(0);
        if top > max_complexity {
            gens.push(r.clone());
            continue;
        }
        for m in monomials(states, max_complexity - top) {
            gens.push(r.iter().map(|(t, c)| (t.mul(&m), *c)).collect());
        }
    }
    gens
}

fn max_complexity<'a>(polys: impl IntoIterator<Item = &'a Poly>) -> u32 {
    polys
        .into_iter()
        .flat_map(|p| p.keys().map(Term::complexity))
        .max()
        .unwrap_or(0)
}

/// Relative distance from `target` to the span of `gens`.
fn span_residual(target: &Poly, gens: &[Poly]) -> f64 {
    let norm = target.values().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    if gens.is_empty() {
        return 1.0;
    }
    let terms: BTreeSet<&Term> = gens
        .iter()
        .flat_map(|g| g.keys())
        .chain(target.keys())
        .collect();
    let index: BTreeMap<&Term, usize> = terms.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut g = DMatrix::zeros(terms.len(), gens.len());
    for (j, gen) in gens.iter().enumerate() {
        let n = gen.values().map(|c| c * c).sum::<f64>().sqrt();
        for (t, c) in gen {
            g[(index[t], j)] = c / n;
        }
    }
    let mut b = DVector::zeros(terms.len());
    for (t, c) in target {
        b[index[t]] = c / norm;
    }
    let svd = g.clone().svd(true, true);
    let w = svd.solve(&b, 1e-10).expect("svd with vectors");
    (&g * w - &b).norm()
}

/// Term order for normal forms: complexity then encoding, both descending.
fn term_order(a: &Term, b: &Term) -> std::cmp::Ordering {
    b.complexity()
        .cmp(&a.complexity())
        .then_with(|| b.encode().cmp(&a.encode()))
}

/// Reduced row-echelon basis of the generators with columns in term order.
struct Reducer {
    rows: Vec<(Term, Poly)>,
}

impl Reducer {
    fn new(gens: &[Poly]) -> Self {
        let mut terms: Vec<Term> = gens
            .iter()
            .flat_map(|g| g.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        terms.sort_by(term_order);
        let index: BTreeMap<&Term, usize> = terms.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut m = DMatrix::zeros(gens.len(), terms.len());
        for (r, g) in gens.iter().enumerate() {
            let n = g.values().fold(0.0f64, |a, c| a.max(c.abs()));
            for (t, c) in g {
                m[(r, index[t])] = c / n;
            }
        }
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..terms.len() {
            if row == m.nrows() {
                break;
            }
            let (best, val) = (row..m.nrows())
                .map(|r| (r, m[(r, col)].abs()))
                .fold((row, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            if val <= 1e-10 {
                continue;
            }
            m.swap_rows(row, best);
            let p = m[(row, col)];
            for c in 0..m.ncols() {
                m[(row, c)] /= p;
            }
            for r in 0..m.nrows() {
                if r != row {
                    let f = m[(r, col)];
                    if f != 0.0 {
                        for c in 0..m.ncols() {
                            m[(r, c)] -= f * m[(row, c)];
                        }
                    }
                }
            }
            pivots.push((col, row));
            row += 1;
        }
        let rows = pivots
            .into_iter()
            .map(|(col, r)| {
                let poly = (0..terms.len())
                    .filter(|&c| m[(r, c)].abs() > 1e-14)
                    .map(|c| (terms[c].clone(), m[(r, c)]))
                    .collect();
                (terms[col].clone(), poly)
            })
            .collect();
        Self { rows }
    }

    fn reduce(&self, v: &Poly) -> Poly {
        let mut out = v.clone();
        for (lead, row) in &self.rows {
            if let Some(f) = out.get(lead).copied() {
                for (t, c) in row {
                    *out.entry(t.clone()).or_insert(0.0) -= f * c;
                }
            }
        }
        let top = out.values().fold(0.0f64, |a, c| a.max(c.abs()));
        out.retain(|_, c| c.abs() > 1e-12 * top.max(1e-300));
        out
    }
}

fn support(poly: &Poly, tol: f64) -> BTreeSet<Term> {
    let top = poly.values().fold(0.0f64, |a, c| a.max(c.abs()));
    poly.iter()
        .filter(|(_, c)| c.abs() > tol * top)
        .map(|(t, _)| t.clone())
        .collect()
}

/// Span-based relation recovery and ODE comparison modulo the generating relations.
pub fn recovery_metrics(
    model: &DiscoveredModel<f64>,
    truth: &DiscoveredModel<f64>,
    opts: &MetricsOptions,
) -> Result<RecoveryMetrics> {
    let ms: BTreeSet<&String> = model.states.iter().collect();
    let ts: BTreeSet<&String> = truth.states.iter().collect();
    if ms != ts {
        return Err(BenchError::Incomparable(format!("{ms:?} vs {ts:?}")));
    }
    let states = &truth.states;
    let disc: Vec<Poly> = model
        .algebraic
        .iter()
        .map(|r| unit(canonical(&r.coefficients)))
        .collect();
    let true_rel: Vec<Poly> = truth
        .algebraic
        .iter()
        .map(|r| unit(canonical(&r.coefficients)))
        .collect();
    let top = max_complexity(disc.iter().chain(&true_rel));

    let disc_gens = ideal_generators(&disc, states, top);
    let relation_residuals: Vec<f64> = true_rel
        .iter()
        .map(|r| span_residual(r, &disc_gens))
        .collect();
    let found = relation_residuals
        .iter()
        .filter(|r| **r <= opts.span_tol)
        .count();
    let truth_gens = ideal_generators(&true_rel, states, top);
    let precise = disc
        .iter()
        .filter(|d| span_residual(d, &truth_gens) <= opts.span_tol)
        .count();
    let pct = |k: usize, n: usize| {
        if n == 0 {
            100.0
        } else {
            100.0 * k as f64 / n as f64
        }
    };

    let mut ode_support_exact = BTreeMap::new();
    let mut worst: Option<f64> = None;
    for (state, eq) in &truth.odes {
        let t_rhs = canonical(&eq.coefficients);
        let Some(m_eq) = model.odes.get(state) else {
            ode_support_exact.insert(state.clone(), false);
            continue;
        };
        let m_rhs = canonical(&m_eq.coefficients);
        let deg = max_complexity([&t_rhs, &m_rhs]).max(max_complexity(&true_rel));
        let reducer = Reducer::new(&ideal_generators(&true_rel, states, deg));
        let (nt, nm) = (reducer.reduce(&t_rhs), reducer.reduce(&m_rhs));
        let exact = support(&nt, opts.support_tol) == support(&nm, opts.support_tol);
        ode_support_exact.insert(state.clone(), exact);
        if exact {
            for (t, c) in &nt {
                let err = (nm.get(t).copied().unwrap_or(0.0) - c).abs() / c.abs();
                worst = Some(worst.map_or(err, |w| w.max(err)));
            }
        }
    }
    Ok(RecoveryMetrics {
        algebraic_recovery_pct: pct(found, true_rel.len()),
        algebraic_precision_pct: pct(precise, disc.len()),
        relation_residuals,
        ode_support_exact,
        coefficient_max_rel_err: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::crn::{crn_truth, CrnSpec};
    use crate::termlib::AlgebraicRelation;
    use proptest::prelude::*;

    fn rel(pairs: Vec<(Term, f64)>) -> AlgebraicRelation<f64> {
        let pivot = pairs[0].0.clone();
        AlgebraicRelation::new(pairs.into_iter().collect(), pivot, 1.0, 1).unwrap()
    }

    #[test]
    fn self_comparison_is_perfect() {
        let truth = crn_truth(&CrnSpec::crn1_default()).unwrap();
        let m = recovery_metrics(&truth, &truth, &MetricsOptions::default()).unwrap();
        assert_eq!(m.algebraic_recovery_pct, 100.0);
        assert_eq!(m.algebraic_precision_pct, 100.0);
        assert!(m.ode_support_exact.values().all(|v| *v));
        assert_eq!(m.coefficient_max_rel_err, Some(0.0));
    }

    #[test]
    fn one_missing_relation_is_half() {
        let truth = crn_truth(&CrnSpec::crn1_default()).unwrap();
        let mut model = truth.clone();
        model.algebraic.truncate(1);
        let m = recovery_metrics(&model, &truth, &MetricsOptions::default()).unwrap();
        assert_eq!(m.algebraic_recovery_pct, 50.0);
    }

    #[test]
    fn substituted_forms_match() {
        // quasi-steady relation with the free enzyme eliminated, and the rate law rewritten accordingly
        let truth = crn_truth(&CrnSpec::crn1_default()).unwrap();
        let s = Term::state;
        let mut model = truth.clone();
        model.algebraic[1] = rel(vec![
            (s("A").mul(&s("AE1")), -1.0),
            (s("A"), 1.5),
            (s("AE1"), -1.3),
        ]);
        model.odes.get_mut("A").unwrap().coefficients = [(s("AE1"), -0.8)].into_iter().collect();
        let m = recovery_metrics(&model, &truth, &MetricsOptions::default()).unwrap();
        assert_eq!(m.algebraic_recovery_pct, 100.0);
        assert!(m.ode_support_exact["A"]);
        assert!(m.coefficient_max_rel_err.unwrap() < 1e-12);

        model.odes.get_mut("A").unwrap().coefficients =
            [(s("AE1"), -0.8), (s("B"), 0.1)].into_iter().collect();
        let m = recovery_metrics(&model, &truth, &MetricsOptions::default()).unwrap();
        assert!(!m.ode_support_exact["A"]);
    }

    #[test]
    fn sine_orientation_is_canonical() {
        let (t, s) = canonical_term(&Term::sin_diff("phi_3", "phi_1"));
        assert_eq!(t, Term::sin_diff("phi_1", "phi_3"));
        assert_eq!(s, -1.0);
        let (_, s) = canonical_term(&Term::trig(
            TrigKind::Cos,
            Operand::Diff("b".into(), "a".into()),
        ));
        assert_eq!(s, 1.0);
    }

    #[test]
    fn incomparable_states() {
        let truth = crn_truth(&CrnSpec::crn1_default()).unwrap();
        let mut other = truth.clone();
        other.states.pop();
        assert!(matches!(
            recovery_metrics(&other, &truth, &MetricsOptions::default()),
            Err(BenchError::Incomparable(_))
        ));
    }

    proptest! {
        #[test]
        fn invertible_mixing_still_matches(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
            prop_assume!((a * d - b * c).abs() > 0.1);
            let truth = crn_truth(&CrnSpec::crn1_default()).unwrap();
            let r0 = &truth.algebraic[0].coefficients;
            let r1 = &truth.algebraic[1].coefficients;
            let mix = |x: f64, y: f64| {
                let mut m: BTreeMap<Term, f64> = BTreeMap::new();
                for (t, v) in r0 { *m.entry(t.clone()).or_insert(0.0) += x * v; }
                for (t, v) in r1 { *m.entry(t.clone()).or_insert(0.0) += y * v; }
                m.retain(|_, v| v.abs() > 1e-14);
                let pivot = m.keys().next().unwrap().clone();
                AlgebraicRelation::new(m, pivot, 1.0, 1).unwrap()
            };
            let mut model = truth.clone();
            model.algebraic = vec![mix(a, b), mix(c, d)];
            let m = recovery_metrics(&model, &truth, &MetricsOptions::default()).unwrap();
            prop_assert_eq!(m.algebraic_recovery_pct, 100.0);
        }
    }
}
