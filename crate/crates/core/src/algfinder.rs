//! Iterative discovery of algebraic relations with complexity-ranked library refinement.

use crate::scalar::Real;
use crate::sparsereg::{
    solve_problem, FitResult, Problem, ScoreFunction, SparseError, SparseFitConfig,
};
use crate::termlib::{
    evaluate_library, multiples_of, reduce_relation, remove_terms, AlgebraicRelation,
    CandidateLibrary, LibraryMatrix, Term, TermError,
};
use crate::timeseries::TimeSeriesTable;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Scores within this distance of the best are treated as tied.
pub const SCORE_TIE_TOL: f64 = 1e-10;
/// Relative floor applied to the smallest singular value.
pub const CONDITION_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FinderError<T: Real> {
    #[error("library has {0} usable columns; at least 2 are needed")]
    TooFewColumns(usize),
    #[error("no candidate produced a relation")]
    NoCandidate,
    #[error("term error: {0}")]
    Term(#[from] TermError),
    #[error("solver error: {0}")]
    Sparse(#[from] SparseError),
    #[error("relation support became empty after reduction")]
    EmptySupport,
    #[error("no relation found at iteration {iteration} although {demanded} were demanded")]
    NoRelationFound {
        iteration: usize,
        demanded: usize,
        partial: Box<AlgebraicResult<T>>,
    },
    #[error("invalid finder configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, V> = std::result::Result<V, FinderError<T>>;

/// Singular spectrum of a normalized library matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvdDiagnostics<T: Real> {
    pub singular_values: Vec<T>,
    pub variance_ratios: Vec<T>,
    pub numeric_rank: usize,
    pub nullity_estimate: usize,
    pub log_condition: T,
}

/// Spectrum of the non-degenerate columns.
///
/// The smallest singular value is floored at `1e-14` times the RMS column norm,
/// which keeps the log-condition finite on exactly rank-deficient libraries.
pub fn svd_diagnostics<T: Real>(
    libmat: &LibraryMatrix<T>,
    rank_tol: T,
) -> Result<T, SvdDiagnostics<T>> {
    let usable = libmat.usable();
    if usable.is_empty() {
        return Err(FinderError::TooFewColumns(0));
    }
    let m = libmat.values.select_columns(usable.iter());
    let j = m.ncols();
    let mut sv: Vec<T> = if m.nrows() > j {
        m.clone()
            .qr()
            .r()
            .singular_values()
            .iter()
            .copied()
            .collect()
    } else {
        m.singular_values().iter().copied().collect()
    };
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let total = sv.iter().fold(T::zero(), |a, s| a + *s * *s);
    let variance_ratios = sv
        .iter()
        .map(|s| {
            if total > T::zero() {
                *s * *s / total
            } else {
                T::zero()
            }
        })
        .collect();
    let s1 = sv[0];
    let numeric_rank = sv.iter().filter(|s| **s > rank_tol * s1).count();
    let smin = if sv.len() < j {
        T::zero()
    } else {
        sv[sv.len() - 1]
    };
    let col_rms = (m.norm_squared() / T::lit(j as f64)).sqrt();
    let floor = T::lit(CONDITION_FLOOR) * col_rms;
    let log_condition = if s1 > T::zero() {
        (s1 / smin.max(floor)).ln()
    } else {
        T::zero()
    };
    Ok(SvdDiagnostics {
        singular_values: sv,
        variance_ratios,
        numeric_rank,
        nullity_estimate: j - numeric_rank,
        log_condition,
    })
}

/// Optional limits on which terms are fitted and which may explain them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateRestriction {
    pub targets: Option<Vec<Term>>,
    pub regressors: BTreeMap<Term, Vec<Term>>,
}

/// One candidate regression `θ_l ≈ Σ p_j θ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFit<T: Real> {
    pub target: usize,
    /// Coefficients over all library columns (zero at the target).
    pub fit: Option<FitResult<T>>,
    pub score: T,
}

struct Factor<T: Real> {
    r: DMatrix<T>,
    tss: Vec<T>,
    usable: Vec<usize>,
}

fn factorize<T: Real>(libmat: &LibraryMatrix<T>) -> Factor<T> {
    let usable = libmat.usable();
    let m = libmat.values.select_columns(usable.iter());
    let n = m.nrows();
    let r = if n > m.ncols() {
        m.clone().qr().r()
    } else {
        m.clone()
    };
    let tss = (0..m.ncols())
        .map(|c| {
            let col = m.column(c);
            let mean = col.mean();
            col.iter()
                .fold(T::zero(), |a, v| a + (*v - mean) * (*v - mean))
        })
        .collect();
    Factor { r, tss, usable }
}

/// Fits every usable term against the other usable terms.
pub fn fit_all_candidates<T: Real>(
    libmat: &LibraryMatrix<T>,
    cfg: &SparseFitConfig,
    score_fn: ScoreFunction,
    restriction: Option<&CandidateRestriction>,
) -> Result<T, Vec<CandidateFit<T>>> {
    cfg.validate()?;
    let usable = libmat.usable();
    if usable.len() < 2 {
        return Err(FinderError::TooFewColumns(usable.len()));
    }
    let factor = factorize(libmat);
    let n = libmat.n_rows();
    let lib = &libmat.library;
    let pos: BTreeMap<usize, usize> = factor
        .usable
        .iter()
        .enumerate()
        .map(|(k, &j)| (j, k))
        .collect();
    let mut targets: Vec<usize> = (0..libmat.n_cols()).collect();
    if let Some(allowed) = restriction.and_then(|r| r.targets.as_ref()) {
        let allowed: BTreeSet<&Term> = allowed.iter().collect();
        targets.retain(|&j| allowed.contains(&lib.terms()[j]));
    }
    let fits = targets
        .par_iter()
        .map(|&l| {
            let none = CandidateFit {
                target: l,
                fit: None,
                score: T::neg_infinity(),
            };
            let Some(&kl) = pos.get(&l) else { return none };
            if factor.tss[kl] == T::zero() {
                return none;
            }
            let regs: Vec<usize> = match restriction.and_then(|r| r.regressors.get(&lib.terms()[l]))
            {
                Some(list) => {
                    let allowed: BTreeSet<&Term> = list.iter().collect();
                    factor
                        .usable
                        .iter()
                        .copied()
                        .filter(|&j| j != l && allowed.contains(&lib.terms()[j]))
                        .collect()
                }
                None => factor.usable.iter().copied().filter(|&j| j != l).collect(),
            };
            if regs.is_empty() {
                return none;
            }
            let cols: Vec<usize> = regs.iter().map(|j| pos[j]).collect();
            let prob = Problem {
                a: factor.r.select_columns(cols.iter()),
                b: factor.r.column(kl).into_owned(),
                n_obs: n,
                tss: factor.tss[kl],
                rss_offset: T::zero(),
            };
            let Ok((p, converged)) = solve_problem(&prob, cfg) else {
                return none;
            };
            let support: Vec<usize> = (0..p.len())
                .filter(|&k| p[k] != T::zero())
                .map(|k| regs[k])
                .collect();
            if support.is_empty() {
                return none;
            }
            let rss = prob.rss(&p);
            let mut coefficients = DVector::zeros(libmat.n_cols());
            for (k, &j) in regs.iter().enumerate() {
                coefficients[j] = p[k];
            }
            let r2 = T::one() - rss / prob.tss;
            let score = score_fn.score(rss, prob.tss, n, support.len());
            CandidateFit {
                target: l,
                fit: Some(FitResult {
                    coefficients,
                    support,
                    r2,
                    residual_norm: rss.max(T::zero()).sqrt(),
                    converged,
                }),
                score,
            }
        })
        .collect();
    Ok(fits)
}

/// Relation `−θ_l + Σ p_j (s_l/s_j) θ_j = 0` in unnormalized units.
pub fn relation_from_fit<T: Real>(
    libmat: &LibraryMatrix<T>,
    cand: &CandidateFit<T>,
    iteration: usize,
) -> Option<AlgebraicRelation<T>> {
    let fit = cand.fit.as_ref()?;
    let lib = libmat.library.terms();
    let l = cand.target;
    let mut coefs = BTreeMap::new();
    coefs.insert(lib[l].clone(), -T::one());
    for &j in &fit.support {
        coefs.insert(
            lib[j].clone(),
            fit.coefficients[j] * libmat.column_scales[l] / libmat.column_scales[j],
        );
    }
    AlgebraicRelation::new(coefs, lib[l].clone(), cand.score, iteration).ok()
}

fn max_complexity<T: Real>(rel: &AlgebraicRelation<T>) -> u32 {
    rel.coefficients
        .keys()
        .map(Term::complexity)
        .max()
        .unwrap_or(0)
}

/// Highest score wins. Near-ties prefer the simpler reduced relation, then the
/// smaller support, then the lexicographically smallest pivot encoding.
pub fn select_best_relation<T: Real>(
    libmat: &LibraryMatrix<T>,
    fits: &[CandidateFit<T>],
    iteration: usize,
) -> Result<T, (usize, AlgebraicRelation<T>)> {
    let best = fits
        .iter()
        .filter(|f| f.fit.is_some() && f.score.is_finite())
        .map(|f| f.score)
        .fold(None, |m: Option<T>, s| Some(m.map_or(s, |m| m.max(s))))
        .ok_or(FinderError::NoCandidate)?;
    let tie = T::lit(SCORE_TIE_TOL);
    let mut tied: Vec<(u32, usize, String, usize, AlgebraicRelation<T>)> = fits
        .iter()
        .enumerate()
        .filter(|(_, f)| f.fit.is_some() && f.score.is_finite() && f.score >= best - tie)
        .filter_map(|(i, f)| {
            let rel = relation_from_fit(libmat, f, iteration)?;
            let reduced = reduce_relation(&rel);
            Some((
                max_complexity(&reduced),
                rel.coefficients.len(),
                rel.pivot.encode(),
                i,
                rel,
            ))
        })
        .collect();
    tied.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    let (_, _, _, i, rel) = tied.into_iter().next().ok_or(FinderError::NoCandidate)?;
    Ok((fits[i].target, rel))
}

/// How to choose among equally complex pivot candidates.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiebreakPolicy {
    #[default]
    LexLargest,
    Seeded(u64),
    /// Term encodings in order of preference for elimination.
    Preference(Vec<String>),
}

/// Outcome of removing a relation's pivot and its multiples.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement<T: Real> {
    pub relation: AlgebraicRelation<T>,
    pub pivot: Term,
    pub removed: Vec<Term>,
    pub library: CandidateLibrary,
}

/// Reduces the relation, picks its most complex non-constant term and removes all multiples of it.
pub fn refine_library<T: Real>(
    lib: &CandidateLibrary,
    relation: &AlgebraicRelation<T>,
    policy: &TiebreakPolicy,
) -> Result<T, Refinement<T>> {
    let reduced = reduce_relation(relation);
    let mut rel = if reduced.coefficients.keys().all(|t| lib.contains(t)) {
        reduced
    } else {
        relation.clone()
    };
    let candidates: Vec<&Term> = rel
        .coefficients
        .keys()
        .filter(|t| !t.is_constant())
        .collect();
    let top = candidates
        .iter()
        .map(|t| t.complexity())
        .max()
        .ok_or(FinderError::EmptySupport)?;
    let mut tied: Vec<&Term> = candidates
        .into_iter()
        .filter(|t| t.complexity() == top)
        .collect();
    tied.sort_by_key(|t| t.encode());
    let pivot = match policy {
        TiebreakPolicy::LexLargest => tied[tied.len() - 1].clone(),
        TiebreakPolicy::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(rel.iteration as u64));
            tied[rng.random_range(0..tied.len())].clone()
        }
        TiebreakPolicy::Preference(order) => order
            .iter()
            .find_map(|e| tied.iter().find(|t| t.encode() == *e))
            .copied()
            .unwrap_or(tied[tied.len() - 1])
            .clone(),
    };
    let removed = multiples_of(&pivot, lib)?;
    let library = remove_terms(lib, &removed)?;
    rel.eliminated = Some(pivot.clone());
    Ok(Refinement {
        relation: rel,
        pivot,
        removed,
        library,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStep<T: Real> {
    pub iteration: usize,
    pub relation: AlgebraicRelation<T>,
    pub removed_pivot: Term,
    pub removed_set: Vec<Term>,
    pub diagnostics_before: SvdDiagnostics<T>,
    pub diagnostics_after: SvdDiagnostics<T>,
    pub score: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedK,
    ConditionStagnation,
    NoFitAboveScoreFloor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicResult<T: Real> {
    pub relations: Vec<AlgebraicRelation<T>>,
    pub initial_library: CandidateLibrary,
    pub refined_library: CandidateLibrary,
    pub trace: Vec<RefinementStep<T>>,
    /// Last refinement that was evaluated and rolled back, if any.
    pub rejected: Option<RefinementStep<T>>,
    pub initial_diagnostics: SvdDiagnostics<T>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicConfig {
    pub k: Option<usize>,
    /// Required ln-condition improvement per iteration; the last entry repeats.
    pub eps: Vec<f64>,
    pub score_floor: f64,
    pub sparse: SparseFitConfig,
    pub score: ScoreFunction,
    pub tiebreak: TiebreakPolicy,
    pub rank_tol: f64,
    pub restriction: Option<CandidateRestriction>,
}

impl Default for AlgebraicConfig {
    fn default() -> Self {
        Self {
            k: None,
            eps: vec![std::f64::consts::LN_10],
            score_floor: 0.5,
            sparse: SparseFitConfig::default(),
            score: ScoreFunction::R2,
            tiebreak: TiebreakPolicy::LexLargest,
            rank_tol: 1e-10,
            restriction: None,
        }
    }
}

impl AlgebraicConfig {
    pub fn eps_at(&self, iteration: usize) -> f64 {
        match self.eps.len() {
            0 => f64::INFINITY,
            n => self.eps[(iteration - 1).min(n - 1)],
        }
    }
}

/// Repeats fit → select → refine until `K` refinements are done and the
/// ln-condition stops improving by more than `eps`.
///
/// A refinement beyond `K` is kept when the ln-condition drops by more than
/// `eps`, or when the nullity estimate drops (the library was exactly
/// degenerate before and less so after).
pub fn run_algebraic_finder<T: Real>(
    lib0: &CandidateLibrary,
    table: &TimeSeriesTable<T>,
    cfg: &AlgebraicConfig,
) -> Result<T, AlgebraicResult<T>> {
    cfg.sparse.validate()?;
    if cfg.eps.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(FinderError::InvalidConfig(
            "eps entries must be non-negative".into(),
        ));
    }
    let full = evaluate_library(lib0, table, true)?;
    let rank_tol = T::lit(cfg.rank_tol);
    let initial = svd_diagnostics(&full, rank_tol)?;
    let mut result = AlgebraicResult {
        relations: Vec::new(),
        initial_library: lib0.clone(),
        refined_library: lib0.clone(),
        trace: Vec::new(),
        rejected: None,
        initial_diagnostics: initial.clone(),
        stop_reason: StopReason::ReachedK,
    };
    let mut before = initial;
    let demanded = cfg.k.unwrap_or(0);
    loop {
        let iteration = result.trace.len() + 1;
        let mandated = result.trace.len() < demanded;
        let eps = cfg.eps_at(iteration);
        if !mandated && eps.is_infinite() {
            result.stop_reason = StopReason::ReachedK;
            return Ok(result);
        }
        let libmat = full.restrict(&result.refined_library)?;
        let stop_or_fail = |mut result: AlgebraicResult<T>| {
            if mandated {
                Err(FinderError::NoRelationFound {
                    iteration,
                    demanded,
                    partial: Box::new(result),
                })
            } else {
                result.stop_reason = StopReason::NoFitAboveScoreFloor;
                Ok(result)
            }
        };
        if libmat.usable().len() < 2 {
            return stop_or_fail(result);
        }
        let fits = fit_all_candidates(&libmat, &cfg.sparse, cfg.score, cfg.restriction.as_ref())?;
        let (target, relation) = match select_best_relation(&libmat, &fits, iteration) {
            Ok(best) => best,
            Err(FinderError::NoCandidate) => return stop_or_fail(result),
            Err(e) => return Err(e),
        };
        let r2 = fits
            .iter()
            .find(|f| f.target == target)
            .and_then(|f| f.fit.as_ref())
            .map_or(T::neg_infinity(), |f| f.r2);
        if r2 < T::lit(cfg.score_floor) {
            return stop_or_fail(result);
        }
        let refinement = refine_library(&result.refined_library, &relation, &cfg.tiebreak)?;
        let after = svd_diagnostics(&full.restrict(&refinement.library)?, rank_tol)?;
        let step = RefinementStep {
            iteration,
            score: refinement.relation.score,
            relation: refinement.relation,
            removed_pivot: refinement.pivot,
            removed_set: refinement.removed,
            diagnostics_before: before.clone(),
            diagnostics_after: after.clone(),
        };
        let improvement = before.log_condition - after.log_condition;
        let improved =
            improvement > T::lit(eps) || after.nullity_estimate < before.nullity_estimate;
        if !(mandated || improved) {
            result.rejected = Some(step);
            result.stop_reason = StopReason::ConditionStagnation;
            return Ok(result);
        }
        result.relations.push(step.relation.clone());
        result.trace.push(step);
        result.refined_library = refinement.library;
        before = after;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termlib::{build_polynomial_library, library_from_encodings};
    use proptest::prelude::*;
    use rand::Rng;

    fn table(cols: Vec<(&str, Vec<f64>)>) -> TimeSeriesTable<f64> {
        let n = cols[0].1.len();
        TimeSeriesTable::from_columns(
            (0..n).map(|i| i as f64).collect(),
            cols.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        )
        .unwrap()
    }

    fn random_cols(seed: u64, names: &[&str], n: usize) -> Vec<(String, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        names
            .iter()
            .map(|s| {
                (
                    s.to_string(),
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn exact_pair_fits_both_ways() {
        let y1: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let y2: Vec<f64> = y1.iter().map(|v| 3.0 * v).collect();
        let t = table(vec![("a", y1), ("b", y2)]);
        let lib = library_from_encodings(&["[a]", "[b]"]).unwrap();
        let m = evaluate_library(&lib, &t, true).unwrap();
        let fits =
            fit_all_candidates(&m, &SparseFitConfig::default(), ScoreFunction::R2, None).unwrap();
        assert!(fits
            .iter()
            .all(|f| (f.fit.as_ref().unwrap().r2 - 1.0).abs() < 1e-12));
        let (_, rel) = select_best_relation(&m, &fits, 1).unwrap();
        let ratio = rel.coefficients[&Term::state("b")] / rel.coefficients[&Term::state("a")];
        assert!((ratio + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_give_no_relation() {
        let n = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = DMatrix::from_fn(n, 5, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let cols: Vec<(String, Vec<f64>)> = (0..5)
            .map(|c| (format!("x{c}"), q.column(c).iter().copied().collect()))
            .collect();
        let t = TimeSeriesTable::from_columns((0..n).map(|i| i as f64).collect(), cols).unwrap();
        let lib = library_from_encodings(&["[x0]", "[x1]", "[x2]", "[x3]", "[x4]"]).unwrap();
        let m = evaluate_library(&lib, &t, true).unwrap();
        let fits =
            fit_all_candidates(&m, &SparseFitConfig::default(), ScoreFunction::R2, None).unwrap();
        assert!(fits
            .iter()
            .all(|f| f.fit.is_none() && f.score == f64::NEG_INFINITY));
        assert!(matches!(
            select_best_relation(&m, &fits, 1),
            Err(FinderError::NoCandidate)
        ));
    }

    #[test]
    fn tie_prefers_smaller_support() {
        // x3 = x0 + x1 and x4 = x0 - x1 + x2 - x5: both exact, equally complex
        let mut cols = random_cols(4, &["x0", "x1", "x2", "x5"], 80);
        let v = |k: usize| cols[k].1.clone();
        let x3: Vec<f64> = (0..80).map(|i| v(0)[i] + v(1)[i]).collect();
        let x4: Vec<f64> = (0..80)
            .map(|i| v(0)[i] - v(1)[i] + v(2)[i] - v(3)[i])
            .collect();
        cols.push(("x3".into(), x3));
        cols.push(("x4".into(), x4));
        let t = TimeSeriesTable::from_columns((0..80).map(|i| i as f64).collect(), cols).unwrap();
        let lib =
            library_from_encodings(&["[x0]", "[x1]", "[x2]", "[x3]", "[x4]", "[x5]"]).unwrap();
        let m = evaluate_library(&lib, &t, true).unwrap();
        let restriction = CandidateRestriction {
            targets: Some(vec![Term::state("x3"), Term::state("x4")]),
            regressors: [
                (
                    Term::state("x3"),
                    vec![Term::state("x0"), Term::state("x1")],
                ),
                (
                    Term::state("x4"),
                    vec![
                        Term::state("x0"),
                        Term::state("x1"),
                        Term::state("x2"),
                        Term::state("x5"),
                    ],
                ),
            ]
            .into_iter()
            .collect(),
        };
        let cfg = SparseFitConfig {
            alpha: 0.0,
            threshold: 0.05,
            ..Default::default()
        };
        let fits = fit_all_candidates(&m, &cfg, ScoreFunction::R2, Some(&restriction)).unwrap();
        assert_eq!(fits.len(), 2);
        let (target, rel) = select_best_relation(&m, &fits, 1).unwrap();
        assert_eq!(target, 3);
        assert_eq!(rel.coefficients.len(), 3);
    }

    #[test]
    fn argmax_selection() {
        let cols = random_cols(9, &["a", "b", "c"], 50);
        let t = TimeSeriesTable::from_columns((0..50).map(|i| i as f64).collect(), cols).unwrap();
        let lib = library_from_encodings(&["[a]", "[b]", "[c]"]).unwrap();
        let m = evaluate_library(&lib, &t, true).unwrap();
        let mk = |target: usize, score: f64| CandidateFit {
            target,
            fit: Some(FitResult {
                coefficients: DVector::from_fn(
                    3,
                    |j, _| if j == (target + 1) % 3 { 0.5 } else { 0.0 },
                ),
                support: vec![(target + 1) % 3],
                r2: score,
                residual_norm: 0.0,
                converged: true,
            }),
            score,
        };
        let (best, _) = select_best_relation(&m, &[mk(0, 0.99), mk(1, 0.97)], 1).unwrap();
        assert_eq!(best, 0);
        let (only, _) = select_best_relation(&m, &[mk(2, 1.0)], 1).unwrap();
        assert_eq!(only, 2);
    }

    #[test]
    fn diagnostics_of_orthonormal_and_dependent() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q()
            * (n as f64).sqrt();
        let lib = library_from_encodings(&["[a]", "[b]", "[c]", "[d]"]).unwrap();
        let m = LibraryMatrix {
            library: lib,
            values: q,
            column_scales: vec![1.0; 4],
            degenerate: vec![false; 4],
        };
        let d = svd_diagnostics(&m, 1e-10).unwrap();
        assert_eq!(d.nullity_estimate, 0);
        assert!(d.log_condition.abs() < 1e-12);
        assert!(d.variance_ratios.iter().all(|v| (v - 0.25).abs() < 1e-12));

        let mut cols = random_cols(5, &["a", "b", "c", "d", "e"], 100);
        let s: Vec<f64> = (0..100).map(|i| cols[0].1[i] + cols[1].1[i]).collect();
        cols.push(("f".into(), s));
        let t = TimeSeriesTable::from_columns((0..100).map(|i| i as f64).collect(), cols).unwrap();
        let lib = library_from_encodings(&["[a]", "[b]", "[c]", "[d]", "[e]", "[f]"]).unwrap();
        let m = evaluate_library(&lib, &t, true).unwrap();
        let d = svd_diagnostics(&m, 1e-10).unwrap();
        assert_eq!(d.nullity_estimate, 1);
        assert_eq!(d.numeric_rank, 5);
        let sum: f64 = d.variance_ratios.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pivot_selection() {
        let lib = build_polynomial_library(&["x", "y"], 2, true).unwrap();
        let coefs = [(Term::power("x", 2), 1.0), (Term::state("y"), 1.0)]
            .into_iter()
            .collect();
        let rel = AlgebraicRelation::new(coefs, Term::state("y"), 1.0, 1).unwrap();
        let r = refine_library(&lib, &rel, &TiebreakPolicy::LexLargest).unwrap();
        assert_eq!(r.pivot, Term::power("x", 2));
        assert_eq!(r.removed, vec![Term::power("x", 2)]);

        let coefs = [
            (Term::state("x"), 1.0),
            (Term::state("y"), 1.0),
            (Term::constant(), -1.0),
        ]
        .into_iter()
        .collect();
        let rel = AlgebraicRelation::new(coefs, Term::state("x"), 1.0, 1).unwrap();
        let lex = refine_library(&lib, &rel, &TiebreakPolicy::LexLargest).unwrap();
        assert_eq!(lex.pivot, Term::state("y"));
        let pref =
            refine_library(&lib, &rel, &TiebreakPolicy::Preference(vec!["[x]".into()])).unwrap();
        assert_eq!(pref.pivot, Term::state("x"));
        assert_eq!(pref.removed.len(), 3);
        let seeded = refine_library(&lib, &rel, &TiebreakPolicy::Seeded(7)).unwrap();
        assert_eq!(
            seeded,
            refine_library(&lib, &rel, &TiebreakPolicy::Seeded(7)).unwrap()
        );
        assert!(!seeded.pivot.is_constant());
    }

    #[test]
    fn zero_iterations_when_disabled() {
        let cols = random_cols(1, &["a", "b"], 30);
        let t = TimeSeriesTable::from_columns((0..30).map(|i| i as f64).collect(), cols).unwrap();
        let lib = build_polynomial_library(&["a", "b"], 2, true).unwrap();
        let cfg = AlgebraicConfig {
            k: Some(0),
            eps: vec![f64::INFINITY],
            ..Default::default()
        };
        let res = run_algebraic_finder(&lib, &t, &cfg).unwrap();
        assert!(res.relations.is_empty());
        assert_eq!(res.refined_library, lib);
        assert_eq!(res.stop_reason, StopReason::ReachedK);
    }

    #[test]
    fn demanded_relation_missing_is_reported() {
        let cols = random_cols(3, &["a", "b", "c"], 60);
        let t = TimeSeriesTable::from_columns((0..60).map(|i| i as f64).collect(), cols).unwrap();
        let lib = library_from_encodings(&["[a]", "[b]", "[c]"]).unwrap();
        let cfg = AlgebraicConfig {
            k: Some(1),
            ..Default::default()
        };
        match run_algebraic_finder(&lib, &t, &cfg) {
            Err(FinderError::NoRelationFound { partial, .. }) => {
                assert!(partial.relations.is_empty())
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Random states plus `p` planted linear combinations of them.
    fn planted(seed: u64, free: usize, p: usize) -> (TimeSeriesTable<f64>, CandidateLibrary) {
        let names: Vec<String> = (0..free).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut cols = random_cols(seed, &refs, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for k in 0..p {
            let a = rng.random_range(0.5..2.0);
            let b = rng.random_range(-2.0..-0.5);
            let (i, j) = (2 * k % free, (2 * k + 1) % free);
            let z: Vec<f64> = (0..300)
                .map(|r| a * cols[i].1[r] + b * cols[j].1[r] + 0.3)
                .collect();
            cols.push((format!("z{k}"), z));
        }
        let mut lib_terms = vec![Term::constant()];
        lib_terms.extend(cols.iter().map(|(n, _)| Term::state(n)));
        let t = TimeSeriesTable::from_columns((0..300).map(|i| i as f64).collect(), cols).unwrap();
        (t, CandidateLibrary::new(lib_terms).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fits_ignore_scheduling(seed in 0u64..1000) {
            let (t, lib) = planted(seed, 5, 2);
            let m = evaluate_library(&lib, &t, true).unwrap();
            let cfg = SparseFitConfig::default();
            let a = fit_all_candidates(&m, &cfg, ScoreFunction::R2, None).unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let b = pool.install(|| fit_all_candidates(&m, &cfg, ScoreFunction::R2, None).unwrap());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn refinements_shed_nullity_keep_rank(seed in 0u64..1000, p in 1usize..4) {
            let (t, lib) = planted(seed, 6, p);
            let res = run_algebraic_finder(&lib, &t, &AlgebraicConfig::default()).unwrap();
            prop_assert_eq!(res.initial_diagnostics.nullity_estimate, p);
            prop_assert_eq!(res.relations.len(), p);
            for step in &res.trace {
                prop_assert_eq!(step.diagnostics_after.nullity_estimate + 1, step.diagnostics_before.nullity_estimate);
                prop_assert_eq!(step.diagnostics_after.numeric_rank, step.diagnostics_before.numeric_rank);
                prop_assert!(step.relation.relative_residual(&t).unwrap() <= 1e-6);
            }
        }

        #[test]
        fn accepted_steps_improve(seed in 0u64..1000) {
            let (t, lib) = planted(seed, 4, 1);
            let noisy = crate::timeseries::inject_noise(&t, 0.01, seed).unwrap();
            let cfg = AlgebraicConfig::default();
            let res = run_algebraic_finder(&lib, &noisy, &cfg).unwrap();
            for step in &res.trace {
                let gain = step.diagnostics_before.log_condition - step.diagnostics_after.log_condition;
                prop_assert!(gain > cfg.eps_at(step.iteration)
                    || step.diagnostics_after.nullity_estimate < step.diagnostics_before.nullity_estimate);
            }
        }
    }
}
