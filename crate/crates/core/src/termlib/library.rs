use super::term::{valid_name, Operand, Term, TrigKind};
use super::TermError;
use crate::scalar::Real;
use crate::timeseries::TimeSeriesTable;
use nalgebra::DMatrix;
use std::collections::{BTreeMap, BTreeSet};

/// Ordered set of distinct terms; `generation` counts refinements applied.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CandidateLibrary {
    terms: Vec<Term>,
    generation: usize,
}

impl CandidateLibrary {
    pub fn new(terms: Vec<Term>) -> Result<Self, TermError> {
        let mut seen = BTreeSet::new();
        for t in &terms {
            if !seen.insert(t) {
                return Err(TermError::DuplicateTerm(t.encode()));
            }
        }
        Ok(Self {
            terms,
            generation: 0,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &Term) -> bool {
        self.terms.contains(term)
    }

    pub fn index_of(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// State names referenced by any term, sorted.
    pub fn states(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.terms.iter().flat_map(|t| t.states()).collect();
        set.into_iter().map(str::to_string).collect()
    }
}

fn check_names(states: &[&str]) -> Result<Vec<String>, TermError> {
    let mut sorted: Vec<String> = states.iter().map(|s| s.to_string()).collect();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(TermError::DuplicateName(w[0].clone()));
        }
    }
    if let Some(bad) = sorted.iter().find(|s| !valid_name(s)) {
        return Err(TermError::InvalidName(bad.clone()));
    }
    Ok(sorted)
}

/// All monomials of total degree 1..=max_degree, by degree then lexicographically.
pub fn build_polynomial_library(
    states: &[&str],
    max_degree: u32,
    include_constant: bool,
) -> Result<CandidateLibrary, TermError> {
    if states.is_empty() {
        return Err(TermError::NoStates);
    }
    if max_degree < 1 {
        return Err(TermError::DegreeTooSmall(max_degree));
    }
    let names = check_names(states)?;
    let mut terms = Vec::new();
    if include_constant {
        terms.push(Term::constant());
    }
    fn combos(d: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            combos(d, k, i, cur, out);
            cur.pop();
        }
    }
    for degree in 1..=max_degree as usize {
        let mut out = Vec::new();
        combos(names.len(), degree, 0, &mut Vec::new(), &mut out);
        for idx in out {
            let t = idx
                .iter()
                .fold(Term::constant(), |acc, &i| acc.mul(&Term::state(&names[i])));
            terms.push(t);
        }
    }
    CandidateLibrary::new(terms)
}

pub fn grid_power(i: usize) -> String {
    format!("Pe_{i}")
}

pub fn grid_phase(i: usize) -> String {
    format!("phi_{i}")
}

pub fn grid_speed(i: usize) -> String {
    format!("dphi_{i}")
}

/// Grid library over nodes `1..=n`: power, phase and speed per node plus sine couplings.
///
/// Unrestricted: `sin(phi_i-phi_j)` for every `i ≤ j`. Restricted to node `i`:
/// `sin(phi_i-phi_j)` for every `j ≠ i`.
pub fn build_grid_library(
    n: usize,
    restrict_to_node: Option<usize>,
) -> Result<CandidateLibrary, TermError> {
    if n < 2 {
        return Err(TermError::GridTooSmall(n));
    }
    if let Some(i) = restrict_to_node {
        if i == 0 || i > n {
            return Err(TermError::NodeOutOfRange { node: i, nodes: n });
        }
    }
    let mut terms: Vec<Term> = Vec::with_capacity(3 * n + n * (n + 1) / 2);
    terms.extend((1..=n).map(|i| Term::state(&grid_power(i))));
    terms.extend((1..=n).map(|i| Term::state(&grid_phase(i))));
    terms.extend((1..=n).map(|i| Term::state(&grid_speed(i))));
    match restrict_to_node {
        None => {
            for i in 1..=n {
                for j in i..=n {
                    terms.push(Term::sin_diff(&grid_phase(i), &grid_phase(j)));
                }
            }
        }
        Some(i) => {
            for j in (1..=n).filter(|&j| j != i) {
                terms.push(Term::sin_diff(&grid_phase(i), &grid_phase(j)));
            }
        }
    }
    CandidateLibrary::new(terms)
}

/// Numeric evaluation of a library on a table.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryMatrix<T: Real> {
    pub library: CandidateLibrary,
    pub values: DMatrix<T>,
    pub column_scales: Vec<T>,
    pub degenerate: Vec<bool>,
}

impl<T: Real> LibraryMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Indices of columns that are not identically zero.
    pub fn usable(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&j| !self.degenerate[j])
            .collect()
    }

    /// Column subset, preserving library order.
    pub fn restrict(&self, library: &CandidateLibrary) -> Result<LibraryMatrix<T>, TermError> {
        let idx = library
            .terms()
            .iter()
            .map(|t| {
                self.library
                    .index_of(t)
                    .ok_or_else(|| TermError::NotInLibrary(t.encode()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LibraryMatrix {
            library: library.clone(),
            values: self.values.select_columns(idx.iter()),
            column_scales: idx.iter().map(|&j| self.column_scales[j]).collect(),
            degenerate: idx.iter().map(|&j| self.degenerate[j]).collect(),
        })
    }
}

/// Evaluates one term on every row of a table.
pub fn evaluate_term<T: Real>(
    term: &Term,
    table: &TimeSeriesTable<T>,
) -> Result<Vec<T>, TermError> {
    let col = |s: &str| {
        table
            .column_index(s)
            .ok_or_else(|| TermError::MissingState(s.to_string()))
    };
    let powers = term
        .monomial()
        .iter()
        .map(|(s, e)| Ok((col(s)?, *e as i32)))
        .collect::<Result<Vec<_>, TermError>>()?;
    let atoms = term
        .atoms()
        .iter()
        .map(|a| {
            let (i, j) = match &a.operand {
                Operand::State(x) => (col(x)?, None),
                Operand::Diff(x, y) => (col(x)?, Some(col(y)?)),
            };
            Ok((a.kind, i, j))
        })
        .collect::<Result<Vec<_>, TermError>>()?;
    let v = table.values();
    let out: Vec<T> = (0..table.n_rows())
        .map(|r| {
            let mut x = T::one();
            for &(c, e) in &powers {
                x *= v[(r, c)].powi(e);
            }
            for &(kind, i, j) in &atoms {
                let arg = match j {
                    Some(j) => v[(r, i)] - v[(r, j)],
                    None => v[(r, i)],
                };
                x *= match kind {
                    TrigKind::Sin => arg.sin(),
                    TrigKind::Cos => arg.cos(),
                };
            }
            x
        })
        .collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(TermError::NonFinite(term.encode()));
    }
    Ok(out)
}

/// Evaluates every term; with `normalize` each non-zero column is scaled to unit RMS.
pub fn evaluate_library<T: Real>(
    lib: &CandidateLibrary,
    table: &TimeSeriesTable<T>,
    normalize: bool,
) -> Result<LibraryMatrix<T>, TermError> {
    let n = table.n_rows();
    let mut values = DMatrix::zeros(n, lib.len());
    let mut scales = Vec::with_capacity(lib.len());
    let mut degenerate = Vec::with_capacity(lib.len());
    for (j, term) in lib.terms().iter().enumerate() {
        let col = evaluate_term(term, table)?;
        let ms = col.iter().fold(T::zero(), |a, x| a + *x * *x) / T::lit(n.max(1) as f64);
        let rms = ms.sqrt();
        let zero = rms == T::zero();
        let scale = if normalize && !zero { rms } else { T::one() };
        for (r, x) in col.into_iter().enumerate() {
            values[(r, j)] = x / scale;
        }
        scales.push(scale);
        degenerate.push(zero);
    }
    Ok(LibraryMatrix {
        library: lib.clone(),
        values,
        column_scales: scales,
        degenerate,
    })
}

/// Complexity score of a term.
pub fn complexity_score(term: &Term) -> u32 {
    term.complexity()
}

/// Library members divisible by `term`, in library order.
pub fn multiples_of(term: &Term, lib: &CandidateLibrary) -> Result<Vec<Term>, TermError> {
    if !lib.contains(term) {
        return Err(TermError::NotInLibrary(term.encode()));
    }
    Ok(lib
        .terms()
        .iter()
        .filter(|u| term.divides(u))
        .cloned()
        .collect())
}

/// Drops `removal` from `lib`, keeping survivor order and advancing the generation.
pub fn remove_terms(
    lib: &CandidateLibrary,
    removal: &[Term],
) -> Result<CandidateLibrary, TermError> {
    if let Some(t) = removal.iter().find(|t| !lib.contains(t)) {
        return Err(TermError::NotInLibrary(t.encode()));
    }
    let drop: BTreeSet<&Term> = removal.iter().collect();
    Ok(CandidateLibrary {
        terms: lib
            .terms
            .iter()
            .filter(|t| !drop.contains(t))
            .cloned()
            .collect(),
        generation: lib.generation + 1,
    })
}

/// Library parsed from canonical term encodings.
pub fn library_from_encodings(encodings: &[&str]) -> Result<CandidateLibrary, TermError> {
    CandidateLibrary::new(
        encodings
            .iter()
            .map(|e| Term::parse(e))
            .collect::<Result<_, _>>()?,
    )
}

/// Terms of `lib` grouped by complexity, mostly for reporting.
pub fn complexity_histogram(lib: &CandidateLibrary) -> BTreeMap<u32, usize> {
    let mut h = BTreeMap::new();
    for t in lib.terms() {
        *h.entry(t.complexity()).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn polynomial_enumeration() {
        let lib = build_polynomial_library(&["B", "A"], 2, true).unwrap();
        let enc: Vec<String> = lib.terms().iter().map(Term::encode).collect();
        assert_eq!(enc, ["1", "[A]", "[B]", "[A]^2", "[A]*[B]", "[B]^2"]);
        assert_eq!(
            build_polynomial_library(&["a", "b", "c", "d"], 2, true)
                .unwrap()
                .len(),
            15
        );
        assert!(matches!(
            build_polynomial_library(&["a", "a"], 2, true),
            Err(TermError::DuplicateName(_))
        ));
        assert!(matches!(
            build_polynomial_library(&["a"], 0, true),
            Err(TermError::DegreeTooSmall(0))
        ));
    }

    #[test]
    fn seven_state_counts_match_both_conventions() {
        let states = ["A", "B", "C", "E1", "AE1", "E2", "BE2"];
        assert_eq!(
            build_polynomial_library(&states, 2, false).unwrap().len(),
            35
        );
        assert_eq!(
            build_polynomial_library(&states, 2, true).unwrap().len(),
            36
        );
        assert_eq!(
            build_polynomial_library(&["A", "B", "E1", "AE1"], 3, false)
                .unwrap()
                .len(),
            34
        );
    }

    #[test]
    fn grid_library_counts() {
        for (n, full, restricted) in [(6, 39, 23), (12, 114, 47), (49, 1372, 195)] {
            assert_eq!(build_grid_library(n, None).unwrap().len(), full);
            assert_eq!(build_grid_library(n, Some(1)).unwrap().len(), restricted);
        }
        let two = build_grid_library(2, None).unwrap();
        assert_eq!(two.len(), 9);
        assert!(two.contains(&Term::sin_diff("phi_1", "phi_1")));
        assert!(matches!(
            build_grid_library(1, None),
            Err(TermError::GridTooSmall(1))
        ));
        assert!(matches!(
            build_grid_library(3, Some(4)),
            Err(TermError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn evaluation_and_normalization() {
        let table = TimeSeriesTable::from_columns(
            vec![0.0, 1.0],
            vec![("A".into(), vec![2.0, 1.0]), ("B".into(), vec![3.0, 4.0])],
        )
        .unwrap();
        let lib = library_from_encodings(&["1", "[A]*[B]", "sin(A-A)"]).unwrap();
        let raw: LibraryMatrix<f64> = evaluate_library(&lib, &table, false).unwrap();
        assert_eq!(raw.values.column(0).as_slice(), &[1.0, 1.0]);
        assert_eq!(raw.values.column(1).as_slice(), &[6.0, 4.0]);
        assert_eq!(raw.degenerate, vec![false, false, true]);
        let norm: LibraryMatrix<f64> = evaluate_library(&lib, &table, true).unwrap();
        assert_eq!(norm.column_scales[0], 1.0);
        assert_eq!(norm.column_scales[2], 1.0);
        let rms = (norm.values.column(1).norm_squared() / 2.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-15);
        let missing = library_from_encodings(&["[C]"]).unwrap();
        assert!(matches!(
            evaluate_library(&missing, &table, true),
            Err(TermError::MissingState(_))
        ));
    }

    #[test]
    fn multiples_and_removal() {
        let lib = build_polynomial_library(&["A", "B", "E1", "AE1"], 2, true).unwrap();
        let e1 = Term::state("E1");
        let m: BTreeSet<String> = multiples_of(&e1, &lib)
            .unwrap()
            .iter()
            .map(Term::encode)
            .collect();
        let expected: BTreeSet<String> = ["[E1]", "[A]*[E1]", "[B]*[E1]", "[AE1]*[E1]", "[E1]^2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(m, expected);
        assert_eq!(
            multiples_of(&Term::constant(), &lib).unwrap().len(),
            lib.len()
        );
        let cubic = build_polynomial_library(&["x", "y"], 3, true).unwrap();
        let brute: Vec<Term> = cubic
            .terms()
            .iter()
            .filter(|t| t.monomial().get("x").copied().unwrap_or(0) >= 2)
            .cloned()
            .collect();
        assert_eq!(multiples_of(&Term::power("x", 2), &cubic).unwrap(), brute);
        assert_eq!(brute.len(), 3);

        let removed = remove_terms(&lib, &multiples_of(&e1, &lib).unwrap()).unwrap();
        assert_eq!(removed.len(), 10);
        assert_eq!(removed.generation(), 1);
        let same = remove_terms(&lib, &[]).unwrap();
        assert_eq!(same.terms(), lib.terms());
        assert_eq!(same.generation(), 1);
        assert!(remove_terms(&removed, &[e1]).is_err());
    }

    proptest! {
        #[test]
        fn polynomial_size_is_binomial(d in 1usize..6, p in 1u32..5, constant in any::<bool>()) {
            let names: Vec<String> = (0..d).map(|i| format!("s{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let lib = build_polynomial_library(&refs, p, constant).unwrap();
            let expected = binom(d as u64 + p as u64, p as u64) - if constant { 0 } else { 1 };
            prop_assert_eq!(lib.len() as u64, expected);
        }

        #[test]
        fn grid_size_closed_forms(n in 2usize..=64, node in 1usize..=64) {
            prop_assert_eq!(build_grid_library(n, None).unwrap().len(), 3 * n + n * (n + 1) / 2);
            if node <= n {
                prop_assert_eq!(build_grid_library(n, Some(node)).unwrap().len(), 4 * n - 1);
            }
        }

        #[test]
        fn removal_chain_is_decreasing(picks in proptest::collection::vec(0usize..100, 1..4)) {
            let mut lib = build_polynomial_library(&["x", "y", "z"], 3, true).unwrap();
            let original: BTreeSet<Term> = lib.terms().iter().cloned().collect();
            for p in picks {
                if lib.is_empty() { break; }
                let t = lib.terms()[p % lib.len()].clone();
                let next = remove_terms(&lib, &multiples_of(&t, &lib).unwrap()).unwrap();
                let prev: BTreeSet<&Term> = lib.terms().iter().collect();
                prop_assert!(next.terms().iter().all(|u| prev.contains(u) && original.contains(u)));
                prop_assert!(next.len() < lib.len());
                lib = next;
            }
        }
    }
}
