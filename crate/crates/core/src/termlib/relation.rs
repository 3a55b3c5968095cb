use super::library::evaluate_term;
use super::term::Term;
use super::TermError;
use crate::scalar::Real;
use crate::timeseries::TimeSeriesTable;
use std::collections::BTreeMap;

/// Sparse relation `Σ c_j θ_j(x) = 0` in unnormalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicRelation<T: Real> {
    pub coefficients: BTreeMap<Term, T>,
    /// Term that was regressed on; its coefficient is −1 before any rescaling.
    pub pivot: Term,
    pub score: T,
    pub iteration: usize,
    /// Term removed from the library when this relation was accepted.
    pub eliminated: Option<Term>,
}

impl<T: Real> AlgebraicRelation<T> {
    pub fn new(
        coefficients: BTreeMap<Term, T>,
        pivot: Term,
        score: T,
        iteration: usize,
    ) -> Result<Self, TermError> {
        let coefficients: BTreeMap<Term, T> = coefficients
            .into_iter()
            .filter(|(_, c)| *c != T::zero())
            .collect();
        if coefficients.len() < 2 {
            return Err(TermError::TrivialRelation(coefficients.len()));
        }
        if !coefficients.contains_key(&pivot) {
            return Err(TermError::PivotNotInSupport(pivot.encode()));
        }
        Ok(Self {
            coefficients,
            pivot,
            score,
            iteration,
            eliminated: None,
        })
    }

    pub fn support(&self) -> Vec<&Term> {
        self.coefficients.keys().collect()
    }

    /// Left-hand side evaluated on each row.
    pub fn residual(&self, table: &TimeSeriesTable<T>) -> Result<Vec<T>, TermError> {
        let mut out = vec![T::zero(); table.n_rows()];
        for (term, c) in &self.coefficients {
            let col = evaluate_term(term, table)?;
            for (o, x) in out.iter_mut().zip(col) {
                *o += *c * x;
            }
        }
        Ok(out)
    }

    /// Residual RMS relative to the RMS of the largest individual term contribution.
    pub fn relative_residual(&self, table: &TimeSeriesTable<T>) -> Result<T, TermError> {
        let n = T::lit(table.n_rows().max(1) as f64);
        let rms = |v: &[T]| (v.iter().fold(T::zero(), |a, x| a + *x * *x) / n).sqrt();
        let mut largest = T::zero();
        for (term, c) in &self.coefficients {
            let col: Vec<T> = evaluate_term(term, table)?
                .into_iter()
                .map(|x| x * *c)
                .collect();
            largest = largest.max(rms(&col));
        }
        let r = rms(&self.residual(table)?);
        Ok(if largest > T::zero() { r / largest } else { r })
    }
}

/// Divides out the greatest common factor of the support terms.
pub fn reduce_relation<T: Real>(rel: &AlgebraicRelation<T>) -> AlgebraicRelation<T> {
    let mut terms = rel.coefficients.keys();
    let first = match terms.next() {
        Some(t) => t.clone(),
        None => return rel.clone(),
    };
    let g = terms.fold(first, |acc, t| acc.gcd(t));
    if g.is_constant() {
        return rel.clone();
    }
    let divide = |t: &Term| g.quotient_of(t).expect("gcd divides every support term");
    AlgebraicRelation {
        coefficients: rel
            .coefficients
            .iter()
            .map(|(t, c)| (divide(t), *c))
            .collect(),
        pivot: divide(&rel.pivot),
        score: rel.score,
        iteration: rel.iteration,
        eliminated: rel.eliminated.as_ref().and_then(|e| g.quotient_of(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(pairs: &[(&str, f64)], pivot: &str) -> AlgebraicRelation<f64> {
        let coefs = pairs
            .iter()
            .map(|(e, c)| (Term::parse(e).unwrap(), *c))
            .collect();
        AlgebraicRelation::new(coefs, Term::parse(pivot).unwrap(), 1.0, 1).unwrap()
    }

    #[test]
    fn factors_common_monomial() {
        let r = rel(
            &[("[A]*[E1]", 1.0), ("[A]*[AE1]", 1.0), ("[A]", -2.0)],
            "[A]*[E1]",
        );
        let red = reduce_relation(&r);
        let enc: Vec<String> = red.coefficients.keys().map(Term::encode).collect();
        assert_eq!(enc.len(), 3);
        assert_eq!(red.coefficients[&Term::constant()], -2.0);
        assert_eq!(red.coefficients[&Term::state("E1")], 1.0);
        assert_eq!(red.pivot, Term::state("E1"));

        let plain = rel(&[("[E1]", 1.0), ("[AE1]", 1.0), ("1", -2.0)], "[E1]");
        assert_eq!(reduce_relation(&plain), plain);

        let r = rel(&[("[x]^2*[y]", 1.0), ("[x]^2", 2.0)], "[x]^2");
        let red = reduce_relation(&r);
        assert_eq!(red.coefficients[&Term::state("y")], 1.0);
        assert_eq!(red.coefficients[&Term::constant()], 2.0);
    }

    #[test]
    fn rejects_trivial() {
        let coefs = [(Term::state("x"), 1.0)].into_iter().collect();
        assert!(AlgebraicRelation::new(coefs, Term::state("x"), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn reduction_is_idempotent(
            exps in proptest::collection::vec((0u32..3, 0u32..3, 0u32..2), 2..5),
            common in (0u32..3, 0u32..3),
        ) {
            let mut coefs = BTreeMap::new();
            for (k, (a, b, s)) in exps.iter().enumerate() {
                let mut t = Term::power("a", a + common.0).mul(&Term::power("b", b + common.1));
                if *s == 1 {
                    t = t.mul(&Term::sin_diff("a", "b"));
                }
                coefs.insert(t, 1.0 + k as f64);
            }
            prop_assume!(coefs.len() >= 2);
            let pivot = coefs.keys().next().unwrap().clone();
            let r = AlgebraicRelation::new(coefs, pivot, 1.0, 0).unwrap();
            let once = reduce_relation(&r);
            prop_assert_eq!(reduce_relation(&once), once.clone());
            let g = once.coefficients.keys().skip(1).fold(once.coefficients.keys().next().unwrap().clone(), |a, t| a.gcd(t));
            prop_assert!(g.is_constant());
        }
    }
}
