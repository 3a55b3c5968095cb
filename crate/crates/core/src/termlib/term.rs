use super::TermError;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrigKind {
    Cos,
    Sin,
}

impl TrigKind {
    fn name(self) -> &'static str {
        match self {
            TrigKind::Cos => "cos",
            TrigKind::Sin => "sin",
        }
    }
}

/// Argument of a trigonometric atom: a single state or a difference of two.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    State(String),
    Diff(String, String),
}

impl Operand {
    pub fn states(&self) -> Vec<&str> {
        match self {
            Operand::State(a) => vec![a],
            Operand::Diff(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub kind: TrigKind,
    pub operand: Operand,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.operand {
            Operand::State(a) => write!(f, "{}({})", self.kind.name(), a),
            Operand::Diff(a, b) => write!(f, "{}({}-{})", self.kind.name(), a, b),
        }
    }
}

/// Product of state powers and trigonometric atoms, kept in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Term {
    monomial: BTreeMap<String, u32>,
    atoms: Vec<Atom>,
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "1"
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

impl Term {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn state(name: &str) -> Self {
        Self::power(name, 1)
    }

    pub fn power(name: &str, exponent: u32) -> Self {
        let mut monomial = BTreeMap::new();
        if exponent > 0 {
            monomial.insert(name.to_string(), exponent);
        }
        Self {
            monomial,
            atoms: Vec::new(),
        }
    }

    pub fn trig(kind: TrigKind, operand: Operand) -> Self {
        Self {
            monomial: BTreeMap::new(),
            atoms: vec![Atom { kind, operand }],
        }
    }

    pub fn sin_diff(a: &str, b: &str) -> Self {
        Self::trig(TrigKind::Sin, Operand::Diff(a.into(), b.into()))
    }

    pub fn monomial(&self) -> &BTreeMap<String, u32> {
        &self.monomial
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_constant(&self) -> bool {
        self.monomial.is_empty() && self.atoms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.monomial.values().sum()
    }

    /// Monomial degree plus one per trig atom.
    pub fn complexity(&self) -> u32 {
        self.degree() + self.atoms.len() as u32
    }

    /// `Some((state, exponent))` when the term is a single state power.
    pub fn pure_power(&self) -> Option<(&str, u32)> {
        if self.atoms.is_empty() && self.monomial.len() == 1 {
            self.monomial.iter().next().map(|(s, e)| (s.as_str(), *e))
        } else {
            None
        }
    }

    /// Every state name referenced, sorted.
    pub fn states(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.monomial.keys().map(String::as_str).collect();
        for a in &self.atoms {
            out.extend(a.operand.states());
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn mul(&self, other: &Term) -> Term {
        let mut monomial = self.monomial.clone();
        for (s, e) in &other.monomial {
            *monomial.entry(s.clone()).or_insert(0) += e;
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        atoms.sort();
        Term { monomial, atoms }
    }

    /// True when `self` divides `other`: exponents componentwise ≤ and atom multiset ⊆.
    pub fn divides(&self, other: &Term) -> bool {
        self.monomial
            .iter()
            .all(|(s, e)| other.monomial.get(s).is_some_and(|o| o >= e))
            && atom_difference(&other.atoms, &self.atoms).is_some()
    }

    /// `other / self` when divisible.
    pub fn quotient_of(&self, other: &Term) -> Option<Term> {
        if !self.divides(other) {
            return None;
        }
        let mut monomial = other.monomial.clone();
        for (s, e) in &self.monomial {
            let left = monomial[s] - e;
            if left == 0 {
                monomial.remove(s);
            } else {
                monomial.insert(s.clone(), left);
            }
        }
        let atoms = atom_difference(&other.atoms, &self.atoms)?;
        Some(Term { monomial, atoms })
    }

    /// Greatest common factor: exponent minima and atom multiset intersection.
    pub fn gcd(&self, other: &Term) -> Term {
        let monomial = self
            .monomial
            .iter()
            .filter_map(|(s, e)| other.monomial.get(s).map(|o| (s.clone(), (*e).min(*o))))
            .collect();
        let mut atoms = Vec::new();
        let mut rest = other.atoms.clone();
        for a in &self.atoms {
            if let Some(p) = rest.iter().position(|b| b == a) {
                atoms.push(rest.remove(p));
            }
        }
        atoms.sort();
        Term { monomial, atoms }
    }

    /// Canonical encoding such as `[A]^2*[E1]*sin(phi_1-phi_2)`; the empty product is `1`.
    pub fn encode(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Term, TermError> {
        let text = text.trim();
        let bad = || TermError::Parse(text.to_string());
        if text == "1" {
            return Ok(Term::constant());
        }
        let mut term = Term::constant();
        for factor in text.split('*') {
            let factor = factor.trim();
            let next = if let Some(rest) = factor.strip_prefix('[') {
                let (name, tail) = rest.split_once(']').ok_or_else(bad)?;
                if !valid_name(name) {
                    return Err(bad());
                }
                let exponent = match tail.strip_prefix('^') {
                    Some(e) => e.parse::<u32>().map_err(|_| bad())?,
                    None if tail.is_empty() => 1,
                    None => return Err(bad()),
                };
                if exponent == 0 {
                    return Err(bad());
                }
                Term::power(name, exponent)
            } else {
                let (kind, rest) = if let Some(r) = factor.strip_prefix("sin(") {
                    (TrigKind::Sin, r)
                } else if let Some(r) = factor.strip_prefix("cos(") {
                    (TrigKind::Cos, r)
                } else {
                    return Err(bad());
                };
                let arg = rest.strip_suffix(')').ok_or_else(bad)?;
                let operand = match arg.split_once('-') {
                    Some((a, b)) if valid_name(a) && valid_name(b) => {
                        Operand::Diff(a.into(), b.into())
                    }
                    None if valid_name(arg) => Operand::State(arg.into()),
                    _ => return Err(bad()),
                };
                Term::trig(kind, operand)
            };
            term = term.mul(&next);
        }
        Ok(term)
    }
}

fn atom_difference(big: &[Atom], small: &[Atom]) -> Option<Vec<Atom>> {
    let mut rest = big.to_vec();
    for a in small {
        let p = rest.iter().position(|b| b == a)?;
        rest.remove(p);
    }
    Some(rest)
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return f.write_str("1");
        }
        let mut first = true;
        for (s, e) in &self.monomial {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if *e == 1 {
                write!(f, "[{s}]")?;
            } else {
                write!(f, "[{s}]^{e}")?;
            }
        }
        for a in &self.atoms {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl serde::Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.encode())
    }
}

impl<'de> serde::Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Term::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodings() {
        let t = Term::state("E1")
            .mul(&Term::power("A", 2))
            .mul(&Term::sin_diff("phi_1", "phi_2"));
        assert_eq!(t.encode(), "[A]^2*[E1]*sin(phi_1-phi_2)");
        assert_eq!(Term::parse(&t.encode()).unwrap(), t);
        assert_eq!(Term::constant().encode(), "1");
        assert_eq!(Term::parse("1").unwrap(), Term::constant());
        assert!(Term::parse("[A]^0").is_err());
        assert!(Term::parse("tan(x)").is_err());
        assert!(Term::parse("[A]x").is_err());
    }

    #[test]
    fn complexity_scores() {
        assert_eq!(Term::state("E1").complexity(), 1);
        assert_eq!(Term::state("AE1").complexity(), 1);
        assert_eq!(Term::constant().complexity(), 0);
        assert_eq!(Term::parse("[x]^2*[y]").unwrap().complexity(), 3);
        assert_eq!(
            Term::parse("[phi_3]*sin(phi_1-phi_2)")
                .unwrap()
                .complexity(),
            2
        );
    }

    #[test]
    fn gcd_and_quotient() {
        let a = Term::parse("[x]^2*[y]").unwrap();
        let b = Term::parse("[x]^2").unwrap();
        assert_eq!(a.gcd(&b), b);
        assert_eq!(b.quotient_of(&a).unwrap(), Term::state("y"));
        assert!(a.quotient_of(&b).is_none());
        assert!(Term::constant().divides(&a));
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let names = prop_oneof![Just("a"), Just("b"), Just("c")];
        let factor = prop_oneof![
            (names.clone(), 1u32..3).prop_map(|(n, e)| Term::power(n, e)),
            (names.clone(), names).prop_map(|(x, y)| Term::sin_diff(x, y)),
        ];
        proptest::collection::vec(factor, 0..4)
            .prop_map(|fs| fs.iter().fold(Term::constant(), |acc, f| acc.mul(f)))
    }

    proptest! {
        #[test]
        fn product_order_is_irrelevant(a in arb_term(), b in arb_term(), c in arb_term()) {
            prop_assert_eq!(a.mul(&b).mul(&c).encode(), c.mul(&a).mul(&b).encode());
            prop_assert_eq!(Term::parse(&a.encode()).unwrap(), a);
        }

        #[test]
        fn divisibility_is_transitive(a in arb_term(), b in arb_term(), c in arb_term()) {
            let ab = a.mul(&b);
            let abc = ab.mul(&c);
            prop_assert!(a.divides(&ab) && ab.divides(&abc) && a.divides(&abc));
            prop_assert_eq!(a.quotient_of(&abc).unwrap(), b.mul(&c));
        }
    }
}
