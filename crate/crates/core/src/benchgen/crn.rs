//! Enzyme-mediated reaction networks under the quasi-steady-state reduction.

use super::integrate::{integrate_dense, IntegratorOptions};
use super::{BenchError, Result};
use crate::dynfinder::{DiscoveredModel, OdeEquation, RoleRationale, VariableRoles};
use crate::termlib::{AlgebraicRelation, Term};
use crate::timeseries::TimeSeriesTable;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    /// `A + E1 ⇌ AE1 → B + E1`
    Crn1,
    /// `A → B → C`, each step catalysed by its own enzyme.
    Crn2,
}

impl Network {
    fn n_rates(self) -> usize {
        match self {
            Network::Crn1 => 3,
            Network::Crn2 => 6,
        }
    }

    fn n_enzymes(self) -> usize {
        match self {
            Network::Crn1 => 1,
            Network::Crn2 => 2,
        }
    }

    fn substrates(self) -> &'static [&'static str] {
        match self {
            Network::Crn1 => &["A", "B"],
            Network::Crn2 => &["A", "B", "C"],
        }
    }

    pub fn columns(self) -> Vec<String> {
        let extra: &[&str] = match self {
            Network::Crn1 => &["E1", "AE1"],
            Network::Crn2 => &["E1", "AE1", "E2", "BE2"],
        };
        self.substrates()
            .iter()
            .chain(extra)
            .map(|s| s.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrnSpec {
    pub network: Network,
    /// Binding, unbinding and catalytic rate per enzyme: `[k1, k2, k3]` or `[k1, …, k6]`.
    pub rates: Vec<f64>,
    pub enzyme_totals: Vec<f64>,
    /// Substrate concentrations at t = 0, one row per segment.
    pub initial: Vec<Vec<f64>>,
}

impl CrnSpec {
    pub fn crn1_default() -> Self {
        Self {
            network: Network::Crn1,
            rates: vec![1.0, 0.5, 0.8],
            enzyme_totals: vec![1.5],
            initial: [2.0, 4.0, 6.0, 8.0, 10.0]
                .iter()
                .map(|a| vec![*a, 0.0])
                .collect(),
        }
    }

    pub fn crn2_default() -> Self {
        Self {
            network: Network::Crn2,
            rates: vec![1.0, 0.5, 0.8, 1.2, 0.4, 0.6],
            enzyme_totals: vec![1.5, 1.0],
            initial: [2.0, 4.0, 6.0, 8.0, 10.0]
                .iter()
                .map(|a| vec![*a, 0.0, 0.0])
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Invalid(m));
        let net = self.network;
        if self.rates.len() != net.n_rates() {
            return bad(format!(
                "expected {} rates, got {}",
                net.n_rates(),
                self.rates.len()
            ));
        }
        if self.rates.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return bad("rates must be positive".into());
        }
        if self.enzyme_totals.len() != net.n_enzymes() {
            return bad(format!("expected {} enzyme totals", net.n_enzymes()));
        }
        if self
            .enzyme_totals
            .iter()
            .any(|e| !(e.is_finite() && *e > 0.0))
        {
            return bad("enzyme totals must be positive".into());
        }
        if self.initial.is_empty() {
            return bad("at least one initial condition is needed".into());
        }
        for row in &self.initial {
            if row.len() != net.substrates().len()
                || row.iter().any(|c| !(c.is_finite() && *c >= 0.0))
            {
                return bad(format!(
                    "initial condition {row:?} must hold {} nonnegative values",
                    net.substrates().len()
                ));
            }
        }
        Ok(())
    }

    /// Quasi-steady complex `E_tot · S / (K_m + S)` for enzyme `e` (0-based).
    pub fn complex(&self, e: usize, substrate: f64) -> f64 {
        let k = &self.rates[3 * e..3 * e + 3];
        let km = (k[1] + k[2]) / k[0];
        self.enzyme_totals[e] * substrate / (km + substrate)
    }

    /// Reduced right-hand side over the substrates.
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        match self.network {
            Network::Crn1 => {
                let flux = self.rates[2] * self.complex(0, y[0]);
                dy[0] = -flux;
                dy[1] = flux;
            }
            Network::Crn2 => {
                let f1 = self.rates[2] * self.complex(0, y[0]);
                let f2 = self.rates[5] * self.complex(1, y[1]);
                dy[0] = -f1;
                dy[1] = f1 - f2;
                dy[2] = f2;
            }
        }
    }

    fn row(&self, y: &[f64]) -> Vec<f64> {
        let mut row = y.to_vec();
        for (e, sub) in (0..self.network.n_enzymes()).zip(y) {
            let c = self.complex(e, *sub);
            row.push(self.enzyme_totals[e] - c);
            row.push(c);
        }
        row
    }
}

/// Integrates each initial condition over `[0, horizon]` and back-substitutes enzymes and complexes.
pub fn simulate_crn(spec: &CrnSpec, horizon: f64, samples: usize) -> Result<TimeSeriesTable<f64>> {
    spec.validate()?;
    if samples < 10 {
        return Err(BenchError::Invalid(format!(
            "need at least 10 samples, got {samples}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(BenchError::Invalid("horizon must be positive".into()));
    }
    let ts: Vec<f64> = (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect();
    let names = spec.network.columns();
    let mut times = Vec::new();
    let mut segs = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (seg, y0) in spec.initial.iter().enumerate() {
        let sol = integrate_dense(
            |_, y, d| spec.rhs(y, d),
            0.0,
            y0,
            &ts,
            &IntegratorOptions::default(),
            |_, _| false,
        )?;
        for (t, y) in ts.iter().zip(&sol.samples) {
            times.push(*t);
            segs.push(seg as i64);
            rows.push(spec.row(y));
        }
    }
    let values = nalgebra::DMatrix::from_fn(rows.len(), names.len(), |r, c| rows[r][c]);
    Ok(TimeSeriesTable::new(times, names, values, segs)?)
}

fn relation(pairs: &[(Term, f64)], iteration: usize) -> AlgebraicRelation<f64> {
    let coefs: BTreeMap<Term, f64> = pairs.iter().cloned().collect();
    let pivot = pairs[0].0.clone();
    let mut r =
        AlgebraicRelation::new(coefs, pivot.clone(), 1.0, iteration).expect("non-trivial relation");
    r.eliminated = Some(pivot);
    r
}

fn ode(pairs: &[(Term, f64)]) -> OdeEquation<f64> {
    OdeEquation {
        order: 1,
        coefficients: pairs.iter().cloned().collect(),
        score: Some(1.0),
        rank_deficient: false,
    }
}

/// Generating system: conservation and quasi-steady relations per enzyme, mass-action ODEs per substrate.
pub fn crn_truth(spec: &CrnSpec) -> Result<DiscoveredModel<f64>> {
    spec.validate()?;
    let s = Term::state;
    let k = &spec.rates;
    let mut algebraic = Vec::new();
    let enzymes: &[(&str, &str, &str)] = match spec.network {
        Network::Crn1 => &[("A", "E1", "AE1")],
        Network::Crn2 => &[("A", "E1", "AE1"), ("B", "E2", "BE2")],
    };
    for (e, (sub, free, cplx)) in enzymes.iter().enumerate() {
        let kk = &k[3 * e..3 * e + 3];
        algebraic.push(relation(
            &[
                (s(free), 1.0),
                (s(cplx), 1.0),
                (Term::constant(), -spec.enzyme_totals[e]),
            ],
            2 * e + 1,
        ));
        algebraic.push(relation(
            &[(s(sub).mul(&s(free)), kk[0]), (s(cplx), -(kk[1] + kk[2]))],
            2 * e + 2,
        ));
    }
    let ae = s("AE1");
    let mut odes = BTreeMap::new();
    odes.insert(
        "A".to_string(),
        ode(&[(s("A").mul(&s("E1")), -k[0]), (ae.clone(), k[1])]),
    );
    match spec.network {
        Network::Crn1 => {
            odes.insert("B".to_string(), ode(&[(ae, k[2])]));
        }
        Network::Crn2 => {
            let be = s("BE2");
            odes.insert(
                "B".to_string(),
                ode(&[
                    (ae, k[2]),
                    (s("B").mul(&s("E2")), -k[3]),
                    (be.clone(), k[4]),
                ]),
            );
            odes.insert("C".to_string(), ode(&[(be, k[5])]));
        }
    }
    let states = spec.network.columns();
    let differential: Vec<String> = spec
        .network
        .substrates()
        .iter()
        .map(|x| x.to_string())
        .collect();
    let algebraic_states: Vec<String> = states
        .iter()
        .filter(|x| !differential.contains(x))
        .cloned()
        .collect();
    let claims = enzymes
        .iter()
        .flat_map(|(_, f, c)| [f.to_string(), c.to_string()])
        .collect();
    let mut rationale = BTreeMap::new();
    for d in &differential {
        rationale.insert(d.clone(), RoleRationale::UserPreference);
    }
    for a in &algebraic_states {
        rationale.insert(a.clone(), RoleRationale::PivotElimination);
    }
    let n_rel = algebraic.len();
    Ok(DiscoveredModel {
        states,
        roles: VariableRoles {
            differential,
            algebraic: algebraic_states,
            rationale,
            claims,
        },
        algebraic,
        odes,
        residuals: vec![None; n_rel],
        undiscovered: BTreeMap::new(),
        trace: Vec::new(),
    })
}
