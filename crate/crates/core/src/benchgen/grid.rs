//! Swing-equation network with first-order loads and sine power flow.

use super::integrate::{integrate_dense, IntegratorOptions};
use super::{BenchError, Result};
use crate::dynfinder::{DiscoveredModel, OdeEquation, RoleRationale, VariableRoles};
use crate::termlib::{grid_phase, grid_power, grid_speed, AlgebraicRelation, Term};
use crate::timeseries::{column_normals, TimeSeriesTable};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    /// 1-based node indices.
    pub a: usize,
    pub b: usize,
    pub admittance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Phase,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub time: f64,
    /// 1-based.
    pub node: usize,
    pub kind: PerturbationKind,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nodes: usize,
    /// 1-based generator nodes; all others follow first-order dynamics.
    pub generators: Vec<usize>,
    /// Per node; only generator entries are used.
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub omega_r: f64,
    /// Injected power per node: mechanical for generators, load (≤ 0) otherwise.
    pub power: Vec<f64>,
    pub voltage: Vec<f64>,
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    /// Flip each phase kick against the current mean phase.
    #[serde(default)]
    pub counter_drift: bool,
    /// Speed magnitude treated as loss of synchrony.
    #[serde(default = "default_sync_limit")]
    pub sync_limit: f64,
}

fn default_sync_limit() -> f64 {
    20.0
}

impl GridSpec {
    /// Two generators, two terminals and two loads on a meshed 7-line network.
    pub fn six_node() -> Self {
        let c = |a, b, admittance| Coupling { a, b, admittance };
        Self {
            nodes: 6,
            generators: vec![1, 2],
            inertia: vec![1.0, 1.5, 0.0, 0.0, 0.0, 0.0],
            damping: vec![0.8, 1.0, 1.0, 1.2, 0.9, 1.1],
            omega_r: 1.0,
            power: vec![1.0, 0.8, 0.0, 0.0, -1.0, -0.8],
            voltage: vec![1.0; 6],
            couplings: vec![
                c(1, 3, 3.0),
                c(2, 4, 3.0),
                c(3, 4, 2.0),
                c(3, 5, 1.5),
                c(4, 6, 1.5),
                c(5, 6, 1.2),
                c(3, 6, 1.0),
            ],
            perturbations: Vec::new(),
            counter_drift: true,
            sync_limit: default_sync_limit(),
        }
    }

    pub fn is_generator(&self, node: usize) -> bool {
        self.generators.contains(&node)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes;
        let bad = |m: String| Err(BenchError::Invalid(m));
        if n < 2 {
            return bad("grid needs at least two nodes".into());
        }
        for (name, v) in [
            ("inertia", &self.inertia),
            ("damping", &self.damping),
            ("power", &self.power),
            ("voltage", &self.voltage),
        ] {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} must hold {n} finite values"));
            }
        }
        if self.generators.iter().any(|g| *g == 0 || *g > n) {
            return bad("generator index out of range".into());
        }
        for g in &self.generators {
            if self.inertia[g - 1] <= 0.0 {
                return bad(format!("generator {g} needs positive inertia"));
            }
        }
        if self.damping.iter().any(|d| *d <= 0.0) || self.voltage.iter().any(|v| *v <= 0.0) {
            return bad("damping and voltages must be positive".into());
        }
        if !(self.omega_r > 0.0) {
            return bad("reference frequency must be positive".into());
        }
        for c in &self.couplings {
            if c.a == 0 || c.b == 0 || c.a > n || c.b > n || c.a == c.b || !(c.admittance > 0.0) {
                return bad(format!("invalid coupling {c:?}"));
            }
        }
        let total: f64 = self.power.iter().sum();
        if total.abs() > 1e-9 {
            return bad(format!("injected powers must balance, sum is {total}"));
        }
        for p in &self.perturbations {
            if p.node == 0 || p.node > n || !p.time.is_finite() || !p.delta.is_finite() {
                return bad(format!("invalid perturbation {p:?}"));
            }
        }
        Ok(())
    }

    /// Symmetric coupling strengths `|Y_ij| V_i V_j`, zero diagonal.
    pub fn coupling_matrix(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.nodes, self.nodes);
        for c in &self.couplings {
            let (i, j) = (c.a - 1, c.b - 1);
            let w = c.admittance * self.voltage[i] * self.voltage[j];
            k[(i, j)] += w;
            k[(j, i)] += w;
        }
        k
    }
}

/// `P_e,i = Σ_j K_ij sin(φ_i − φ_j)`.
pub fn electrical_power(k: &DMatrix<f64>, phi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    (0..n)
        .map(|i| (0..n).map(|j| k[(i, j)] * (phi[i] - phi[j]).sin()).sum())
        .collect()
}

/// Phases with `P_e = P` and node 1 as reference, by Newton iteration.
pub fn steady_state(spec: &GridSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.coupling_matrix();
    let n = spec.nodes;
    let mut phi = vec![0.0; n];
    for _ in 0..100 {
        let pe = electrical_power(&k, &phi);
        let f = DVector::from_fn(n - 1, |r, _| spec.power[r + 1] - pe[r + 1]);
        if f.amax() < 1e-13 {
            return Ok(phi);
        }
        let jac = DMatrix::from_fn(n - 1, n - 1, |r, c| {
            let (i, j) = (r + 1, c + 1);
            if i == j {
                (0..n)
                    .filter(|&m| m != i)
                    .map(|m| k[(i, m)] * (phi[i] - phi[m]).cos())
                    .sum::<f64>()
            } else {
                -k[(i, j)] * (phi[i] - phi[j]).cos()
            }
        });
        let step = jac.lu().solve(&f).ok_or(BenchError::NoSteadyState)?;
        for r in 0..n - 1 {
            phi[r + 1] += step[r];
        }
    }
    Err(BenchError::NoSteadyState)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub table: TimeSeriesTable<f64>,
    pub synchrony_lost_at: Option<f64>,
}

struct Layout {
    /// Position of each generator's speed in the state vector.
    speed: Vec<Option<usize>>,
}

impl Layout {
    fn new(spec: &GridSpec) -> Self {
        let n = spec.nodes;
        let mut next = n;
        let speed = (1..=n)
            .map(|i| {
                spec.is_generator(i).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self { speed }
    }
}

fn speeds(
    spec: &GridSpec,
    k: &DMatrix<f64>,
    power: &[f64],
    layout: &Layout,
    y: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = spec.nodes;
    let pe = electrical_power(k, &y[..n]);
    let w = (0..n)
        .map(|i| match layout.speed[i] {
            Some(p) => y[p],
            None => (power[i] - pe[i]) / spec.damping[i],
        })
        .collect();
    (w, pe)
}

/// Integrates from the steady state, applying the perturbation schedule.
///
/// Each perturbation starts a new segment. Samples lie on `[0, horizon)` with step `horizon / samples`.
pub fn simulate_grid(
    spec: &GridSpec,
    horizon: f64,
    samples: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<GridRun> {
    spec.validate()?;
    if samples < 2 || !(horizon > 0.0) {
        return Err(BenchError::Invalid(
            "need a positive horizon and at least 2 samples".into(),
        ));
    }
    let n = spec.nodes;
    let k = spec.coupling_matrix();
    let layout = Layout::new(spec);
    let dim = n + spec.generators.len();
    let mut y = steady_state(spec)?;
    y.resize(dim, 0.0);
    let mut power = spec.power.clone();
    let dt = horizon / samples as f64;
    let ts: Vec<f64> = (0..samples).map(|i| i as f64 * dt).collect();
    let mut kicks = spec.perturbations.clone();
    kicks.sort_by(|a, b| a.time.total_cmp(&b.time));
    let tol = 1e-9 * dt;

    let mut times = Vec::new();
    let mut segs = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut t = 0.0;
    let mut next_kick = 0;
    let mut segment = 0i64;
    let mut lost = None;
    loop {
        while next_kick < kicks.len() && kicks[next_kick].time <= t + tol {
            let p = &kicks[next_kick];
            match p.kind {
                PerturbationKind::Phase => {
                    let mean = y[..n].iter().sum::<f64>() / n as f64;
                    let sign = if spec.counter_drift && mean > 0.0 {
                        -1.0
                    } else {
                        1.0
                    };
                    y[p.node - 1] += sign * p.delta;
                }
                PerturbationKind::Power => power[p.node - 1] += p.delta,
            }
            next_kick += 1;
        }
        let stop = kicks
            .get(next_kick)
            .map_or(horizon, |p| p.time.min(horizon));
        let seg_times: Vec<f64> = ts
            .iter()
            .copied()
            .filter(|s| *s >= t - tol && *s < stop - tol)
            .collect();
        let mut t_out = seg_times.clone();
        if t_out.last().is_none_or(|l| *l < stop) {
            t_out.push(stop);
        }
        let rhs = |_: f64, s: &[f64], d: &mut [f64]| {
            let (w, pe) = speeds(spec, &k, &power, &layout, s);
            d[..n].copy_from_slice(&w);
            for i in 0..n {
                if let Some(p) = layout.speed[i] {
                    d[p] = spec.omega_r / (2.0 * spec.inertia[i])
                        * (power[i] - spec.damping[i] * s[p] - pe[i]);
                }
            }
        };
        let limit = spec.sync_limit;
        let guard = |_: f64, s: &[f64]| {
            speeds(spec, &k, &power, &layout, s)
                .0
                .iter()
                .any(|w| w.abs() > limit)
        };
        let sol = integrate_dense(
            rhs,
            t_out[0].min(t),
            &y,
            &t_out,
            &IntegratorOptions::default(),
            guard,
        )?;
        for (st, state) in seg_times.iter().zip(&sol.samples) {
            let (w, pe) = speeds(spec, &k, &power, &layout, state);
            let mut row = pe;
            row.extend_from_slice(&state[..n]);
            row.extend(w);
            rows.push(row);
            times.push(*st);
            segs.push(segment);
        }
        if !seg_times.is_empty() {
            segment += 1;
        }
        if let Some(at) = sol.stopped_at {
            lost = Some(at);
            break;
        }
        if stop >= horizon {
            break;
        }
        y = sol.samples.last().expect("segment end sampled").clone();
        t = stop;
    }

    let mut names: Vec<String> = (1..=n).map(grid_power).collect();
    names.extend((1..=n).map(grid_phase));
    names.extend((1..=n).map(grid_speed));
    let mut values = DMatrix::from_fn(rows.len(), names.len(), |r, c| rows[r][c]);
    if let Some(snr) = snr_db {
        add_snr_noise(&mut values, &names, snr, seed);
    }
    let table = TimeSeriesTable::new(times, names, values, segs)?;
    Ok(GridRun {
        table,
        synchrony_lost_at: lost,
    })
}

/// Gaussian noise with per-column variance `var(column) / 10^(snr/10)`.
pub fn add_snr_noise(values: &mut DMatrix<f64>, names: &[String], snr_db: f64, seed: u64) {
    let ratio = 10f64.powf(snr_db / 10.0);
    for (c, name) in names.iter().enumerate() {
        let col = values.column(c);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let sigma = (var / ratio).sqrt();
        let z: Vec<f64> = column_normals(seed, name, values.nrows());
        for (r, zr) in z.into_iter().enumerate() {
            values[(r, c)] += sigma * zr;
        }
    }
}

/// `count` phase kicks on random nodes every `interval`, sized `uniform(0.5, 1) · magnitude`.
pub fn kick_schedule(
    nodes: usize,
    count: usize,
    magnitude: f64,
    interval: f64,
    seed: u64,
) -> Vec<Perturbation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Perturbation {
            time: i as f64 * interval,
            node: rng.random_range(1..=nodes),
            kind: PerturbationKind::Phase,
            delta: rng.random_range(0.5..1.0) * magnitude,
        })
        .collect()
}

fn unit_relation(pairs: Vec<(Term, f64)>, iteration: usize) -> AlgebraicRelation<f64> {
    let pivot = pairs[0].0.clone();
    let mut r = AlgebraicRelation::new(pairs.into_iter().collect(), pivot.clone(), 1.0, iteration)
        .expect("relation");
    r.eliminated = Some(pivot);
    r
}

/// Power balance per node and the swing / first-order dynamics per phase.
pub fn grid_truth(spec: &GridSpec) -> Result<DiscoveredModel<f64>> {
    spec.validate()?;
    let n = spec.nodes;
    let k = spec.coupling_matrix();
    let mut algebraic = Vec::new();
    let mut odes = BTreeMap::new();
    for i in 1..=n {
        let mut pairs = vec![(Term::state(&grid_power(i)), 1.0)];
        for j in (1..=n).filter(|&j| j != i && k[(i - 1, j - 1)] != 0.0) {
            pairs.push((
                Term::sin_diff(&grid_phase(i), &grid_phase(j)),
                -k[(i - 1, j - 1)],
            ));
        }
        if pairs.len() > 1 {
            algebraic.push(unit_relation(pairs, i));
        }
        let (p, d) = (spec.power[i - 1], spec.damping[i - 1]);
        let mut coefs = BTreeMap::new();
        let order = if spec.is_generator(i) {
            let g = spec.omega_r / (2.0 * spec.inertia[i - 1]);
            coefs.insert(Term::state(&grid_speed(i)), -g * d);
            coefs.insert(Term::state(&grid_power(i)), -g);
            if p != 0.0 {
                coefs.insert(Term::constant(), g * p);
            }
            2
        } else {
            coefs.insert(Term::state(&grid_power(i)), -1.0 / d);
            if p != 0.0 {
                coefs.insert(Term::constant(), p / d);
            }
            1
        };
        odes.insert(
            grid_phase(i),
            OdeEquation {
                order,
                coefficients: coefs,
                score: Some(1.0),
                rank_deficient: false,
            },
        );
    }
    let differential: Vec<String> = (1..=n).map(grid_phase).collect();
    let algebraic_states: Vec<String> = (1..=n).map(grid_power).collect();
    let claims = algebraic
        .iter()
        .map(|r: &AlgebraicRelation<f64>| {
            r.pivot
                .pure_power()
                .map(|(s, _)| s.to_string())
                .unwrap_or_default()
        })
        .collect();
    let mut rationale = BTreeMap::new();
    for s in &differential {
        rationale.insert(s.clone(), RoleRationale::UserPreference);
    }
    for s in &algebraic_states {
        rationale.insert(s.clone(), RoleRationale::PivotElimination);
    }
    let mut states = algebraic_states.clone();
    states.extend(differential.iter().cloned());
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
