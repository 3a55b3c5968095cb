//! Damped single and double pendulums observed in Cartesian coordinates.

use super::integrate::{integrate_dense, IntegratorOptions};
use super::{BenchError, Result};
use crate::dynfinder::{DiscoveredModel, RoleRationale, VariableRoles};
use crate::termlib::{AlgebraicRelation, Term};
use crate::timeseries::{inject_noise, TimeSeriesTable};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendulumVariant {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumSpec {
    pub variant: PendulumVariant,
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub damping: f64,
    pub gravity: f64,
    pub initial_angles: Vec<f64>,
    pub initial_velocities: Vec<f64>,
}

impl PendulumSpec {
    pub fn single_default() -> Self {
        Self {
            variant: PendulumVariant::Single,
            lengths: vec![1.0],
            masses: vec![1.0],
            damping: 0.1,
            gravity: 9.81,
            initial_angles: vec![1.2],
            initial_velocities: vec![0.0],
        }
    }

    pub fn double_default() -> Self {
        Self {
            variant: PendulumVariant::Double,
            lengths: vec![1.0, 0.8],
            masses: vec![1.0, 1.0],
            damping: 0.0,
            gravity: 9.81,
            initial_angles: vec![2.0, -1.0],
            initial_velocities: vec![0.0, 0.0],
        }
    }

    fn links(&self) -> usize {
        match self.variant {
            PendulumVariant::Single => 1,
            PendulumVariant::Double => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.links();
        let ok = self.lengths.len() == k
            && self.masses.len() == k
            && self.initial_angles.len() == k
            && self.initial_velocities.len() == k
            && self
                .lengths
                .iter()
                .chain(&self.masses)
                .all(|v| v.is_finite() && *v > 0.0)
            && self.gravity.is_finite()
            && self.gravity > 0.0
            && self.damping.is_finite()
            && self.damping >= 0.0
            && self
                .initial_angles
                .iter()
                .chain(&self.initial_velocities)
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(BenchError::Invalid(format!(
                "pendulum spec needs {k} positive lengths and masses, g > 0, damping ≥ 0"
            )))
        }
    }

    /// Angular accelerations from `M(θ) θ'' = F(θ, θ')`.
    pub fn accelerations(&self, angles: &[f64], rates: &[f64]) -> Vec<f64> {
        let (g, a) = (self.gravity, self.damping);
        match self.variant {
            PendulumVariant::Single => {
                let (l, m) = (self.lengths[0], self.masses[0]);
                vec![-a / (m * l * l) * rates[0] - g / l * angles[0].sin()]
            }
            PendulumVariant::Double => {
                let (l1, l2) = (self.lengths[0], self.lengths[1]);
                let (m1, m2) = (self.masses[0], self.masses[1]);
                let (t1, t2, w1, w2) = (angles[0], angles[1], rates[0], rates[1]);
                let d = t1 - t2;
                let m11 = (m1 + m2) * l1 * l1;
                let m12 = m2 * l1 * l2 * d.cos();
                let m22 = m2 * l2 * l2;
                let f1 = -m2 * l1 * l2 * w2 * w2 * d.sin() - (m1 + m2) * g * l1 * t1.sin() - a * w1;
                let f2 = m2 * l1 * l2 * w1 * w1 * d.sin() - m2 * g * l2 * t2.sin() - a * w2;
                let det = m11 * m22 - m12 * m12;
                vec![(m22 * f1 - m12 * f2) / det, (m11 * f2 - m12 * f1) / det]
            }
        }
    }

    /// Kinetic plus potential energy (pivot at the origin, y pointing up).
    pub fn energy(&self, angles: &[f64], rates: &[f64]) -> f64 {
        let g = self.gravity;
        match self.variant {
            PendulumVariant::Single => {
                let (l, m) = (self.lengths[0], self.masses[0]);
                0.5 * m * l * l * rates[0] * rates[0] - m * g * l * angles[0].cos()
            }
            PendulumVariant::Double => {
                let (l1, l2) = (self.lengths[0], self.lengths[1]);
                let (m1, m2) = (self.masses[0], self.masses[1]);
                let (t1, t2, w1, w2) = (angles[0], angles[1], rates[0], rates[1]);
                0.5 * (m1 + m2) * l1 * l1 * w1 * w1
                    + 0.5 * m2 * l2 * l2 * w2 * w2
                    + m2 * l1 * l2 * w1 * w2 * (t1 - t2).cos()
                    - (m1 + m2) * g * l1 * t1.cos()
                    - m2 * g * l2 * t2.cos()
            }
        }
    }
}

fn sample_times(horizon: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 || !(horizon.is_finite() && horizon > 0.0) {
        return Err(BenchError::Invalid(
            "need a positive horizon and at least 2 samples".into(),
        ));
    }
    Ok((0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect())
}

/// Angles and angular velocities: `theta`, `dtheta` or `theta1`, `theta2`, `dtheta1`, `dtheta2`.
pub fn simulate_pendulum_angles(
    spec: &PendulumSpec,
    horizon: f64,
    samples: usize,
) -> Result<TimeSeriesTable<f64>> {
    spec.validate()?;
    let ts = sample_times(horizon, samples)?;
    let k = spec.links();
    let mut y0 = spec.initial_angles.clone();
    y0.extend_from_slice(&spec.initial_velocities);
    let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
        d[..k].copy_from_slice(&y[k..]);
        d[k..].copy_from_slice(&spec.accelerations(&y[..k], &y[k..]));
    };
    let opts = IntegratorOptions {
        rtol: 1e-11,
        atol: 1e-11,
        ..Default::default()
    };
    let sol = integrate_dense(rhs, 0.0, &y0, &ts, &opts, |_, _| false)?;
    let names: Vec<String> = match spec.variant {
        PendulumVariant::Single => vec!["theta".into(), "dtheta".into()],
        PendulumVariant::Double => vec![
            "theta1".into(),
            "theta2".into(),
            "dtheta1".into(),
            "dtheta2".into(),
        ],
    };
    let values = DMatrix::from_fn(ts.len(), 2 * k, |r, c| sol.samples[r][c]);
    Ok(TimeSeriesTable::new(
        ts.clone(),
        names,
        values,
        vec![0; ts.len()],
    )?)
}

/// Cartesian bob positions with optional relative noise.
pub fn simulate_pendulum(
    spec: &PendulumSpec,
    horizon: f64,
    samples: usize,
    noise: f64,
    seed: u64,
) -> Result<TimeSeriesTable<f64>> {
    let angles = simulate_pendulum_angles(spec, horizon, samples)?;
    let v = angles.values();
    let (names, values) = match spec.variant {
        PendulumVariant::Single => {
            let l = spec.lengths[0];
            let m = DMatrix::from_fn(v.nrows(), 2, |r, c| {
                if c == 0 {
                    l * v[(r, 0)].sin()
                } else {
                    -l * v[(r, 0)].cos()
                }
            });
            (vec!["x".to_string(), "y".to_string()], m)
        }
        PendulumVariant::Double => {
            let (l1, l2) = (spec.lengths[0], spec.lengths[1]);
            let m = DMatrix::from_fn(v.nrows(), 4, |r, c| {
                let (t1, t2) = (v[(r, 0)], v[(r, 1)]);
                match c {
                    0 => l1 * t1.sin(),
                    1 => -l1 * t1.cos(),
                    2 => l1 * t1.sin() + l2 * t2.sin(),
                    _ => -l1 * t1.cos() - l2 * t2.cos(),
                }
            });
            (vec!["x1".into(), "y1".into(), "x2".into(), "y2".into()], m)
        }
    };
    let table = TimeSeriesTable::new(
        angles.times().to_vec(),
        names,
        values,
        angles.segment_ids().to_vec(),
    )?;
    Ok(inject_noise(&table, noise, seed)?)
}

fn relation(pairs: &[(&str, f64)], iteration: usize) -> AlgebraicRelation<f64> {
    let coefs: BTreeMap<Term, f64> = pairs
        .iter()
        .map(|(e, c)| (Term::parse(e).expect("valid term"), *c))
        .collect();
    let pivot = Term::parse(pairs[0].0).expect("valid term");
    let mut r = AlgebraicRelation::new(coefs, pivot.clone(), 1.0, iteration).expect("relation");
    r.eliminated = Some(pivot);
    r
}

/// Rigid-link constraints in Cartesian coordinates; dynamics are not modelled there.
pub fn pendulum_truth(spec: &PendulumSpec) -> Result<DiscoveredModel<f64>> {
    spec.validate()?;
    let (states, algebraic, claims): (Vec<&str>, Vec<AlgebraicRelation<f64>>, Vec<&str>) =
        match spec.variant {
            PendulumVariant::Single => {
                let l = spec.lengths[0];
                (
                    vec!["x", "y"],
                    vec![relation(
                        &[("[y]^2", 1.0), ("[x]^2", 1.0), ("1", -l * l)],
                        1,
                    )],
                    vec!["y"],
                )
            }
            PendulumVariant::Double => {
                let (l1, l2) = (spec.lengths[0], spec.lengths[1]);
                let link1 = relation(&[("[y1]^2", 1.0), ("[x1]^2", 1.0), ("1", -l1 * l1)], 1);
                let link2 = relation(
                    &[
                        ("[y2]^2", 1.0),
                        ("[x1]^2", 1.0),
                        ("[x1]*[x2]", -2.0),
                        ("[x2]^2", 1.0),
                        ("[y1]^2", 1.0),
                        ("[y1]*[y2]", -2.0),
                        ("1", -l2 * l2),
                    ],
                    2,
                );
                (
                    vec!["x1", "y1", "x2", "y2"],
                    vec![link1, link2],
                    vec!["y1", "y2"],
                )
            }
        };
    let states: Vec<String> = states.iter().map(|s| s.to_string()).collect();
    let algebraic_states: Vec<String> = claims.iter().map(|s| s.to_string()).collect();
    let differential: Vec<String> = states
        .iter()
        .filter(|s| !algebraic_states.contains(s))
        .cloned()
        .collect();
    let mut rationale = BTreeMap::new();
    for s in &differential {
        rationale.insert(s.clone(), RoleRationale::UserPreference);
    }
    for s in &algebraic_states {
        rationale.insert(s.clone(), RoleRationale::PivotElimination);
    }
    let n_rel = algebraic.len();
    Ok(DiscoveredModel {
        states,
        roles: VariableRoles {
            differential,
            algebraic: algebraic_states.clone(),
            rationale,
            claims: algebraic_states,
        },
        algebraic,
        odes: BTreeMap::new(),
        residuals: vec![None; n_rel],
        undiscovered: BTreeMap::new(),
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_constraint_holds() {
        let t = simulate_pendulum(&PendulumSpec::single_default(), 20.0, 1000, 0.0, 0).unwrap();
        let (x, y) = (t.column("x").unwrap(), t.column("y").unwrap());
        for (a, b) in x.iter().zip(&y) {
            assert!((a * a + b * b - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn undamped_energy_conserved() {
        let spec = PendulumSpec {
            damping: 0.0,
            ..PendulumSpec::single_default()
        };
        let t = simulate_pendulum_angles(&spec, 20.0, 500).unwrap();
        let e0 = spec.energy(&[t.values()[(0, 0)]], &[t.values()[(0, 1)]]);
        for r in 0..t.n_rows() {
            let e = spec.energy(&[t.values()[(r, 0)]], &[t.values()[(r, 1)]]);
            assert!((e - e0).abs() <= 1e-6 * e0.abs());
        }
        let d = PendulumSpec::double_default();
        let t = simulate_pendulum_angles(&d, 20.0, 500).unwrap();
        let en = |r: usize| {
            let v = t.values();
            d.energy(&[v[(r, 0)], v[(r, 1)]], &[v[(r, 2)], v[(r, 3)]])
        };
        let e0 = en(0);
        for r in 0..t.n_rows() {
            assert!((en(r) - e0).abs() <= 1e-6 * e0.abs());
        }
    }

    #[test]
    fn double_constraints_hold() {
        let spec = PendulumSpec::double_default();
        let t = simulate_pendulum(&spec, 60.0, 3000, 0.0, 0).unwrap();
        let c = |n: &str| t.column(n).unwrap();
        let (x1, y1, x2, y2) = (c("x1"), c("y1"), c("x2"), c("y2"));
        for i in 0..t.n_rows() {
            assert!(((x1[i] - x2[i]).powi(2) + (y1[i] - y2[i]).powi(2) - 0.64).abs() <= 1e-9);
            assert!((x1[i].powi(2) + y1[i].powi(2) - 1.0).abs() <= 1e-9);
        }
        let truth = pendulum_truth(&spec).unwrap();
        for r in &truth.algebraic {
            assert!(r.relative_residual(&t).unwrap() < 1e-12);
        }
    }

    #[test]
    fn small_angle_period() {
        let spec = PendulumSpec {
            damping: 0.0,
            initial_angles: vec![1e-3],
            ..PendulumSpec::single_default()
        };
        let period = 2.0 * std::f64::consts::PI / 9.81f64.sqrt();
        let t = simulate_pendulum_angles(&spec, period, 11).unwrap();
        let last = t.values()[(10, 0)];
        assert!((last - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn noise_and_validation() {
        let spec = PendulumSpec::single_default();
        let clean = simulate_pendulum(&spec, 10.0, 200, 0.0, 1).unwrap();
        let noisy = simulate_pendulum(&spec, 10.0, 200, 0.02, 1).unwrap();
        assert_ne!(clean, noisy);
        assert_eq!(noisy, simulate_pendulum(&spec, 10.0, 200, 0.02, 1).unwrap());
        let bad = PendulumSpec {
            lengths: vec![-1.0],
            ..spec
        };
        assert!(simulate_pendulum(&bad, 1.0, 10, 0.0, 0).is_err());
    }
}
