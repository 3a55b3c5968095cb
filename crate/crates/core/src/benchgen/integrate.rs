//! Dormand–Prince 5(4) with step-size control and continuous output.

use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("step limit {0} exceeded")]
    TooManySteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("output times must be sorted and not before the start time")]
    BadOutputTimes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution<T: Real> {
    /// One state vector per requested output time that was reached.
    pub samples: Vec<Vec<T>>,
    /// Set when the guard stopped the integration early.
    pub stopped_at: Option<T>,
    pub steps: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrates `y' = f(t, y)` from `t0` and samples the dense interpolant at `t_out`.
///
/// `guard` runs after every accepted step; returning true stops the integration
/// and keeps the samples produced so far.
pub fn integrate_dense<T, F, G>(
    mut rhs: F,
    t0: T,
    y0: &[T],
    t_out: &[T],
    opts: &IntegratorOptions,
    mut guard: G,
) -> Result<DenseSolution<T>, IntegrateError>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
    G: FnMut(T, &[T]) -> bool,
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|t| *t < t0) {
        return Err(IntegrateError::BadOutputTimes);
    }
    let n = y0.len();
    let rtol = T::lit(opts.rtol);
    let atol = T::lit(opts.atol);
    let lit = |x: f64| T::lit(x);
    let mut out = DenseSolution {
        samples: Vec::with_capacity(t_out.len()),
        stopped_at: None,
        steps: 0,
        rejected: 0,
    };
    let mut next = 0;
    while next < t_out.len() && t_out[next] == t0 {
        out.samples.push(y0.to_vec());
        next += 1;
    }
    let Some(&t_end) = t_out.last() else {
        return Ok(out);
    };
    if next == t_out.len() {
        return Ok(out);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    rhs(t, &y, &mut k[0]);
    let scale = |a: &[T], b: &[T], i: usize| atol + rtol * a[i].abs().max(b[i].abs());

    // initial step from the derivative magnitude
    let d0 = (0..n).fold(T::zero(), |s, i| s + (y[i] / scale(&y, &y, i)).powi(2));
    let d1 = (0..n).fold(T::zero(), |s, i| s + (k[0][i] / scale(&y, &y, i)).powi(2));
    let span = t_end - t0;
    let mut h = if d0 < lit(1e-10) || d1 < lit(1e-10) {
        lit(1e-6)
    } else {
        lit(0.01) * (d0 / d1).sqrt()
    };
    h = h.min(span).max(span * lit(1e-12));

    let mut ytmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    while next < t_out.len() {
        if out.steps + out.rejected >= opts.max_steps {
            return Err(IntegrateError::TooManySteps(opts.max_steps));
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= t.abs().max(T::one()) * T::eps() * lit(16.0) {
            return Err(IntegrateError::StepUnderflow(t.as_f64()));
        }
        for s in 1..7 {
            let (done, rest) = k.split_at_mut(s);
            for i in 0..n {
                let acc = done
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |a, (j, kj)| a + lit(A[s][j]) * kj[i]);
                ytmp[i] = y[i] + h * acc;
            }
            rhs(t + lit(C[s]) * h, &ytmp, &mut rest[0]);
        }
        ynew.copy_from_slice(&ytmp);
        let mut err = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for (s, ks) in k.iter().enumerate() {
                e += lit(E[s]) * ks[i];
            }
            err += (h * e / scale(&y, &ynew, i)).powi(2);
        }
        err = (err / lit(n.max(1) as f64)).sqrt();
        if !err.is_finite() {
            h *= lit(0.1);
            out.rejected += 1;
            continue;
        }
        if err <= T::one() {
            if ynew.iter().any(|v| !v.is_finite()) {
                return Err(IntegrateError::NonFinite(t.as_f64()));
            }
            let t_new = t + h;
            // continuous extension coefficients
            let mut r: Vec<[T; 5]> = Vec::with_capacity(n);
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h * k[0][i] - dy;
                let mut dd = T::zero();
                for (s, ks) in k.iter().enumerate() {
                    dd += lit(D[s]) * ks[i];
                }
                r.push([y[i], dy, bspl, dy - h * k[6][i] - bspl, h * dd]);
            }
            while next < t_out.len() && t_out[next] <= t_new {
                let th = (t_out[next] - t) / h;
                let th1 = T::one() - th;
                let s = r
                    .iter()
                    .map(|c| c[0] + th * (c[1] + th1 * (c[2] + th * (c[3] + th1 * c[4]))))
                    .collect();
                out.samples.push(s);
                next += 1;
            }
            t = t_new;
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            out.steps += 1;
            if guard(t, &y) {
                out.stopped_at = Some(t);
                return Ok(out);
            }
            h *= (lit(0.9) * err.max(lit(1e-10)).powf(lit(-0.2)))
                .min(lit(5.0))
                .max(lit(0.2));
        } else {
            out.rejected += 1;
            h *= (lit(0.9) * err.powf(lit(-0.2))).max(lit(0.2));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_guard<T>(_: T, _: &[T]) -> bool {
        false
    }

    #[test]
    fn exponential_decay() {
        let ts: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let sol = integrate_dense(
            |_, y, d| d[0] = -y[0],
            0.0,
            &[1.0],
            &ts,
            &IntegratorOptions::default(),
            no_guard,
        )
        .unwrap();
        for (t, s) in ts.iter().zip(&sol.samples) {
            assert!((s[0] - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let ts: Vec<f64> = (0..=997).map(|i| i as f64 * 0.0123).collect();
        let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let sol = integrate_dense(
            rhs,
            0.0,
            &[0.0, 1.0],
            &ts,
            &IntegratorOptions::default(),
            no_guard,
        )
        .unwrap();
        for (t, s) in ts.iter().zip(&sol.samples) {
            assert!((s[0] - t.sin()).abs() < 1e-7, "t={t}");
            assert!((s[1] - t.cos()).abs() < 1e-7);
        }
        assert!(sol.samples.len() == ts.len());
    }

    #[test]
    fn tolerance_convergence() {
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 * 0.2).collect();
        let rhs = |t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -0.1 * y[1] - y[0].sin() + 0.3 * t.cos();
        };
        let run = |tol: f64| {
            let o = IntegratorOptions {
                rtol: tol,
                atol: tol,
                ..Default::default()
            };
            integrate_dense(rhs, 0.0, &[1.0, 0.0], &ts, &o, no_guard).unwrap()
        };
        let coarse = run(1e-8);
        let fine = run(5e-9);
        let worst = coarse
            .samples
            .iter()
            .zip(&fine.samples)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn guard_truncates() {
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let sol = integrate_dense(
            |_, y, d| d[0] = y[0],
            0.0,
            &[1.0],
            &ts,
            &IntegratorOptions::default(),
            |_, y| y[0] > 100.0,
        )
        .unwrap();
        assert!(sol.stopped_at.is_some());
        assert!(sol.samples.len() < ts.len());
    }

    #[test]
    fn single_precision() {
        let ts: Vec<f32> = (0..=10).map(|i| i as f32 * 0.1).collect();
        let o = IntegratorOptions {
            rtol: 1e-5,
            atol: 1e-6,
            ..Default::default()
        };
        let sol = integrate_dense(
            |_, y: &[f32], d: &mut [f32]| d[0] = -y[0],
            0.0f32,
            &[1.0f32],
            &ts,
            &o,
            |_, _| false,
        )
        .unwrap();
        assert!((sol.samples[10][0] - (-1.0f32).exp()).abs() < 1e-4);
    }
}
