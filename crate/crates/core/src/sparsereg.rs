//! Sparse linear regression: OLS, LASSO by coordinate descent, STLSQ and STOLS.

use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("non-finite entry in regression data")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no coefficient survived thresholding")]
    EmptySupport,
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("at least two observations are required")]
    TooFewSamples,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SparseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    LassoStlsq,
    Stlsq,
    Stols,
}

/// Solver choice and hyperparameters; thresholds act on normalized-column coefficients.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseFitConfig {
    pub solver: Solver,
    pub alpha: f64,
    pub threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SparseFitConfig {
    fn default() -> Self {
        Self {
            solver: Solver::LassoStlsq,
            alpha: 1e-3,
            threshold: 0.2,
            max_iter: 1000,
            tol: 1e-8,
        }
    }
}

impl SparseFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(SparseError::InvalidConfig(format!("alpha {}", self.alpha)));
        }
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(SparseError::InvalidConfig(format!(
                "threshold {}",
                self.threshold
            )));
        }
        if self.max_iter < 1 {
            return Err(SparseError::InvalidConfig(
                "max_iter must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(SparseError::InvalidConfig(format!("tol {}", self.tol)));
        }
        Ok(())
    }
}

/// Goodness-of-fit measure used to rank candidate relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFunction {
    #[default]
    R2,
    Aic,
    Bic,
}

impl ScoreFunction {
    /// Larger is better: R², or the negated information criterion.
    pub fn score<T: Real>(self, rss: T, tss: T, n_obs: usize, k: usize) -> T {
        match self {
            ScoreFunction::R2 => r2_from(rss, tss),
            ScoreFunction::Aic => -aic(rss, n_obs, k),
            ScoreFunction::Bic => -bic(rss, n_obs, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub coefficients: DVector<T>,
    pub support: Vec<usize>,
    pub r2: T,
    pub residual_norm: T,
    pub converged: bool,
}

fn r2_from<T: Real>(rss: T, tss: T) -> T {
    if tss > T::zero() {
        T::one() - rss / tss
    } else {
        T::neg_infinity()
    }
}

/// Coefficient of determination `1 − Σ(y−ŷ)²/Σ(y−ȳ)²`.
pub fn score_r2<T: Real>(y: &DVector<T>, yhat: &DVector<T>) -> Result<T> {
    if y.len() != yhat.len() {
        return Err(SparseError::Shape(format!(
            "{} targets, {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(SparseError::TooFewSamples);
    }
    let mean = y.mean();
    let tss = y
        .iter()
        .fold(T::zero(), |a, v| a + (*v - mean) * (*v - mean));
    if tss == T::zero() {
        return Err(SparseError::DegenerateTarget);
    }
    let rss = (y - yhat).norm_squared();
    Ok(T::one() - rss / tss)
}

/// `N·ln(RSS/N) + 2k`.
pub fn aic<T: Real>(rss: T, n_obs: usize, k: usize) -> T {
    let n = T::lit(n_obs as f64);
    n * (rss / n).max(T::tiny()).ln() + T::lit(2.0 * k as f64)
}

/// `N·ln(RSS/N) + k·ln N`.
pub fn bic<T: Real>(rss: T, n_obs: usize, k: usize) -> T {
    let n = T::lit(n_obs as f64);
    n * (rss / n).max(T::tiny()).ln() + T::lit(k as f64) * n.ln()
}

/// Least-squares problem `min ‖b − A p‖²` equivalent to the original `N`-row problem.
///
/// `a`/`b` are either the raw data or a triangular compression of it; `n_obs`,
/// `tss` and `rss_offset` keep the statistics of the original rows.
#[derive(Debug, Clone)]
pub(crate) struct Problem<T: Real> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub n_obs: usize,
    pub tss: T,
    pub rss_offset: T,
}

impl<T: Real> Problem<T> {
    pub fn rss(&self, p: &DVector<T>) -> T {
        (&self.b - &self.a * p).norm_squared() + self.rss_offset
    }

    pub fn n_cols(&self) -> usize {
        self.a.ncols()
    }

    fn columns(&self, cols: &[usize]) -> Problem<T> {
        Problem {
            a: self.a.select_columns(cols.iter()),
            b: self.b.clone(),
            n_obs: self.n_obs,
            tss: self.tss,
            rss_offset: self.rss_offset,
        }
    }
}

fn check_inputs<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(SparseError::Shape(format!(
            "{} rows, {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(SparseError::Shape("empty design".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(SparseError::NonFinite);
    }
    Ok(())
}

fn dense_problem<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Problem<T> {
    let mean = y.mean();
    let tss = y
        .iter()
        .fold(T::zero(), |a, v| a + (*v - mean) * (*v - mean));
    Problem {
        a: x.clone(),
        b: y.clone(),
        n_obs: y.len(),
        tss,
        rss_offset: T::zero(),
    }
}

/// Minimum-norm least squares through an SVD pseudo-inverse.
pub(crate) fn ols_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>, n_obs: usize) -> DVector<T> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |m, s| m.max(*s));
    let cutoff = T::eps() * T::lit(n_obs.max(a.ncols()) as f64) * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut p = DVector::zeros(a.ncols());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff && *s > T::zero() {
            let w = u.column(i).dot(b) / *s;
            p += v_t.row(i).transpose() * w;
        }
    }
    p
}

fn support_of<T: Real>(p: &DVector<T>) -> Vec<usize> {
    (0..p.len()).filter(|&j| p[j] != T::zero()).collect()
}

fn scatter<T: Real>(n: usize, cols: &[usize], vals: &DVector<T>) -> DVector<T> {
    let mut p = DVector::zeros(n);
    for (k, &j) in cols.iter().enumerate() {
        p[j] = vals[k];
    }
    p
}

fn ols_on<T: Real>(prob: &Problem<T>, cols: &[usize]) -> DVector<T> {
    if cols.len() == prob.n_cols() {
        return ols_solve(&prob.a, &prob.b, prob.n_obs);
    }
    let sub = prob.columns(cols);
    scatter(prob.n_cols(), cols, &ols_solve(&sub.a, &sub.b, prob.n_obs))
}

fn soft<T: Real>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

/// Largest KKT violation of the LASSO optimality conditions at `p`.
fn kkt_violation<T: Real>(prob: &Problem<T>, p: &DVector<T>, alpha: T) -> T {
    let n = T::lit(prob.n_obs as f64);
    let r = &prob.b - &prob.a * p;
    let grad = prob.a.tr_mul(&r) / n;
    let mut worst = T::zero();
    for j in 0..p.len() {
        let v = if p[j] != T::zero() {
            (grad[j] - alpha * p[j].signum()).abs()
        } else {
            (grad[j].abs() - alpha).max(T::zero())
        };
        worst = worst.max(v);
    }
    worst
}

/// KKT residual of a LASSO solution on the original data.
pub fn kkt_residual<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    coefficients: &DVector<T>,
    alpha: T,
) -> T {
    kkt_violation(&dense_problem(x, y), coefficients, alpha)
}

pub(crate) struct LassoOutcome<T: Real> {
    pub p: DVector<T>,
    pub converged: bool,
    #[cfg_attr(not(test), allow(dead_code))]
    pub objectives: Vec<T>,
}

pub(crate) fn lasso_cd<T: Real>(
    prob: &Problem<T>,
    alpha: T,
    max_iter: usize,
    tol: T,
    trace: bool,
) -> LassoOutcome<T> {
    let k = prob.n_cols();
    let n = T::lit(prob.n_obs as f64);
    let norms: Vec<T> = (0..k)
        .map(|j| prob.a.column(j).norm_squared() / n)
        .collect();
    let mut p = DVector::zeros(k);
    let mut r = prob.b.clone();
    let mut objectives = Vec::new();
    let objective = |r: &DVector<T>, p: &DVector<T>| {
        (r.norm_squared() + prob.rss_offset) / (n + n)
            + alpha * p.iter().fold(T::zero(), |a, v| a + v.abs())
    };
    if trace {
        objectives.push(objective(&r, &p));
    }
    let mut converged = false;
    for _ in 0..max_iter {
        for j in 0..k {
            if norms[j] == T::zero() {
                continue;
            }
            let old = p[j];
            let rho = prob.a.column(j).dot(&r) / n + norms[j] * old;
            let new = soft(rho, alpha) / norms[j];
            if new != old {
                r.axpy(old - new, &prob.a.column(j), T::one());
                p[j] = new;
            }
        }
        if trace {
            objectives.push(objective(&r, &p));
        }
        if kkt_violation(prob, &p, alpha) <= tol {
            converged = true;
            break;
        }
    }
    LassoOutcome {
        p,
        converged,
        objectives,
    }
}

pub(crate) fn stlsq_problem<T: Real>(
    prob: &Problem<T>,
    alpha: T,
    threshold: T,
    max_iter: usize,
    tol: T,
) -> Result<(DVector<T>, bool)> {
    let all: Vec<usize> = (0..prob.n_cols()).collect();
    let (mut p, converged) = if alpha > T::zero() {
        let out = lasso_cd(prob, alpha, max_iter, tol, false);
        (out.p, out.converged)
    } else {
        (ols_on(prob, &all), true)
    };
    let mut support: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&j| p[j].abs() >= threshold)
        .collect();
    if threshold > T::zero() {
        support.retain(|&j| p[j] != T::zero());
    }
    for _ in 0..max_iter {
        if support.is_empty() {
            return Err(SparseError::EmptySupport);
        }
        p = ols_on(prob, &support);
        let next: Vec<usize> = support
            .iter()
            .copied()
            .filter(|&j| p[j].abs() >= threshold)
            .collect();
        if next == support {
            break;
        }
        support = next;
    }
    if support_of(&p).is_empty() && threshold > T::zero() {
        return Err(SparseError::EmptySupport);
    }
    Ok((p, converged))
}

pub(crate) fn stols_problem<T: Real>(prob: &Problem<T>, threshold: T) -> Result<DVector<T>> {
    let all: Vec<usize> = (0..prob.n_cols()).collect();
    let p = ols_on(prob, &all);
    if threshold == T::zero() {
        return Ok(p);
    }
    let survivors: Vec<usize> = all
        .into_iter()
        .filter(|&j| soft(p[j], threshold) != T::zero())
        .collect();
    if survivors.is_empty() {
        return Err(SparseError::EmptySupport);
    }
    Ok(ols_on(prob, &survivors))
}

/// Runs the configured solver on a prepared problem.
pub(crate) fn solve_problem<T: Real>(
    prob: &Problem<T>,
    cfg: &SparseFitConfig,
) -> Result<(DVector<T>, bool)> {
    let th = T::lit(cfg.threshold);
    match cfg.solver {
        Solver::LassoStlsq => {
            stlsq_problem(prob, T::lit(cfg.alpha), th, cfg.max_iter, T::lit(cfg.tol))
        }
        Solver::Stlsq => stlsq_problem(prob, T::zero(), th, cfg.max_iter, T::lit(cfg.tol)),
        Solver::Stols => stols_problem(prob, th).map(|p| (p, true)),
    }
}

fn finish<T: Real>(x: &DMatrix<T>, y: &DVector<T>, p: DVector<T>, converged: bool) -> FitResult<T> {
    let yhat = x * &p;
    let r2 = score_r2(y, &yhat).unwrap_or(T::neg_infinity());
    FitResult {
        support: support_of(&p),
        residual_norm: (y - yhat).norm(),
        coefficients: p,
        r2,
        converged,
    }
}

/// Ordinary least squares, minimum-norm on rank-deficient designs.
pub fn fit_ols<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<FitResult<T>> {
    check_inputs(x, y)?;
    let p = ols_solve(x, y, x.nrows());
    Ok(finish(x, y, p, true))
}

/// LASSO by cyclic coordinate descent on `½‖y − Xp‖²/N + alpha‖p‖₁`.
pub fn fit_lasso<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    alpha: T,
    max_iter: usize,
    tol: T,
) -> Result<FitResult<T>> {
    check_inputs(x, y)?;
    if alpha < T::zero() {
        return Err(SparseError::InvalidConfig("negative alpha".into()));
    }
    let out = lasso_cd(&dense_problem(x, y), alpha, max_iter.max(1), tol, false);
    Ok(finish(x, y, out.p, out.converged))
}

/// Sequentially thresholded least squares started from a LASSO fit (OLS when alpha is 0).
pub fn fit_stlsq<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    alpha: T,
    threshold: T,
    max_iter: usize,
) -> Result<FitResult<T>> {
    fit_stlsq_tol(
        x,
        y,
        alpha,
        threshold,
        max_iter,
        T::lit(SparseFitConfig::default().tol),
    )
}

/// [`fit_stlsq`] with an explicit LASSO tolerance.
pub fn fit_stlsq_tol<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    alpha: T,
    threshold: T,
    max_iter: usize,
    tol: T,
) -> Result<FitResult<T>> {
    check_inputs(x, y)?;
    let (p, converged) =
        stlsq_problem(&dense_problem(x, y), alpha, threshold, max_iter.max(1), tol)?;
    Ok(finish(x, y, p, converged))
}

/// OLS, soft-threshold, then OLS refit on the surviving columns.
pub fn fit_stols<T: Real>(x: &DMatrix<T>, y: &DVector<T>, threshold: T) -> Result<FitResult<T>> {
    check_inputs(x, y)?;
    let p = stols_problem(&dense_problem(x, y), threshold)?;
    Ok(finish(x, y, p, true))
}

/// Dispatches on `cfg.solver`.
pub fn fit<T: Real>(x: &DMatrix<T>, y: &DVector<T>, cfg: &SparseFitConfig) -> Result<FitResult<T>> {
    cfg.validate()?;
    check_inputs(x, y)?;
    let (p, converged) = solve_problem(&dense_problem(x, y), cfg)?;
    Ok(finish(x, y, p, converged))
}
