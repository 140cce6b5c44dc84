//! Nonlinear least-squares fit of the rate model
//! `E[K] = a0 + a1 / (k + 2)^b1 + a2 / n^b2`
//! with misspecification-robust (sandwich) standard errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix5, Vector5};

use crate::error::{Error, Result};
use crate::experiments::ScenarioResult;

pub const PARAM_NAMES: [&str; 5] = ["a0", "a1", "a2", "b1", "b2"];
pub const FIT_REPORT_HEADER: &str = "param,estimate,ci_lower,ci_upper";
/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.96;

/// One observation `(k, n, K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub k: usize,
    pub n: usize,
    pub value: f64,
}

impl RateRow {
    pub fn new(k: usize, n: usize, value: f64) -> Self {
        Self { k, n, value }
    }
}

/// Parameters in the order `(a0, a1, a2, b1, b2)`.
pub type RateParams = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub params: RateParams,
    pub covariance: Matrix5<f64>,
    pub ci_lower: RateParams,
    pub ci_upper: RateParams,
    pub rss: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
}

pub fn rate_model(k: usize, n: usize, p: &RateParams) -> f64 {
    let [a0, a1, a2, b1, b2] = *p;
    a0 + a1 * (k as f64 + 2.0).powf(-b1) + a2 * (n as f64).powf(-b2)
}

/// Partial derivatives of the model with respect to `(a0, a1, a2, b1, b2)`.
pub fn rate_jacobian(k: usize, n: usize, p: &RateParams) -> RateParams {
    let [_, a1, a2, b1, b2] = *p;
    let lk = (k as f64 + 2.0).ln();
    let ln_n = (n as f64).ln();
    let ek = (-b1 * lk).exp();
    let en = (-b2 * ln_n).exp();
    [1.0, ek, en, -a1 * lk * ek, -a2 * ln_n * en]
}

// Sorted copy so every accumulation runs in one order whatever the input order.
fn canonical(rows: &[RateRow]) -> Vec<RateRow> {
    let mut v = rows.to_vec();
    v.sort_by(|x, y| {
        (x.k, x.n)
            .cmp(&(y.k, y.n))
            .then(x.value.total_cmp(&y.value))
    });
    v
}

fn validate(rows: &[RateRow]) -> Result<()> {
    if rows
        .iter()
        .any(|r| r.k < 2 || r.n == 0 || !r.value.is_finite())
    {
        return Err(Error::InvalidParams(
            "rows need k >= 2, n >= 1 and a finite value".into(),
        ));
    }
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ks.sort_unstable();
    ks.dedup();
    ns.sort_unstable();
    ns.dedup();
    if ks.len() < 2 || ns.len() < 2 {
        return Err(Error::InvalidParams(
            "rows must span at least two k values and two n values".into(),
        ));
    }
    Ok(())
}

fn rss(rows: &[RateRow], p: &RateParams) -> f64 {
    rows.iter()
        .map(|r| (r.value - rate_model(r.k, r.n, p)).powi(2))
        .sum()
}

// JᵀJ and Jᵀr with r = y − model
fn normal_equations(rows: &[RateRow], p: &RateParams) -> (Matrix5<f64>, Vector5<f64>) {
    let mut jtj = Matrix5::zeros();
    let mut jtr = Vector5::zeros();
    for r in rows {
        let j = Vector5::from(rate_jacobian(r.k, r.n, p));
        let res = r.value - rate_model(r.k, r.n, p);
        jtj += j * j.transpose();
        jtr += j * res;
    }
    (jtj, jtr)
}

/// `a0 = min K`, `b1 = b2 = 1`, and `a1, a2` by linear least squares on
/// `K − a0` given those exponents.
pub fn initial_guess(rows: &[RateRow]) -> Result<RateParams> {
    validate(rows)?;
    let rows = canonical(rows);
    let a0 = rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &rows {
        let u = 1.0 / (r.k as f64 + 2.0);
        let v = 1.0 / r.n as f64;
        let y = r.value - a0;
        s11 += u * u;
        s12 += u * v;
        s22 += v * v;
        t1 += u * y;
        t2 += v * y;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 1e-300) {
        return Err(Error::Singular(
            "design for the starting values is degenerate".into(),
        ));
    }
    Ok([
        a0,
        (t1 * s22 - t2 * s12) / det,
        (s11 * t2 - s12 * t1) / det,
        1.0,
        1.0,
    ])
}

/// Levenberg–Marquardt on the residual sum of squares, with Marquardt
/// scaling `diag(JᵀJ)`; `λ` starts at 1e-3, shrinks by 0.3 on accepted
/// steps and grows by 10 on rejected ones. Stops when
/// `|Jᵀr|∞ ≤ tol (1 + RSS)`, when the relative RSS decrease falls below
/// `tol`, or when no damped step reduces the RSS any more.
pub fn fit_rate_model(
    rows: &[RateRow],
    init: RateParams,
    max_iters: usize,
    tol: f64,
) -> Result<RegressionFit> {
    validate(rows)?;
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(
            "starting values must be finite".into(),
        ));
    }
    let rows = canonical(rows);
    let mut p = init;
    let mut cur = rss(&rows, &p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        let (jtj, jtr) = normal_equations(&rows, &p);
        if jtr.amax() <= tol * (1.0 + cur) {
            converged = true;
            break;
        }
        iterations += 1;
        let floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..5 {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            if let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) {
                let mut cand = p;
                for i in 0..5 {
                    cand[i] += step[i];
                }
                let next = rss(&rows, &cand);
                if next.is_finite() && next <= cur {
                    let rel = (cur - next) / cur.max(f64::MIN_POSITIVE);
                    p = cand;
                    cur = next;
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    if rel < tol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no damped step lowers the RSS: a minimum to working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if jtj_singular(&rows, &p) && cur > 0.0 {
        return Err(Error::Singular(
            "Gauss–Newton matrix is singular at the fit".into(),
        ));
    }
    let covariance =
        sandwich_covariance_sorted(&rows, &p).unwrap_or_else(|_| Matrix5::from_element(f64::NAN));
    let (ci_lower, ci_upper) = intervals(&p, &covariance);
    Ok(RegressionFit {
        params: p,
        covariance,
        ci_lower,
        ci_upper,
        rss: cur,
        n_obs: rows.len(),
        converged,
        iterations,
    })
}

fn jtj_singular(rows: &[RateRow], p: &RateParams) -> bool {
    normal_equations(rows, p).0.cholesky().is_none()
}

fn intervals(p: &RateParams, cov: &Matrix5<f64>) -> (RateParams, RateParams) {
    let mut lo = [0.0; 5];
    let mut hi = [0.0; 5];
    for i in 0..5 {
        let half = Z_95 * cov[(i, i)].max(0.0).sqrt();
        lo[i] = p[i] - half;
        hi[i] = p[i] + half;
    }
    (lo, hi)
}

/// `H⁻¹ M H⁻¹` with `H = Σ JᵢᵀJᵢ` and `M = Σ rᵢ² JᵢᵀJᵢ` at `params`.
pub fn sandwich_covariance(rows: &[RateRow], params: &RateParams) -> Result<Matrix5<f64>> {
    validate(rows)?;
    sandwich_covariance_sorted(&canonical(rows), params)
}

fn sandwich_covariance_sorted(rows: &[RateRow], p: &RateParams) -> Result<Matrix5<f64>> {
    let mut h = Matrix5::zeros();
    let mut m = Matrix5::zeros();
    for r in rows {
        let j = Vector5::from(rate_jacobian(r.k, r.n, p));
        let res = r.value - rate_model(r.k, r.n, p);
        let outer = j * j.transpose();
        h += outer;
        m += outer * (res * res);
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(Matrix5::zeros());
    }
    let h_inv = h
        .cholesky()
        .ok_or_else(|| Error::Singular("Gauss–Newton matrix is not positive definite".into()))?
        .inverse();
    let cov = h_inv * m * h_inv;
    Ok((cov + cov.transpose()) * 0.5)
}

/// `σ̂² H⁻¹` with `σ̂² = RSS / (N − 5)`, the covariance under constant noise.
pub fn classical_covariance(rows: &[RateRow], params: &RateParams) -> Result<Matrix5<f64>> {
    validate(rows)?;
    let rows = canonical(rows);
    if rows.len() <= 5 {
        return Err(Error::InvalidParams("need more than five rows".into()));
    }
    let (h, _) = normal_equations(&rows, params);
    let h_inv = h
        .cholesky()
        .ok_or_else(|| Error::Singular("Gauss–Newton matrix is not positive definite".into()))?
        .inverse();
    Ok(h_inv * (rss(&rows, params) / (rows.len() - 5) as f64))
}

/// Starting point with `b1 = b2 = 1` and `(a0, a1, a2)` all by linear least squares.
pub fn joint_linear_guess(rows: &[RateRow]) -> Result<RateParams> {
    validate(rows)?;
    let rows = canonical(rows);
    let mut xtx = nalgebra::Matrix3::<f64>::zeros();
    let mut xty = nalgebra::Vector3::<f64>::zeros();
    for r in &rows {
        let x = nalgebra::Vector3::new(1.0, 1.0 / (r.k as f64 + 2.0), 1.0 / r.n as f64);
        xtx += x * x.transpose();
        xty += x * r.value;
    }
    let sol = xtx
        .cholesky()
        .ok_or_else(|| Error::Singular("design for the starting values is degenerate".into()))?
        .solve(&xty);
    Ok([sol[0], sol[1], sol[2], 1.0, 1.0])
}

/// Fits from [`initial_guess`] and from [`joint_linear_guess`] with default
/// tolerances and keeps the converged fit with the smaller RSS.
pub fn fit_rows(rows: &[RateRow]) -> Result<RegressionFit> {
    let mut best: Option<RegressionFit> = None;
    let mut first_err = None;
    for init in [initial_guess(rows), joint_linear_guess(rows)] {
        match init.and_then(|p| fit_rate_model(rows, p, 500, 1e-10)) {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (fit.converged && !b.converged)
                            || (fit.converged == b.converged && fit.rss < b.rss)
                    }
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("an error was recorded"))
}

/// Rows with `k >= min_k` from experiment output.
pub fn rows_from_results(results: &[ScenarioResult], min_k: usize) -> Vec<RateRow> {
    results
        .iter()
        .filter(|r| r.k >= min_k)
        .map(|r| RateRow::new(r.k, r.n, r.neg_lifted_loglik))
        .collect()
}

/// One row per `(k, n)` holding the mean value.
pub fn aggregate_means(rows: &[RateRow]) -> Vec<RateRow> {
    let mut acc: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in canonical(rows) {
        acc.entry((r.k, r.n)).or_default().push(r.value);
    }
    acc.into_iter()
        .map(|((k, n), v)| RateRow::new(k, n, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Fit report: header, one line per parameter, then
/// `meta,rss=<value>,n_obs=<count>,converged=<bool>`.
pub fn format_fit_report(fit: &RegressionFit) -> String {
    let mut out = String::new();
    out.push_str(FIT_REPORT_HEADER);
    out.push('\n');
    for i in 0..5 {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            PARAM_NAMES[i], fit.params[i], fit.ci_lower[i], fit.ci_upper[i]
        ));
    }
    out.push_str(&format!(
        "meta,rss={:.16e},n_obs={},converged={}\n",
        fit.rss, fit.n_obs, fit.converged
    ));
    out
}

pub fn write_fit_report(path: &Path, fit: &RegressionFit) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(format_fit_report(fit).as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Parameter rows of a fit report as `(name, estimate, lower, upper)`.
pub fn parse_fit_report<R: Read>(reader: R) -> Result<Vec<(String, f64, f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != FIT_REPORT_HEADER {
        return Err(Error::Parse(format!(
            "fit report header must be `{FIT_REPORT_HEADER}`"
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if &rec[0] == "meta" {
            continue;
        }
        let num = |i: usize| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{}`", &rec[i])))
        };
        out.push((rec[0].to_string(), num(1)?, num(2)?, num(3)?));
    }
    Ok(out)
}
