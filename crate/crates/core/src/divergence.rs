//! h-lifted KL divergence, its empirical objective, classical distances and
//! the closed-form beta KL used as a diagnostic.
//!
//! `KL_h(f || g) = ∫ (f + h) ln((f + h) / (g + h)) dμ`.
//!
//! The estimation code never evaluates the sample version of `KL_h`
//! directly. It maximizes
//! `L_{h,n}(ψ) = (1/n) Σ [ln(f_ψ(Xᵢ) + h(Xᵢ)) + ln(f_ψ(Yᵢ) + h(Yᵢ))]`,
//! which differs from minus the sample `KL_h` by a term that does not
//! depend on ψ (it only involves the unknown target `f`).

use crate::densities::{ln_beta_norm, Density};
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::numerics::{digamma_unchecked, graded_breakpoints, integrate, QuadratureSpec};

/// `t ln(t / u)` with `0 ln 0 := 0`.
#[inline]
fn xlogratio(t: f64, u: f64) -> f64 {
    if t < 1e-300 {
        0.0
    } else {
        t * (t / u).ln()
    }
}

fn merged(spec: &QuadratureSpec, dens: &[&Density]) -> QuadratureSpec {
    spec.with_breakpoints(dens.iter().flat_map(|d| d.breakpoints()))
}

/// `KL_h(f || g)` by quadrature. Breakpoints of all three densities are
/// merged into `spec`.
pub fn klh(f: &Density, g: &Density, h: &Density, spec: &QuadratureSpec) -> Result<f64> {
    let spec = merged(spec, &[f, g, h]);
    let v = integrate(
        |x| {
            let hx = h.pdf(x);
            xlogratio(f.pdf(x) + hx, g.pdf(x) + hx)
        },
        &spec,
    )?;
    Ok(if v < 0.0 && v.abs() < 1e-10 { 0.0 } else { v })
}

/// Plain KL divergence `∫ p ln(p / q)` of two evaluable functions.
pub fn kl_quadrature<P: Fn(f64) -> f64, Q: Fn(f64) -> f64>(
    p: P,
    q: Q,
    spec: &QuadratureSpec,
) -> Result<f64> {
    integrate(|x| xlogratio(p(x), q(x)), spec)
}

/// `∫ (f + h) ln(f + h) dμ`, the part of `KL_h(f || ·)` that does not
/// depend on the second argument.
pub fn lifted_entropy(f: &Density, h: &Density, spec: &QuadratureSpec) -> Result<f64> {
    let spec = merged(spec, &[f, h]);
    integrate(
        |x| {
            let t = f.pdf(x) + h.pdf(x);
            if t < 1e-300 {
                0.0
            } else {
                t * t.ln()
            }
        },
        &spec,
    )
}

/// `−∫ (f + h) ln(g + h) dμ`, the negative log h-lifted likelihood.
pub fn lifted_cross_entropy(
    f: &Density,
    g: &Density,
    h: &Density,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let spec = merged(spec, &[f, g, h]);
    integrate(
        |x| {
            let hx = h.pdf(x);
            let t = f.pdf(x) + hx;
            if t < 1e-300 {
                0.0
            } else {
                -t * (g.pdf(x) + hx).ln()
            }
        },
        &spec,
    )
}

/// `L_{h,n}` for an arbitrary density `p` in place of the mixture.
pub fn lifted_loglik(p: &Density, h: &Density, xs: &[f64], ys: &[f64]) -> Result<f64> {
    lifted_loglik_by(|x| p.pdf(x), h, xs, ys)
}

/// The h-MLLE objective `L_{h,n}(ψ)`.
pub fn empirical_klh_objective(
    psi: &MixtureParams,
    h: &Density,
    xs: &[f64],
    ys: &[f64],
) -> Result<f64> {
    lifted_loglik_by(|x| psi.pdf(x), h, xs, ys)
}

fn lifted_loglik_by<P: Fn(f64) -> f64>(p: P, h: &Density, xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidParams(format!(
            "samples must be non-empty and equal length (got {} and {})",
            xs.len(),
            ys.len()
        )));
    }
    let mut total = 0.0;
    for (i, &z) in xs.iter().chain(ys).enumerate() {
        let v = (p(z) + h.pdf(z)).ln();
        if !v.is_finite() {
            return Err(Error::NonFiniteLog { index: i });
        }
        total += v;
    }
    Ok(total / xs.len() as f64)
}

/// Closed-form KL(Beta(a_p, b_p) || Beta(a_q, b_q)) for any positive shapes.
pub fn beta_kl_closed_form(p: (f64, f64), q: (f64, f64)) -> Result<f64> {
    let (ap, bp) = p;
    let (aq, bq) = q;
    for v in [ap, bp, aq, bq] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Domain(format!(
                "beta shapes must be positive, got {v}"
            )));
        }
    }
    // ln B(a,b) = −ln_beta_norm(a,b)
    let ln_b_q = -ln_beta_norm(aq, bq);
    let ln_b_p = -ln_beta_norm(ap, bp);
    let dsum = digamma_unchecked(ap + bp);
    let kl = ln_b_q - ln_b_p
        + (ap - aq) * (digamma_unchecked(ap) - dsum)
        + (bp - bq) * (digamma_unchecked(bp) - dsum);
    Ok(kl.max(0.0))
}

/// KL between two beta densities by graded-mesh quadrature in log space.
pub fn beta_kl_quadrature(p: (f64, f64), q: (f64, f64), spec: &QuadratureSpec) -> Result<f64> {
    let (ap, bp) = p;
    let (aq, bq) = q;
    let (np, nq) = (ln_beta_norm(ap, bp), ln_beta_norm(aq, bq));
    let spec = spec.with_breakpoints(graded_breakpoints(14));
    integrate(
        |x| {
            let (lx, l1x) = (x.ln(), (1.0 - x).ln());
            let lp = np + (ap - 1.0) * lx + (bp - 1.0) * l1x;
            let lq = nq + (aq - 1.0) * lx + (bq - 1.0) * l1x;
            let px = lp.exp();
            if px == 0.0 {
                0.0
            } else {
                px * (lp - lq)
            }
        },
        &spec,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub l1: f64,
    pub l2_sq: f64,
    pub tv: f64,
}

/// L₁, squared L₂ and total variation between two densities.
pub fn distances(f: &Density, g: &Density, spec: &QuadratureSpec) -> Result<Distances> {
    let spec = merged(spec, &[f, g]);
    let l1 = integrate(|x| (f.pdf(x) - g.pdf(x)).abs(), &spec)?;
    let l2_sq = integrate(|x| (f.pdf(x) - g.pdf(x)).powi(2), &spec)?;
    Ok(Distances {
        l1,
        l2_sq,
        tv: l1 / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub klh: f64,
    pub l1: f64,
    pub l2_sq: f64,
    pub tv: f64,
}

pub fn divergence_report(
    f: &Density,
    g: &Density,
    h: &Density,
    spec: &QuadratureSpec,
) -> Result<DivergenceReport> {
    let d = distances(f, g, spec)?;
    Ok(DivergenceReport {
        klh: klh(f, g, h, spec)?,
        l1: d.l1,
        l2_sq: d.l2_sq,
        tv: d.tv,
    })
}

/// Second derivative in `pi` of `KL_h(f || (1 − pi) p + pi q)`:
/// `∫ (f + h) (p − q)² / ((1 − pi) p + pi q + h)² dμ`.
pub fn curvature_along_segment(
    p: &Density,
    q: &Density,
    h: &Density,
    f: &Density,
    pi: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidParams(format!(
            "segment position {pi} outside (0, 1)"
        )));
    }
    let spec = merged(spec, &[p, q, h, f]);
    integrate(
        |x| {
            let (px, qx, hx) = (p.pdf(x), q.pdf(x), h.pdf(x));
            let denom = (1.0 - pi) * px + pi * qx + hx;
            (f.pdf(x) + hx) * (px - qx).powi(2) / (denom * denom)
        },
        &spec,
    )
}
