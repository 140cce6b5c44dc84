//! k-component beta mixtures `Σ πⱼ β(·; θⱼ)`.
//!
//! Components whose weight drops to (near) zero are kept, so `k` stays
//! fixed throughout a fit. Pruning is left to callers.

use crate::densities::{parse_f64, ComponentParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    components: Vec<ComponentParams>,
}

impl MixtureParams {
    /// Weights must be non-negative and sum to one within 1e-12.
    pub fn new(weights: Vec<f64>, components: Vec<ComponentParams>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParams(
                "mixture needs at least one component".into(),
            ));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidParams(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn single(theta: ComponentParams) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![theta],
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    /// Terms are summed in sorted order, so the value does not depend on
    /// the order of the components.
    pub fn pdf(&self, x: f64) -> f64 {
        let mut terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.pdf(x))
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }

    /// Mixture density from precomputed `ln x` and `ln(1 - x)`, for interior x.
    #[inline]
    pub fn pdf_from_logs(&self, ln_x: f64, ln_1mx: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.ln_pdf_from_logs(ln_x, ln_1mx).exp())
            .sum()
    }

    /// Index of the component selected by a uniform draw `u` in [0, 1).
    pub(crate) fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return j;
            }
        }
        // u landed in rounding slack at the top; take the last weighted component
        self.weights
            .iter()
            .rposition(|w| *w > 0.0)
            .unwrap_or(self.k() - 1)
    }

    /// `(1 - pi) p + pi q` with the components of both concatenated.
    pub fn blend(p: &MixtureParams, q: &MixtureParams, pi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::InvalidParams(format!(
                "blend weight {pi} outside [0, 1]"
            )));
        }
        let weights: Vec<f64> = p
            .weights
            .iter()
            .map(|w| (1.0 - pi) * w)
            .chain(q.weights.iter().map(|w| pi * w))
            .collect();
        let components = p.components.iter().chain(&q.components).copied().collect();
        Ok(Self {
            weights: renormalize_weights(&weights)?,
            components,
        })
    }

    /// `k,w1,..,wk,a1,b1,..,ak,bk` with shortest round-trip float rendering.
    pub fn to_csv_row(&self) -> String {
        let mut fields = vec![self.k().to_string()];
        fields.extend(self.weights.iter().map(|w| w.to_string()));
        for c in &self.components {
            fields.push(c.a().to_string());
            fields.push(c.b().to_string());
        }
        fields.join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.trim().split(',').collect();
        let k: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad component count `{}`", fields[0].trim())))?;
        if k == 0 {
            return Err(Error::Parse("component count must be >= 1".into()));
        }
        let expected = k.checked_mul(3).and_then(|v| v.checked_add(1));
        if expected != Some(fields.len()) {
            return Err(Error::Parse(format!(
                "mixture row with k = {k} needs {} fields, got {}",
                expected.map_or_else(|| "too many".to_string(), |e| e.to_string()),
                fields.len()
            )));
        }
        let nums = fields[1..]
            .iter()
            .map(|f| parse_f64(f))
            .collect::<Result<Vec<f64>>>()?;
        let weights = nums[..k].to_vec();
        let components = nums[k..]
            .chunks(2)
            .map(|ab| ComponentParams::new(ab[0], ab[1]))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(weights, components).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Mixture density at `x`.
pub fn mixture_pdf(x: f64, psi: &MixtureParams) -> f64 {
    psi.pdf(x)
}

/// Projects non-negative weights onto the simplex by dividing by their sum.
pub fn renormalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParams(
            "weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}
