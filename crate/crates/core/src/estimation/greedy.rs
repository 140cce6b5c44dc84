//! Greedy approximation sequence over a finite grid of candidates.
//!
//! Each step mixes one new beta component into the previous density,
//! choosing the weight and shapes that minimize the objective among the
//! grid candidates.

use crate::densities::{ComponentParams, Density, ParamBox};
use crate::divergence::lifted_entropy;
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::numerics::QuadratureSpec;

/// Candidate mixing weights and component shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyGrid {
    pis: Vec<f64>,
    thetas: Vec<ComponentParams>,
}

impl GreedyGrid {
    /// `pis` are sorted ascending; `thetas` are sorted lexicographically by `(a, b)`.
    pub fn new(mut pis: Vec<f64>, mut thetas: Vec<ComponentParams>) -> Result<Self> {
        if pis.is_empty() || thetas.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if pis.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParams(
                "grid weights must lie in [0, 1]".into(),
            ));
        }
        pis.sort_by(f64::total_cmp);
        pis.dedup();
        thetas.sort_by(|x, y| x.a().total_cmp(&y.a()).then(x.b().total_cmp(&y.b())));
        thetas.dedup();
        Ok(Self { pis, thetas })
    }

    /// `pi_count` evenly spaced weights in [0, 1] and a log-spaced
    /// `shape_count × shape_count` shape grid over `bounds`.
    pub fn regular(pi_count: usize, shape_count: usize, bounds: &ParamBox) -> Result<Self> {
        if pi_count < 2 || shape_count < 2 {
            return Err(Error::EmptyGrid);
        }
        let pis = (0..pi_count)
            .map(|i| i as f64 / (pi_count - 1) as f64)
            .collect();
        let (lo, hi) = (bounds.min.ln(), bounds.max.ln());
        let axis: Vec<f64> = (0..shape_count)
            .map(|i| bounds.clamp((lo + (hi - lo) * i as f64 / (shape_count - 1) as f64).exp()))
            .collect();
        let thetas = axis
            .iter()
            .flat_map(|&a| {
                axis.iter()
                    .map(move |&b| ComponentParams::new_in(a, b, bounds))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pis, thetas)
    }

    pub fn pis(&self) -> &[f64] {
        &self.pis
    }

    pub fn thetas(&self) -> &[ComponentParams] {
        &self.thetas
    }

    /// Largest component density value over the grid.
    pub fn sup_bound(&self) -> f64 {
        self.thetas.iter().map(|t| t.sup()).fold(0.0, f64::max)
    }
}

impl Default for GreedyGrid {
    fn default() -> Self {
        Self::regular(101, 25, &ParamBox::default()).expect("default grid is valid")
    }
}

/// A convex objective `κ(g) = constant − Σᵢ coefᵢ ln(g(zᵢ) + h(zᵢ))`
/// evaluated at a fixed set of points.
#[derive(Debug, Clone)]
pub struct PointObjective {
    points: Vec<f64>,
    coef: Vec<f64>,
    h_vals: Vec<f64>,
    constant: f64,
}

impl PointObjective {
    /// Population `KL_h(f || g)` discretized on the quadrature nodes of `spec`
    /// (with the breakpoints of `f` and `h` merged in).
    pub fn population(f: &Density, h: &Density, spec: &QuadratureSpec) -> Result<Self> {
        let constant = lifted_entropy(f, h, spec)?;
        let spec = spec.with_breakpoints(f.breakpoints().into_iter().chain(h.breakpoints()));
        let (mut points, mut coef, mut h_vals) = (Vec::new(), Vec::new(), Vec::new());
        for (x, w) in spec.nodes() {
            let hx = h.pdf(x);
            points.push(x);
            coef.push(w * (f.pdf(x) + hx));
            h_vals.push(hx);
        }
        Ok(Self {
            points,
            coef,
            h_vals,
            constant,
        })
    }

    /// `−L_{h,n}(g)`: the sample objective up to a term free of `g`.
    pub fn empirical(h: &Density, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidParams(
                "samples must be non-empty and equal length".into(),
            ));
        }
        let mut points: Vec<f64> = xs.iter().chain(ys).copied().collect();
        points.sort_by(f64::total_cmp);
        let h_vals: Vec<f64> = points.iter().map(|&z| h.pdf(z)).collect();
        if h_vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(
                "lifting density must be positive and finite on the sample".into(),
            ));
        }
        Ok(Self {
            coef: vec![1.0 / xs.len() as f64; points.len()],
            points,
            h_vals,
            constant: 0.0,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `κ` for a density given by its values at `points()`.
    pub fn value_at(&self, g_vals: &[f64]) -> f64 {
        self.constant
            - self
                .coef
                .iter()
                .zip(g_vals)
                .zip(&self.h_vals)
                .map(|((c, g), h)| if *c == 0.0 { 0.0 } else { c * (g + h).ln() })
                .sum::<f64>()
    }

    pub fn value(&self, g: &MixtureParams) -> f64 {
        let vals: Vec<f64> = self.points.iter().map(|&x| g.pdf(x)).collect();
        self.value_at(&vals)
    }

    /// Smallest value of `h` over the points.
    pub fn h_inf(&self) -> f64 {
        self.h_vals.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    pub k: usize,
    /// Weight given to the new component (zero for the starting density).
    pub pi: f64,
    pub theta: ComponentParams,
    pub mixture: MixtureParams,
    pub objective: f64,
}

/// `f̄₀, f̄₁, …, f̄_{k_max}`. The starting density is the best single grid
/// component; step `k` minimizes `κ((1 − π) f̄_{k−1} + π φ_θ)` over the grid,
/// preferring the smallest `π` and then the lexicographically smallest `θ`
/// on ties.
pub fn greedy_fit(
    obj: &PointObjective,
    k_max: usize,
    grid: &GreedyGrid,
) -> Result<Vec<GreedyStep>> {
    let m = obj.points.len();
    let phi: Vec<Vec<f64>> = grid
        .thetas
        .iter()
        .map(|t| obj.points.iter().map(|&x| t.pdf(x)).collect())
        .collect();

    let mut best0 = (f64::INFINITY, 0);
    for (i, vals) in phi.iter().enumerate() {
        let v = obj.value_at(vals);
        if v < best0.0 {
            best0 = (v, i);
        }
    }
    if !best0.0.is_finite() {
        return Err(Error::Degenerate(
            "objective is not finite on any grid component".into(),
        ));
    }
    let mut current = phi[best0.1].clone();
    let mut steps = vec![GreedyStep {
        k: 0,
        pi: 1.0,
        theta: grid.thetas[best0.1],
        mixture: MixtureParams::single(grid.thetas[best0.1]),
        objective: best0.0,
    }];

    let mut cand = vec![0.0; m];
    for k in 1..=k_max {
        let mut best = (f64::INFINITY, 0.0, 0);
        for &pi in &grid.pis {
            for (ti, vals) in phi.iter().enumerate() {
                for ((c, cur), p) in cand.iter_mut().zip(&current).zip(vals) {
                    *c = (1.0 - pi) * cur + pi * p;
                }
                let v = obj.value_at(&cand);
                if v < best.0 {
                    best = (v, pi, ti);
                }
            }
        }
        let (value, pi, ti) = best;
        if !value.is_finite() {
            return Err(Error::Degenerate(format!(
                "no finite candidate at step {k}"
            )));
        }
        for (cur, p) in current.iter_mut().zip(&phi[ti]) {
            *cur = (1.0 - pi) * *cur + pi * p;
        }
        let prev = &steps[k - 1].mixture;
        let mixture = MixtureParams::blend(prev, &MixtureParams::single(grid.thetas[ti]), pi)?;
        steps.push(GreedyStep {
            k,
            pi,
            theta: grid.thetas[ti],
            mixture,
            objective: value,
        });
    }
    Ok(steps)
}

/// `4 c² / (a² (k + 2))`, the guaranteed gap between step `k` and the best
/// element of the convex hull, with `c` the component sup bound and `a` the
/// infimum of `h`.
pub fn greedy_gap_bound(c: f64, a: f64, k: usize) -> f64 {
    4.0 * c * c / (a * a * (k as f64 + 2.0))
}
