//! Minorize-maximize iterations for the h-MLLE.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::beta_mle::{maximize_weighted_beta, NewtonStatus, WeightedBetaStats};
use crate::densities::{ComponentParams, Density, ParamBox};
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MMConfig {
    pub max_iters: usize,
    /// Stop when `|ΔL| <= rel_tol * |L|`. Zero runs until the objective stops moving.
    pub rel_tol: f64,
    pub restarts: usize,
    pub newton_max_iters: usize,
    pub newton_tol: f64,
    pub bounds: ParamBox,
}

impl Default for MMConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-8,
            restarts: 5,
            newton_max_iters: 50,
            newton_tol: 1e-10,
            bounds: ParamBox::default(),
        }
    }
}

impl MMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 || self.newton_max_iters == 0 {
            return Err(Error::InvalidParams(
                "iteration counts and restarts must be positive".into(),
            ));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite())
            || !(self.newton_tol > 0.0 && self.newton_tol.is_finite())
        {
            return Err(Error::InvalidParams(
                "tolerances must be finite and positive".into(),
            ));
        }
        if !(self.bounds.min > 0.0
            && self.bounds.min < self.bounds.max
            && self.bounds.max.is_finite())
        {
            return Err(Error::InvalidParams(
                "parameter box must satisfy 0 < min < max < inf".into(),
            ));
        }
        Ok(())
    }
}

/// Responsibilities of each component and of `h` at every sample point.
/// `tau_x` and `tau_y` are `n × k`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    pub tau_x: Vec<f64>,
    pub gamma_x: Vec<f64>,
    pub tau_y: Vec<f64>,
    pub gamma_y: Vec<f64>,
}

impl Responsibilities {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.gamma_x.len()
    }

    pub fn tau_x_row(&self, i: usize) -> &[f64] {
        &self.tau_x[i * self.k..(i + 1) * self.k]
    }

    pub fn tau_y_row(&self, i: usize) -> &[f64] {
        &self.tau_y[i * self.k..(i + 1) * self.k]
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.tau_x
            .iter()
            .skip(j)
            .step_by(self.k)
            .chain(self.tau_y.iter().skip(j).step_by(self.k))
            .copied()
    }
}

// Keeps the logs finite if a draw rounds onto an endpoint.
fn interior(z: f64) -> f64 {
    z.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Sample pair with the per-point quantities the iterations reuse.
/// Points are stored sorted, so every sum runs in the same order no
/// matter how the input was arranged.
#[derive(Debug, Clone)]
pub(crate) struct LiftedSample {
    n: usize,
    // xs then ys
    z: Vec<f64>,
    ln_z: Vec<f64>,
    ln_1mz: Vec<f64>,
    h: Vec<f64>,
}

impl LiftedSample {
    pub(crate) fn new(h: &Density, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidParams(format!(
                "samples must be non-empty and equal length (got {} and {})",
                xs.len(),
                ys.len()
            )));
        }
        let mut sx = xs.to_vec();
        let mut sy = ys.to_vec();
        for v in sx.iter().chain(&sy) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Domain(format!("sample value {v} outside [0, 1]")));
            }
        }
        sx.sort_by(f64::total_cmp);
        sy.sort_by(f64::total_cmp);
        let z: Vec<f64> = sx.into_iter().chain(sy).collect();
        let mut hv = Vec::with_capacity(z.len());
        for &v in &z {
            let hz = h.pdf(v);
            if !(hz > 0.0 && hz.is_finite()) {
                return Err(Error::Domain(format!(
                    "lifting density is {hz} at sample point {v}"
                )));
            }
            hv.push(hz);
        }
        Ok(Self {
            n: xs.len(),
            ln_z: z.iter().map(|&v| interior(v).ln()).collect(),
            ln_1mz: z.iter().map(|&v| (-interior(v)).ln_1p()).collect(),
            z,
            h: hv,
        })
    }

    pub(crate) fn pooled(&self) -> &[f64] {
        &self.z
    }

    // component terms πⱼ φⱼ at point i written into `terms`, returns Σ πⱼ φⱼ + h
    #[inline]
    fn terms(&self, psi: &MixtureParams, i: usize, terms: &mut [f64]) -> f64 {
        let mut s = 0.0;
        for ((t, w), c) in terms.iter_mut().zip(psi.weights()).zip(psi.components()) {
            *t = if *w > 0.0 {
                w * c.ln_pdf_from_logs(self.ln_z[i], self.ln_1mz[i]).exp()
            } else {
                0.0
            };
            s += *t;
        }
        s + self.h[i]
    }

    /// `L_{h,n}(ψ)` and the weighted statistics of every responsibility
    /// column, in one pass without storing the responsibilities.
    fn sweep(&self, psi: &MixtureParams) -> (f64, Vec<WeightedBetaStats>) {
        let k = psi.k();
        let mut row = vec![0.0; k];
        let mut sums = vec![[0.0f64; 3]; k];
        let mut total = 0.0;
        for i in 0..self.z.len() {
            let denom = self.terms(psi, i, &mut row);
            total += denom.ln();
            let (lx, l1x) = (self.ln_z[i], self.ln_1mz[i]);
            for (s, t) in sums.iter_mut().zip(&row) {
                let w = t / denom;
                s[0] += w;
                s[1] += w * lx;
                s[2] += w * l1x;
            }
        }
        let stats = sums
            .into_iter()
            .map(|[mass, sx, s1x]| WeightedBetaStats::from_sums(mass, sx, s1x))
            .collect();
        (total / self.n as f64, stats)
    }
}

/// Responsibilities `τⱼ = πⱼφⱼ / (Σ πφ + h)` and `γ = h / (Σ πφ + h)` at
/// every point of `xs` and `ys`, in input order.
pub fn responsibilities(
    psi: &MixtureParams,
    h: &Density,
    xs: &[f64],
    ys: &[f64],
) -> Responsibilities {
    let k = psi.k();
    let one = |z: f64, row: &mut [f64]| -> f64 {
        let hz = h.pdf(z);
        let mut s = 0.0;
        for ((t, w), c) in row.iter_mut().zip(psi.weights()).zip(psi.components()) {
            *t = w * c.pdf(z);
            s += *t;
        }
        let denom = s + hz;
        for t in row.iter_mut() {
            *t /= denom;
        }
        hz / denom
    };
    let mut tau_x = vec![0.0; xs.len() * k];
    let gamma_x = xs
        .iter()
        .enumerate()
        .map(|(i, &z)| one(z, &mut tau_x[i * k..(i + 1) * k]))
        .collect();
    let mut tau_y = vec![0.0; ys.len() * k];
    let gamma_y = ys
        .iter()
        .enumerate()
        .map(|(i, &z)| one(z, &mut tau_y[i * k..(i + 1) * k]))
        .collect();
    Responsibilities {
        k,
        tau_x,
        gamma_x,
        tau_y,
        gamma_y,
    }
}

/// Jensen minorizer `Qₙ(ψ, χ)` of `L_{h,n}(ψ)` built at `χ`:
/// `(1/n) Σ over xs and ys of Σⱼ τⱼ ln(πⱼ φⱼ / τⱼ) + γ ln(h / γ)`,
/// with responsibilities taken at `χ` and densities at `ψ`, and `0 ln 0 := 0`.
pub fn minorizer_value(
    psi: &MixtureParams,
    chi: &MixtureParams,
    h: &Density,
    xs: &[f64],
    ys: &[f64],
) -> Result<f64> {
    if psi.k() != chi.k() {
        return Err(Error::InvalidParams(
            "ψ and χ must have the same number of components".into(),
        ));
    }
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidParams(
            "samples must be non-empty and equal length".into(),
        ));
    }
    let r = responsibilities(chi, h, xs, ys);
    let mut total = 0.0;
    let mut add = |z: f64, tau: &[f64], gamma: f64| {
        for ((t, w), c) in tau.iter().zip(psi.weights()).zip(psi.components()) {
            if *t > 0.0 {
                total += t * ((w * c.pdf(z)).ln() - t.ln());
            }
        }
        if gamma > 0.0 {
            total += gamma * (h.pdf(z).ln() - gamma.ln());
        }
    };
    for (i, &z) in xs.iter().enumerate() {
        add(z, r.tau_x_row(i), r.gamma_x[i]);
    }
    for (i, &z) in ys.iter().enumerate() {
        add(z, r.tau_y_row(i), r.gamma_y[i]);
    }
    Ok(total / xs.len() as f64)
}

/// `πⱼ = Σᵢ (τⱼ(Xᵢ) + τⱼ(Yᵢ)) / Σᵢ Σₗ (τₗ(Xᵢ) + τₗ(Yᵢ))`.
pub fn update_weights(r: &Responsibilities) -> Result<Vec<f64>> {
    let k = r.k;
    let mut sums = vec![0.0; k];
    for row in r.tau_x.chunks(k).chain(r.tau_y.chunks(k)) {
        for (s, t) in sums.iter_mut().zip(row) {
            *s += t;
        }
    }
    let total: f64 = sums.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "all responsibility mass is on the lifting density".into(),
        ));
    }
    Ok(sums.iter().map(|s| s / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentUpdate {
    pub theta: ComponentParams,
    /// False when the column carried no weight and `theta` is the initial value.
    pub updated: bool,
    pub newton_iterations: usize,
}

/// Maximizes `Σᵢ τⱼ(Xᵢ) ln φ(Xᵢ; θ) + τⱼ(Yᵢ) ln φ(Yᵢ; θ)` over the box.
/// `xs` and `ys` must be in the order `r` was computed for.
pub fn update_component(
    j: usize,
    r: &Responsibilities,
    xs: &[f64],
    ys: &[f64],
    theta_init: &ComponentParams,
    cfg: &MMConfig,
) -> Result<ComponentUpdate> {
    if j >= r.k {
        return Err(Error::InvalidParams(format!(
            "component {j} out of range for k = {}",
            r.k
        )));
    }
    if xs.len() != r.n() || ys.len() != r.n() {
        return Err(Error::InvalidParams(
            "samples do not match the responsibilities".into(),
        ));
    }
    let logs = xs
        .iter()
        .chain(ys)
        .map(|&z| (interior(z).ln(), (-interior(z)).ln_1p()));
    let stats = WeightedBetaStats::from_logs(r.column(j).zip(logs).map(|(w, (a, b))| (w, a, b)));
    Ok(solve(&stats, theta_init, cfg))
}

fn solve(stats: &WeightedBetaStats, init: &ComponentParams, cfg: &MMConfig) -> ComponentUpdate {
    let out = maximize_weighted_beta(
        stats,
        init,
        &cfg.bounds,
        cfg.newton_max_iters,
        cfg.newton_tol,
    );
    ComponentUpdate {
        theta: out.theta,
        updated: out.status != NewtonStatus::NoMass,
        newton_iterations: out.iterations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub psi: MixtureParams,
    pub objective: f64,
    /// `L_{h,n}` at the start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub restart_index: usize,
}

/// One MM step from `psi`: responsibilities, weight update, then every component.
#[cfg(test)]
pub(crate) fn mm_step(
    sample: &LiftedSample,
    psi: &MixtureParams,
    cfg: &MMConfig,
) -> Result<MixtureParams> {
    let (_, stats) = sample.sweep(psi);
    update_from(psi, &stats, cfg)
}

// πⱼ is the column mass over the total, which is what `update_weights` computes
fn update_from(
    psi: &MixtureParams,
    stats: &[WeightedBetaStats],
    cfg: &MMConfig,
) -> Result<MixtureParams> {
    let total: f64 = stats.iter().map(|s| s.mass).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "all responsibility mass is on the lifting density".into(),
        ));
    }
    let weights = stats.iter().map(|s| s.mass / total).collect();
    let components = psi
        .components()
        .iter()
        .zip(stats)
        .map(|(c, st)| solve(st, c, cfg).theta)
        .collect();
    MixtureParams::new(weights, components)
}

pub(crate) fn mm_run(
    sample: &LiftedSample,
    init: MixtureParams,
    cfg: &MMConfig,
    restart_index: usize,
) -> Result<FitResult> {
    let mut psi = init;
    // the sweep also yields L at the current iterate
    let (mut value, mut stats) = sample.sweep(&psi);
    if !value.is_finite() {
        return Err(Error::Degenerate(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut trace = vec![value];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let next = update_from(&psi, &stats, cfg)?;
        let (next_value, next_stats) = sample.sweep(&next);
        if !next_value.is_finite() {
            return Err(Error::Degenerate("objective is not finite".into()));
        }
        iterations += 1;
        let change = (next_value - value).abs();
        psi = next;
        stats = next_stats;
        value = next_value;
        trace.push(value);
        if change <= cfg.rel_tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(FitResult {
        psi,
        objective: value,
        objective_trace: trace,
        iterations,
        restart_index,
    })
}

/// Runs MM from an explicit starting point.
pub fn mm_from(
    h: &Density,
    xs: &[f64],
    ys: &[f64],
    init: MixtureParams,
    cfg: &MMConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let sample = LiftedSample::new(h, xs, ys)?;
    mm_run(&sample, init, cfg, 0)
}

/// Starting point for one restart: component means at the `(j − 1/2)/k`
/// quantiles of the pooled sample with `a + b = 4`, uniform weights.
/// Restarts after the first jitter the quantile levels and the concentration.
pub(crate) fn initial_mixture<R: Rng + ?Sized>(
    pooled_sorted: &[f64],
    k: usize,
    restart: usize,
    rng: &mut R,
    bounds: &ParamBox,
) -> Result<MixtureParams> {
    let m = pooled_sorted.len();
    let components = (0..k)
        .map(|j| {
            let (shift, scale) = if restart == 0 {
                (0.0, 1.0)
            } else {
                let u: f64 = rng.random_range(-0.5..0.5);
                let g: f64 = rng.sample(StandardNormal);
                (u, (0.3 * g).exp())
            };
            let level = ((j as f64 + 0.5 + shift) / k as f64).clamp(0.0, 1.0);
            let idx = ((level * m as f64) as usize).min(m - 1);
            let mean = pooled_sorted[idx].clamp(0.02, 0.98);
            let conc = 4.0 * scale;
            ComponentParams::unchecked(bounds.clamp(conc * mean), bounds.clamp(conc * (1.0 - mean)))
        })
        .collect();
    MixtureParams::new(vec![1.0 / k as f64; k], components)
}

/// h-MLLE over `k`-component beta mixtures, best of `cfg.restarts` runs.
/// Each restart draws its own seed from `rng` before any fitting starts.
pub fn mm_fit<R: RngCore + ?Sized>(
    h: &Density,
    xs: &[f64],
    ys: &[f64],
    k: usize,
    cfg: &MMConfig,
    rng: &mut R,
) -> Result<FitResult> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let sample = LiftedSample::new(h, xs, ys)?;
    let mut pooled = sample.pooled().to_vec();
    pooled.sort_by(f64::total_cmp);
    let seeds: Vec<u64> = (0..cfg.restarts).map(|_| rng.next_u64()).collect();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for (r, seed) in seeds.into_iter().enumerate() {
        let mut stream = ChaCha8Rng::seed_from_u64(seed);
        let run = initial_mixture(&pooled, k, r, &mut stream, &cfg.bounds)
            .and_then(|init| mm_run(&sample, init, cfg, r));
        match run {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.objective > b.objective) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::Degenerate("no restart succeeded".into())))
}
