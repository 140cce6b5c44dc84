//! Densities on [0, 1]: beta components, the two simulation targets, the
//! uniform and arcsine lifting densities, and finite beta mixtures.
//!
//! `f1` is taken as the equal-weight mixture of uniforms on [0, 2/5] and
//! [3/5, 1] (height 5/4). Read literally, the indicator form with
//! coefficients 1/2 integrates to 2/5 and is not a density.
//!
//! The arcsine lifting density Beta(1/2, 1/2) is unbounded at both
//! endpoints, so it does not satisfy an upper bound `h <= b`; it is kept
//! because the first rate experiment uses it. The uniform density is the
//! default lifting density elsewhere.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::numerics::{graded_breakpoints, ln_gamma_unchecked};

/// Box constraint on both beta shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub min: f64,
    pub max: f64,
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            min: 1.0,
            max: 50.0,
        }
    }
}

impl ParamBox {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

/// Shape pair (a, b) of one beta component, constrained to a [`ParamBox`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentParams {
    a: f64,
    b: f64,
    ln_norm: f64,
}

impl ComponentParams {
    /// Validates against the default box [1, 50]².
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::new_in(a, b, &ParamBox::default())
    }

    pub fn new_in(a: f64, b: f64, bounds: &ParamBox) -> Result<Self> {
        if !(bounds.contains(a) && bounds.contains(b)) {
            return Err(Error::InvalidParams(format!(
                "beta shape ({a}, {b}) outside [{}, {}]^2",
                bounds.min, bounds.max
            )));
        }
        Ok(Self::unchecked(a, b))
    }

    pub(crate) fn unchecked(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            ln_norm: ln_beta_norm(a, b),
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// ln Γ(a+b) − ln Γ(a) − ln Γ(b)
    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    pub fn pdf(&self, x: f64) -> f64 {
        beta_pdf_with_norm(x, self.a, self.b, self.ln_norm)
    }

    /// Log density from precomputed `ln x` and `ln(1 - x)`.
    #[inline]
    pub fn ln_pdf_from_logs(&self, ln_x: f64, ln_1mx: f64) -> f64 {
        self.ln_norm + (self.a - 1.0) * ln_x + (self.b - 1.0) * ln_1mx
    }

    /// Maximum of the density over [0, 1] (finite since a, b >= 1).
    pub fn sup(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        if a == 1.0 && b == 1.0 {
            1.0
        } else if a == 1.0 {
            self.pdf(0.0)
        } else if b == 1.0 {
            self.pdf(1.0)
        } else {
            self.pdf((a - 1.0) / (a + b - 2.0))
        }
    }

    pub fn inf(&self) -> f64 {
        if self.a == 1.0 && self.b == 1.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_beta(rng, self.a, self.b)
    }

    /// Graded split points toward an endpoint where the density behaves like
    /// a non-integer power, so panels there are not polynomial-like.
    pub fn breakpoints(&self) -> Vec<f64> {
        let grading = graded_breakpoints(8);
        let mut out = Vec::new();
        if self.a.fract() != 0.0 {
            out.extend(grading.iter().copied().filter(|t| *t < 0.5));
        }
        if self.b.fract() != 0.0 {
            out.extend(grading.iter().copied().filter(|t| *t > 0.5));
        }
        out
    }
}

pub(crate) fn ln_beta_norm(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a + b) - ln_gamma_unchecked(a) - ln_gamma_unchecked(b)
}

/// Beta(a, b) density for arbitrary positive shapes.
pub fn beta_pdf(x: f64, theta: &ComponentParams) -> f64 {
    theta.pdf(x)
}

#[cfg(test)]
pub(crate) fn beta_pdf_raw(x: f64, a: f64, b: f64) -> f64 {
    beta_pdf_with_norm(x, a, b, ln_beta_norm(a, b))
}

fn beta_pdf_with_norm(x: f64, a: f64, b: f64, ln_norm: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let left = endpoint_term(x, a - 1.0);
    let right = endpoint_term(1.0 - x, b - 1.0);
    match (left, right) {
        (Some(l), Some(r)) => (ln_norm + l + r).exp(),
        (None, _) | (_, None) => {
            // one factor is t^e with t = 0
            let e = if left.is_none() { a - 1.0 } else { b - 1.0 };
            if e > 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

// e·ln t, or None when t = 0 and e != 0
fn endpoint_term(t: f64, e: f64) -> Option<f64> {
    if e == 0.0 {
        Some(0.0)
    } else if t == 0.0 {
        None
    } else {
        Some(e * t.ln())
    }
}

/// `f1`: height 5/4 on [0, 2/5] ∪ [3/5, 1], zero in between.
pub fn target_f1(x: f64) -> f64 {
    if (0.0..=0.4).contains(&x) || (0.6..=1.0).contains(&x) {
        1.25
    } else {
        0.0
    }
}

/// `f2`: the V-shaped density 2 − 4x on [0, 1/2], 4x − 2 on (1/2, 1].
pub fn target_f2(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        0.0
    } else if x <= 0.5 {
        2.0 - 4.0 * x
    } else {
        -2.0 + 4.0 * x
    }
}

pub fn arcsine_pdf(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        0.0
    } else if x == 0.0 || x == 1.0 {
        f64::INFINITY
    } else {
        1.0 / (PI * (x * (1.0 - x)).sqrt())
    }
}

/// An evaluable density on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Beta(ComponentParams),
    TargetF1,
    TargetF2,
    Uniform,
    Arcsine,
    Mixture(MixtureParams),
}

impl Density {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Density::Beta(t) => t.pdf(x),
            Density::TargetF1 => target_f1(x),
            Density::TargetF2 => target_f2(x),
            Density::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Density::Arcsine => arcsine_pdf(x),
            Density::Mixture(m) => m.pdf(x),
        }
    }

    /// Interior points where the density (or a derivative) is discontinuous,
    /// plus any grading points quadrature should split at.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Density::TargetF1 => vec![0.4, 0.6],
            Density::TargetF2 => vec![0.5],
            Density::Arcsine => graded_breakpoints(10),
            Density::Beta(t) => t.breakpoints(),
            Density::Mixture(m) => {
                let mut bps: Vec<f64> = m
                    .components()
                    .iter()
                    .flat_map(|c| c.breakpoints())
                    .collect();
                bps.sort_by(f64::total_cmp);
                bps.dedup();
                bps
            }
            Density::Uniform => Vec::new(),
        }
    }

    /// Upper bound on the density; infinite for the arcsine density.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Density::Beta(t) => t.sup(),
            Density::TargetF1 => 1.25,
            Density::TargetF2 => 2.0,
            Density::Uniform => 1.0,
            Density::Arcsine => f64::INFINITY,
            Density::Mixture(m) => m
                .weights()
                .iter()
                .zip(m.components())
                .map(|(w, c)| w * c.sup())
                .sum(),
        }
    }

    pub fn inf_bound(&self) -> f64 {
        match self {
            Density::Beta(t) => t.inf(),
            Density::TargetF1 | Density::TargetF2 => 0.0,
            Density::Uniform => 1.0,
            Density::Arcsine => 2.0 / PI,
            Density::Mixture(m) => m
                .weights()
                .iter()
                .zip(m.components())
                .map(|(w, c)| w * c.inf())
                .sum(),
        }
    }

    /// Draws `n` i.i.d. points from the density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Beta(t) => t.sample(rng),
            Density::TargetF1 => {
                let pick_left = rng.random::<bool>();
                let u: f64 = rng.sample(Open01);
                if pick_left {
                    0.4 * u
                } else {
                    0.6 + 0.4 * u
                }
            }
            Density::TargetF2 => {
                let u: f64 = rng.sample(Open01);
                if u <= 0.5 {
                    (1.0 - (1.0 - 2.0 * u).sqrt()) / 2.0
                } else {
                    1.0 - (1.0 - (2.0 * u - 1.0).sqrt()) / 2.0
                }
            }
            Density::Uniform => rng.sample(Open01),
            Density::Arcsine => {
                let u: f64 = rng.sample(Open01);
                (PI * u / 2.0).sin().powi(2)
            }
            Density::Mixture(m) => {
                let u: f64 = rng.random();
                let j = m.pick_component(u);
                m.components()[j].sample(rng)
            }
        }
    }

    /// Convex combination `(1 - pi) p + pi q` of two beta-based densities.
    pub fn blend(p: &Density, q: &Density, pi: f64) -> Result<Density> {
        let as_mix = |d: &Density| -> Result<MixtureParams> {
            match d {
                Density::Beta(t) => MixtureParams::new(vec![1.0], vec![*t]),
                Density::Uniform => {
                    MixtureParams::new(vec![1.0], vec![ComponentParams::unchecked(1.0, 1.0)])
                }
                Density::Mixture(m) => Ok(m.clone()),
                other => Err(Error::InvalidParams(format!(
                    "cannot blend non-beta density {other}"
                ))),
            }
        };
        Ok(Density::Mixture(MixtureParams::blend(
            &as_mix(p)?,
            &as_mix(q)?,
            pi,
        )?))
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Beta(t) => write!(f, "beta:{},{}", t.a(), t.b()),
            Density::TargetF1 => f.write_str("f1"),
            Density::TargetF2 => f.write_str("f2"),
            Density::Uniform => f.write_str("uniform"),
            Density::Arcsine => f.write_str("arcsine"),
            Density::Mixture(m) => write!(f, "mix:{}", m.to_csv_row()),
        }
    }
}

/// Grammar: `f1` | `f2` | `uniform` | `arcsine` | `beta:A,B` | `mix:K,W1..WK,A1,B1,..,AK,BK`.
impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "f1" => return Ok(Density::TargetF1),
            "f2" => return Ok(Density::TargetF2),
            "uniform" => return Ok(Density::Uniform),
            "arcsine" => return Ok(Density::Arcsine),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("beta:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Parse(format!(
                    "beta spec needs two shapes, got `{rest}`"
                )));
            }
            let a = parse_f64(parts[0])?;
            let b = parse_f64(parts[1])?;
            return ComponentParams::new(a, b)
                .map(Density::Beta)
                .map_err(|e| Error::Parse(e.to_string()));
        }
        if let Some(rest) = s.strip_prefix("mix:") {
            return MixtureParams::from_csv_row(rest).map(Density::Mixture);
        }
        Err(Error::Parse(format!("unknown density spec `{s}`")))
    }
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: `{}`", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite number `{}`", s.trim())));
    }
    Ok(v)
}

/// Gamma(shape, 1) variate by Marsaglia–Tsang, with the `U^{1/shape}` boost
/// for shape < 1.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return sample_gamma(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.sample(Open01);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = sample_gamma(rng, a);
    let y = sample_gamma(rng, b);
    x / (x + y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, QuadratureSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn integral(d: &Density) -> f64 {
        let spec = QuadratureSpec::default().with_breakpoints(d.breakpoints());
        integrate(|x| d.pdf(x), &spec).unwrap()
    }

    // Kolmogorov–Smirnov statistic of a sample against a CDF.
    fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn beta_pdf_examples() {
        assert_eq!(beta_pdf(0.3, &ComponentParams::new(1.0, 1.0).unwrap()), 1.0);
        let t22 = ComponentParams::new(2.0, 2.0).unwrap();
        assert!((beta_pdf(0.5, &t22) - 1.5).abs() < 1e-13);
        assert_eq!(beta_pdf(0.0, &t22), 0.0);
        assert_eq!(beta_pdf(1.0, &t22), 0.0);
        // a = 1 endpoint value equals b
        let t15 = ComponentParams::new(1.0, 5.0).unwrap();
        assert!((t15.pdf(0.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn box_constraints() {
        assert!(ComponentParams::new(0.5, 2.0).is_err());
        assert!(ComponentParams::new(2.0, 51.0).is_err());
        assert!(ComponentParams::new(1.0, 50.0).is_ok());
    }

    #[test]
    fn targets() {
        assert_eq!(target_f1(0.5), 0.0);
        assert_eq!(target_f1(0.2), 1.25);
        assert_eq!(target_f2(0.5), 0.0);
        assert_eq!(target_f2(0.0), 2.0);
        assert_eq!(target_f2(1.0), 2.0);
    }

    #[test]
    fn every_density_integrates_to_one() {
        let dens = [
            Density::TargetF1,
            Density::TargetF2,
            Density::Uniform,
            Density::Beta(ComponentParams::new(2.0, 5.0).unwrap()),
            Density::Beta(ComponentParams::new(50.0, 50.0).unwrap()),
            Density::Beta(ComponentParams::new(1.0, 50.0).unwrap()),
        ];
        for d in &dens {
            assert!((integral(d) - 1.0).abs() < 1e-6, "{d}");
        }
        assert!((integral(&Density::Arcsine) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn beta_bounded_and_mode_matches() {
        for (a, b) in [
            (2.0, 5.0),
            (1.0, 3.0),
            (7.0, 1.0),
            (50.0, 50.0),
            (1.0, 1.0),
            (13.0, 4.5),
        ] {
            let t = ComponentParams::new(a, b).unwrap();
            let grid_max = (0..=10_000)
                .map(|i| t.pdf(i as f64 / 10_000.0))
                .fold(0.0, f64::max);
            assert!(grid_max.is_finite());
            assert!(grid_max <= t.sup() + 1e-9);
            // analytic mode value, not the grid max
            let mode_val = if a > 1.0 && b > 1.0 {
                let m = (a - 1.0) / (a + b - 2.0);
                beta_pdf_raw(m, a, b)
            } else {
                grid_max
            };
            assert!((t.sup() - mode_val).abs() < 1e-6, "({a},{b})");
        }
    }

    #[test]
    fn bounds_hold_on_grid() {
        let dens = [
            Density::TargetF1,
            Density::TargetF2,
            Density::Uniform,
            Density::Arcsine,
            Density::Beta(ComponentParams::new(3.0, 9.0).unwrap()),
        ];
        for d in &dens {
            for i in 1..1000 {
                let x = i as f64 / 1000.0;
                let v = d.pdf(x);
                assert!(
                    v >= 0.0 && v >= d.inf_bound() - 1e-12 && v <= d.sup_bound() + 1e-12,
                    "{d} at {x}"
                );
            }
        }
    }

    #[test]
    fn f2_sample_mean_and_uniform_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = Density::TargetF2.sample(&mut rng, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        let us = Density::Uniform.sample(&mut rng, 100_000);
        let frac = us.iter().filter(|&&u| u <= 0.25).count() as f64 / 1e5;
        assert!((frac - 0.25).abs() < 0.01);
    }

    #[test]
    fn f1_samples_avoid_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = Density::TargetF1.sample(&mut rng, 100_000);
        assert!(xs.iter().all(|&x| !(x > 0.4 && x < 0.6)));
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn ks_against_analytic_cdfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let f1_cdf = |x: f64| {
            if x <= 0.4 {
                1.25 * x
            } else if x < 0.6 {
                0.5
            } else {
                0.5 + 1.25 * (x - 0.6)
            }
        };
        let f2_cdf = |x: f64| {
            if x <= 0.5 {
                2.0 * x - 2.0 * x * x
            } else {
                0.5 + 2.0 * (x - 0.5) * (x - 0.5)
            }
        };
        let arc_cdf = |x: f64| 2.0 / PI * x.sqrt().asin();
        assert!(ks(Density::TargetF1.sample(&mut rng, n), f1_cdf) < 0.01);
        assert!(ks(Density::TargetF2.sample(&mut rng, n), f2_cdf) < 0.01);
        assert!(ks(Density::Arcsine.sample(&mut rng, n), arc_cdf) < 0.01);
        assert!(ks(Density::Uniform.sample(&mut rng, n), |x| x) < 0.01);

        // Beta(2,5) CDF by a fine Riemann-sum table
        let m = 200_000;
        let mut table = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for i in 0..m {
            let x = (i as f64 + 0.5) / m as f64;
            acc += 30.0 * x * (1.0 - x).powi(4) / m as f64;
            table.push(acc);
        }
        let beta_cdf = |x: f64| table[((x * m as f64).round() as usize).min(m)];
        let d = Density::Beta(ComponentParams::new(2.0, 5.0).unwrap());
        assert!(ks(d.sample(&mut rng, n), beta_cdf) < 0.01);
    }

    #[test]
    fn gamma_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for shape in [0.5, 1.0, 3.7] {
            let xs: Vec<f64> = (0..200_000)
                .map(|_| sample_gamma(&mut rng, shape))
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!(
                (mean - shape).abs() < 0.03 * shape.max(1.0),
                "shape {shape}: mean {mean}"
            );
            assert!(
                (var - shape).abs() < 0.06 * shape.max(1.0),
                "shape {shape}: var {var}"
            );
        }
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("f1".parse::<Density>().unwrap(), Density::TargetF1);
        assert_eq!(" uniform ".parse::<Density>().unwrap(), Density::Uniform);
        let b: Density = "beta:2,5".parse().unwrap();
        assert_eq!(b, Density::Beta(ComponentParams::new(2.0, 5.0).unwrap()));
        assert!("beta:2".parse::<Density>().is_err());
        assert!("beta:2,x".parse::<Density>().is_err());
        assert!("beta:0.5,0.5".parse::<Density>().is_err());
        assert!("gauss".parse::<Density>().is_err());
        let m: Density = "mix:2,0.25,0.75,2,5,5,2".parse().unwrap();
        assert_eq!(m.to_string(), "mix:2,0.25,0.75,2,5,5,2");
        assert_eq!(m.to_string().parse::<Density>().unwrap(), m);
    }
}
