//! Weighted beta maximum likelihood over a box, by projected Newton.
//!
//! The objective, normalized by the total weight `W0`, is
//! `w(a, b) = (a − 1) m₁ + (b − 1) m₂ + ln Γ(a + b) − ln Γ(a) − ln Γ(b)`
//! with `m₁ = Σ wᵢ ln zᵢ / W0` and `m₂ = Σ wᵢ ln(1 − zᵢ) / W0`. It is
//! strictly concave, so Newton with a trigamma Hessian converges from any
//! start inside the box.

use crate::densities::{ComponentParams, ParamBox};
use crate::numerics::{digamma_unchecked, ln_gamma_unchecked, trigamma_unchecked};

/// Sufficient statistics of a weighted beta sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBetaStats {
    pub mass: f64,
    pub mean_ln_x: f64,
    pub mean_ln_1mx: f64,
}

impl WeightedBetaStats {
    /// Statistics from weights and precomputed logs. `mean_*` are zero when the mass is zero.
    pub fn from_logs<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64, f64)> + 'a,
    {
        let (mut mass, mut sx, mut s1x) = (0.0, 0.0, 0.0);
        for (w, lx, l1x) in items {
            mass += w;
            sx += w * lx;
            s1x += w * l1x;
        }
        Self::from_sums(mass, sx, s1x)
    }

    /// From `Σ wᵢ`, `Σ wᵢ ln zᵢ` and `Σ wᵢ ln(1 − zᵢ)`.
    pub fn from_sums(mass: f64, sx: f64, s1x: f64) -> Self {
        if mass > 0.0 {
            Self {
                mass,
                mean_ln_x: sx / mass,
                mean_ln_1mx: s1x / mass,
            }
        } else {
            Self {
                mass,
                mean_ln_x: 0.0,
                mean_ln_1mx: 0.0,
            }
        }
    }

    pub fn from_sample(weights: &[f64], zs: &[f64]) -> Self {
        Self::from_logs(
            weights
                .iter()
                .zip(zs)
                .map(|(&w, &z)| (w, z.ln(), (1.0 - z).ln())),
        )
    }

    /// Normalized objective `w(a, b)`.
    pub fn objective(&self, a: f64, b: f64) -> f64 {
        (a - 1.0) * self.mean_ln_x + (b - 1.0) * self.mean_ln_1mx + ln_gamma_unchecked(a + b)
            - ln_gamma_unchecked(a)
            - ln_gamma_unchecked(b)
    }

    pub fn gradient(&self, a: f64, b: f64) -> [f64; 2] {
        let ds = digamma_unchecked(a + b);
        [
            self.mean_ln_x + ds - digamma_unchecked(a),
            self.mean_ln_1mx + ds - digamma_unchecked(b),
        ]
    }

    fn hessian(&self, a: f64, b: f64) -> [[f64; 2]; 2] {
        let ts = trigamma_unchecked(a + b);
        [
            [ts - trigamma_unchecked(a), ts],
            [ts, ts - trigamma_unchecked(b)],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    /// Projected gradient sup-norm is within tolerance.
    Converged,
    /// No step could improve the objective any further in floating point.
    Stalled,
    /// Iteration budget exhausted.
    MaxIters,
    /// Weight mass below 1e-12; the initial value was returned untouched.
    NoMass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMleOutcome {
    pub theta: ComponentParams,
    pub iterations: usize,
    pub status: NewtonStatus,
}

const MIN_MASS: f64 = 1e-12;
const COND_LIMIT: f64 = 1e12;

// gradient components that may move: not pinned at a bound with an outward gradient
fn free_mask(x: [f64; 2], g: [f64; 2], bounds: &ParamBox) -> [bool; 2] {
    let mut free = [true; 2];
    for i in 0..2 {
        if (x[i] <= bounds.min && g[i] < 0.0) || (x[i] >= bounds.max && g[i] > 0.0) {
            free[i] = false;
        }
    }
    free
}

fn projected_norm(g: [f64; 2], free: [bool; 2]) -> f64 {
    (0..2)
        .filter(|&i| free[i])
        .map(|i| g[i].abs())
        .fold(0.0, f64::max)
}

/// Maximizes the weighted beta log-likelihood over `bounds`², starting at `init`.
pub fn maximize_weighted_beta(
    stats: &WeightedBetaStats,
    init: &ComponentParams,
    bounds: &ParamBox,
    max_iters: usize,
    tol: f64,
) -> BetaMleOutcome {
    if !(stats.mass >= MIN_MASS) {
        return BetaMleOutcome {
            theta: *init,
            iterations: 0,
            status: NewtonStatus::NoMass,
        };
    }
    let mut x = [bounds.clamp(init.a()), bounds.clamp(init.b())];
    let mut fx = stats.objective(x[0], x[1]);
    let finish = |x: [f64; 2], iterations, status| BetaMleOutcome {
        theta: ComponentParams::unchecked(x[0], x[1]),
        iterations,
        status,
    };

    for it in 0..max_iters {
        let g = stats.gradient(x[0], x[1]);
        let free = free_mask(x, g, bounds);
        let gnorm = projected_norm(g, free);
        if gnorm <= tol || free == [false, false] {
            return finish(x, it, NewtonStatus::Converged);
        }
        let h = stats.hessian(x[0], x[1]);
        let dir = match newton_direction(h, g, free) {
            Some(d) => d,
            None => {
                let (y, fy) = coordinate_bisection(stats, x, bounds);
                if fy < fx {
                    return finish(x, it, NewtonStatus::Stalled);
                }
                x = y;
                fx = fy;
                continue;
            }
        };

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [
                if free[0] {
                    bounds.clamp(x[0] + t * dir[0])
                } else {
                    x[0]
                },
                if free[1] {
                    bounds.clamp(x[1] + t * dir[1])
                } else {
                    x[1]
                },
            ];
            let fc = stats.objective(cand[0], cand[1]);
            if fc > fx {
                accepted = Some((cand, fc));
                break;
            }
            // near the optimum objective differences drown in rounding;
            // accept a step that shrinks the projected gradient instead
            if fc >= fx - 4.0 * f64::EPSILON * fx.abs().max(1.0) {
                let gc = stats.gradient(cand[0], cand[1]);
                if projected_norm(gc, free_mask(cand, gc, bounds)) < gnorm {
                    accepted = Some((cand, fc.max(fx)));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                if cand == x {
                    return finish(x, it + 1, NewtonStatus::Stalled);
                }
                x = cand;
                fx = fc;
            }
            None => return finish(x, it + 1, NewtonStatus::Stalled),
        }
    }
    let g = stats.gradient(x[0], x[1]);
    let status = if projected_norm(g, free_mask(x, g, bounds)) <= tol {
        NewtonStatus::Converged
    } else {
        NewtonStatus::MaxIters
    };
    finish(x, max_iters, status)
}

// Newton ascent direction on the free coordinates; None if the Hessian block
// is not safely negative definite.
fn newton_direction(h: [[f64; 2]; 2], g: [f64; 2], free: [bool; 2]) -> Option<[f64; 2]> {
    match free {
        [true, true] => {
            let (p, q, r) = (h[0][0], h[0][1], h[1][1]);
            let tr = p + r;
            let det = p * r - q * q;
            let disc = ((p - r) * (p - r) / 4.0 + q * q).sqrt();
            let (l1, l2) = (tr / 2.0 - disc, tr / 2.0 + disc);
            if !(l2 < 0.0) || l1.abs() / l2.abs() > COND_LIMIT || det == 0.0 {
                return None;
            }
            // d = −H⁻¹ g
            Some([-(r * g[0] - q * g[1]) / det, -(-q * g[0] + p * g[1]) / det])
        }
        [true, false] if h[0][0] < 0.0 => Some([-g[0] / h[0][0], 0.0]),
        [false, true] if h[1][1] < 0.0 => Some([0.0, -g[1] / h[1][1]]),
        _ => None,
    }
}

// Block coordinate ascent with bisection on each partial derivative.
fn coordinate_bisection(
    stats: &WeightedBetaStats,
    mut x: [f64; 2],
    bounds: &ParamBox,
) -> ([f64; 2], f64) {
    for _sweep in 0..2000 {
        let before = x;
        for i in 0..2 {
            let partial = |v: f64| {
                let mut y = x;
                y[i] = v;
                stats.gradient(y[0], y[1])[i]
            };
            x[i] = if partial(bounds.min) <= 0.0 {
                bounds.min
            } else if partial(bounds.max) >= 0.0 {
                bounds.max
            } else {
                let (mut lo, mut hi) = (bounds.min, bounds.max);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if partial(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
        }
        if (x[0] - before[0]).abs() < 1e-14 && (x[1] - before[1]).abs() < 1e-14 {
            break;
        }
    }
    (x, stats.objective(x[0], x[1]))
}
