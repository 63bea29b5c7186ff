//! Single-step privacy loss of the Poisson-subsampled Gaussian pair
//! `A = (1−q)N(0,σ²) + qN(1,σ²)`, `B = N(0,σ²)`.

use serde::{Deserialize, Serialize};

use super::{DiscretePld, Rounding};
use crate::error::{check_positive, check_probability, AccountingError, Result};
use crate::gaussian::{ncdf_inv, normal_interval_mass};
use crate::numeric::log_add_exp;

/// Largest single-step grid the discretizer will allocate.
const MAX_STEP_POINTS: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Loss `ln(A/B)` under `A`.
    Add,
    /// Loss `ln(B/A)` under `B`.
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsampledGaussianStep {
    sigma: f64,
    q: f64,
    direction: Direction,
}

impl SubsampledGaussianStep {
    pub fn new(sigma: f64, q: f64, direction: Direction) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_probability("q", q)?;
        Ok(Self { sigma, q, direction })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// `L(x) = ln(A(x)/B(x)) = ln(1 − q + q·e^{(2x−1)/(2σ²)})`.
    pub fn add_loss(&self, x: f64) -> f64 {
        let u = (2.0 * x - 1.0) / (2.0 * self.sigma * self.sigma);
        if self.q == 1.0 {
            u
        } else {
            log_add_exp((-self.q).ln_1p(), self.q.ln() + u)
        }
    }

    /// Inverse of [`add_loss`](Self::add_loss): `x(ℓ) = σ² ln((e^ℓ − (1−q))/q) + 1/2`,
    /// `-inf` when `ℓ ≤ ln(1−q)`.
    pub fn add_loss_inverse(&self, loss: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        if self.q == 1.0 {
            return s2 * loss + 0.5;
        }
        if loss == f64::INFINITY {
            return f64::INFINITY;
        }
        // ln(e^ℓ − (1−q))
        let log_excess = if loss > 0.0 {
            loss + (-(1.0 - self.q) * (-loss).exp()).ln_1p()
        } else {
            let v = loss.exp_m1() + self.q;
            if v <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v.ln()
        };
        s2 * (log_excess - self.q.ln()) + 0.5
    }

    /// Mass of `(a, b]` under `A`.
    fn mass_a(&self, a: f64, b: f64) -> f64 {
        let s = self.sigma;
        let base = normal_interval_mass(a / s, b / s);
        if self.q == 1.0 {
            return normal_interval_mass((a - 1.0) / s, (b - 1.0) / s);
        }
        (1.0 - self.q) * base + self.q * normal_interval_mass((a - 1.0) / s, (b - 1.0) / s)
    }

    /// Mass of `(a, b]` under `B`.
    fn mass_b(&self, a: f64, b: f64) -> f64 {
        normal_interval_mass(a / self.sigma, b / self.sigma)
    }

    /// (numerator, denominator) masses of the `x`-interval `(a, b]`.
    fn masses(&self, a: f64, b: f64) -> (f64, f64) {
        match self.direction {
            Direction::Add => (self.mass_a(a, b), self.mass_b(a, b)),
            Direction::Remove => (self.mass_b(a, b), self.mass_a(a, b)),
        }
    }

    /// The `x`-interval whose losses fall in `(lo, hi]`.
    fn loss_interval_to_x(&self, lo: f64, hi: f64) -> (f64, f64) {
        match self.direction {
            Direction::Add => (self.add_loss_inverse(lo), self.add_loss_inverse(hi)),
            Direction::Remove => (self.add_loss_inverse(-hi), self.add_loss_inverse(-lo)),
        }
    }
}

/// Exact CDF of the privacy loss under the numerator distribution.
pub fn step_loss_cdf(step: &SubsampledGaussianStep, loss: f64) -> f64 {
    let (a, b) = step.loss_interval_to_x(f64::NEG_INFINITY, loss);
    step.masses(a, b).0.clamp(0.0, 1.0)
}

/// Discretizes one step onto the grid `{i·h}`.
///
/// Pessimistic rounding splits each bucket's mass between its two end points
/// so that both the numerator and denominator masses are preserved; losses
/// below the grid go to its first point and losses above it to infinity.
/// Optimistic rounding moves each bucket to its lower end point and drops
/// both tails.
pub fn discretize_step(step: &SubsampledGaussianStep, h: f64, rounding: Rounding, tail_mass: f64) -> Result<DiscretePld> {
    check_positive("grid_spacing", h)?;
    if !(tail_mass > 0.0 && tail_mass <= 1e-6) {
        return Err(AccountingError::InvalidParameter {
            name: "tail_mass",
            value: tail_mass,
            reason: "must lie in (0, 1e-6]",
        });
    }
    let sigma = step.sigma;
    let z = -ncdf_inv(tail_mass)?;
    let (loss_lo, loss_hi) = match step.direction {
        Direction::Add => {
            let lo = if step.q < 1.0 { (-step.q).ln_1p() } else { step.add_loss(-sigma * z) };
            (lo, step.add_loss(1.0 + sigma * z))
        }
        Direction::Remove => {
            let hi = if step.q < 1.0 { -(-step.q).ln_1p() } else { -step.add_loss(-sigma * z) };
            (-step.add_loss(sigma * z), hi)
        }
    };
    let i0 = (loss_lo / h).floor();
    let i1 = (loss_hi / h).ceil();
    let points = i1 - i0 + 1.0;
    if !(points.is_finite() && points <= MAX_STEP_POINTS as f64) {
        return Err(AccountingError::GridOverflow {
            needed: if points.is_finite() { points as usize } else { usize::MAX },
            cap: MAX_STEP_POINTS,
        });
    }
    let i0 = i0 as i64;
    let n = points as usize;

    let losses: Vec<f64> = (0..n).map(|k| (i0 + k as i64) as f64 * h).collect();
    let xs: Vec<(f64, f64)> = std::iter::once(f64::NEG_INFINITY)
        .chain(losses.iter().copied())
        .chain(std::iter::once(f64::INFINITY))
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| step.loss_interval_to_x(w[0], w[1]))
        .collect();
    // xs[0] covers losses below the grid, xs[k] for 1 ≤ k < n the bucket
    // (ℓ_{k−1}, ℓ_k], xs[n] losses above the grid.
    let mut masses = vec![0.0; n];
    let (below, _) = step.masses(xs[0].0, xs[0].1);
    let (above, _) = step.masses(xs[n].0, xs[n].1);
    let one_minus_e_neg_h = -(-h).exp_m1();
    for k in 1..n {
        let (p, qm) = step.masses(xs[k].0, xs[k].1);
        if p == 0.0 {
            continue;
        }
        match rounding {
            Rounding::Pessimistic => {
                let lower_loss = losses[k - 1];
                let up = ((p - qm * lower_loss.exp()) / one_minus_e_neg_h).clamp(0.0, p);
                masses[k] += up;
                masses[k - 1] += p - up;
            }
            Rounding::Optimistic => masses[k - 1] += p,
        }
    }
    let infinity_mass = match rounding {
        Rounding::Pessimistic => {
            masses[0] += below;
            above
        }
        Rounding::Optimistic => 0.0,
    };
    Ok(DiscretePld::from_parts(h, i0, masses, infinity_mass, rounding))
}
