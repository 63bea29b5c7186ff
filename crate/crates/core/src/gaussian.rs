//! Scalar Gaussian primitives.
//!
//! Everything downstream (closed-form curves, loss CDFs, the shuffle event
//! masses) ends up evaluating standard normal tails far from the mean, so the
//! functions here avoid `1 - Φ` subtractions and work in the log domain where
//! the linear value would underflow.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{check_positive, AccountingError, Result};

/// `0.5 * ln(2π)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Below this point `log_ncdf` uses the asymptotic Mills-ratio series.
const MILLS_SWITCH: f64 = -10.0;

/// Standard normal CDF.
pub fn ncdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, computed without cancellation.
pub fn nsf(x: f64) -> f64 {
    ncdf(-x)
}

/// Standard normal density.
pub fn npdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// `ln Φ(x)`, accurate deep into the left tail.
pub fn log_ncdf(x: f64) -> f64 {
    if x.is_nan() {
        f64::NAN
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x > 0.0 {
        (-nsf(x)).ln_1p()
    } else if x >= MILLS_SWITCH {
        ncdf(x).ln()
    } else {
        -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + mills_series(x).ln()
    }
}

/// `ln(1 - Φ(x))`.
pub fn log_nsf(x: f64) -> f64 {
    log_ncdf(-x)
}

/// `Φ(x) * sqrt(2π) * |x| * exp(x²/2)` for `x ≤ -10`, i.e. the bracketed
/// factor of the asymptotic expansion `1 - 1/x² + 3/x⁴ - 15/x⁶ + ...`.
fn mills_series(x: f64) -> f64 {
    let inv_x2 = 1.0 / (x * x);
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..64 {
        let next = -term * (2 * k - 1) as f64 * inv_x2;
        // the series is asymptotic; stop once terms stop shrinking
        if next.abs() >= term.abs() || next.abs() < 1e-18 {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        sum += next;
        term = next;
    }
    sum
}

/// Inverse of the standard normal CDF.
///
/// Starts from Acklam's rational approximation and polishes with Newton steps
/// on `ln Φ`, which keeps the left tail accurate down to subnormal `p`.
pub fn ncdf_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AccountingError::InvalidParameter {
            name: "p",
            value: p,
            reason: "must lie in the open interval (0, 1)",
        });
    }
    if p > 0.5 {
        // 1 - p is exact here
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let mut x = acklam(p);
    let target = p.ln();
    for _ in 0..8 {
        let lc = log_ncdf(x);
        // d/dx ln Φ(x) = φ(x) / Φ(x)
        let slope = (-0.5 * x * x - LN_SQRT_2PI - lc).exp();
        let step = (lc - target) / slope;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[allow(clippy::excessive_precision)]
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Standard normal mass of the interval `(lo, hi]`.
///
/// Differences are taken on whichever side of zero keeps both tail values
/// small, so tiny interval masses far in either tail keep relative accuracy.
pub fn normal_interval_mass(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let mass = if lo >= 0.0 {
        nsf(lo) - nsf(hi)
    } else if hi <= 0.0 {
        ncdf(hi) - ncdf(lo)
    } else {
        1.0 - ncdf(lo) - nsf(hi)
    };
    mass.max(0.0)
}

/// The event `{w : aᵀw − b ≥ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: Vec<f64>,
    offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.is_empty() {
            return Err(AccountingError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if !normal.iter().all(|a| a.is_finite()) || normal.iter().all(|&a| a == 0.0) {
            return Err(AccountingError::InvalidParameter {
                name: "normal",
                value: 0.0,
                reason: "needs at least one nonzero entry and finite values",
            });
        }
        if !offset.is_finite() {
            return Err(AccountingError::InvalidParameter {
                name: "offset",
                value: offset,
                reason: "must be finite",
            });
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dimension(&self) -> usize {
        self.normal.len()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        let dot: f64 = self.normal.iter().zip(w).map(|(a, x)| a * x).sum();
        dot - self.offset >= 0.0
    }

    /// `(âᵀμ − b/‖a‖) / σ` with `â = a/‖a‖`; the standardized distance of the
    /// mean into the halfspace.
    fn standardized_margin(&self, mu: &[f64], sigma: f64) -> Result<f64> {
        if mu.len() != self.dimension() {
            return Err(AccountingError::DimensionMismatch {
                expected: self.dimension(),
                got: mu.len(),
            });
        }
        check_positive("sigma", sigma)?;
        let scale = self.normal.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let norm = scale
            * self
                .normal
                .iter()
                .map(|a| (a / scale) * (a / scale))
                .sum::<f64>()
                .sqrt();
        let projection: f64 = self.normal.iter().zip(mu).map(|(a, m)| (a / norm) * m).sum();
        Ok((projection - self.offset / norm) / sigma)
    }
}

/// Mass of `hs` under the isotropic Gaussian `N(mu, sigma² I)`.
pub fn halfspace_mass(mu: &[f64], sigma: f64, hs: &Halfspace) -> Result<f64> {
    Ok(ncdf(hs.standardized_margin(mu, sigma)?))
}

/// Natural log of [`halfspace_mass`], finite even when the mass underflows.
pub fn log_halfspace_mass(mu: &[f64], sigma: f64, hs: &Halfspace) -> Result<f64> {
    Ok(log_ncdf(hs.standardized_margin(mu, sigma)?))
}
