//! Analytic lower bounds: the shuffle threshold events `E_C`, the Poisson
//! halfspace event, and total-variation comparisons.

use rayon::prelude::*;

use crate::accounting::{invert_curve, AccountingConfig, BoundFlag, BoundKind, Mechanism, Method, PrivacyBound, DEFAULT_EPSILON_BRACKET};
use crate::error::{check_positive, AccountingError, Result};
use crate::gaussian::{log_ncdf, log_nsf, ncdf, Halfspace};
use crate::numeric::log_add_exp;
use crate::pld::{PldOptions, PoissonPldAccountant};

/// Grid of thresholds `C` for the events `E_C = {w : max_t w_t ≥ C}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuffleBoundParams {
    pub c_min: f64,
    pub c_max: f64,
    pub c_step: f64,
    /// Golden-section search around the best grid point.
    pub refine: bool,
}

impl Default for ShuffleBoundParams {
    fn default() -> Self {
        Self {
            c_min: 0.0,
            c_max: 100.0,
            c_step: 0.01,
            refine: false,
        }
    }
}

impl ShuffleBoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min.is_finite() && self.c_max.is_finite() && self.c_min < self.c_max) {
            return Err(AccountingError::InvalidParameter {
                name: "c_max",
                value: self.c_max,
                reason: "must be finite and exceed c_min",
            });
        }
        check_positive("c_step", self.c_step)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.c_max - self.c_min) / self.c_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.c_min + i as f64 * self.c_step).collect()
    }
}

/// `ln(1 − e^x)` for `x ≤ 0`.
fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(−ln Φ(x))`, kept finite far into the right tail.
fn log_neg_log_ncdf(x: f64) -> f64 {
    if x < 5.0 {
        (-log_ncdf(x)).ln()
    } else {
        let ls = log_nsf(x);
        ls + 0.5 * ls.exp()
    }
}

/// `ln(1 − Φ((C−s)/σ)·Φ(C/σ)^{T−1})`.
fn log_event_mass(sigma: f64, steps: u64, c: f64, shift: f64) -> f64 {
    let head = log_neg_log_ncdf((c - shift) / sigma);
    let l = if steps == 1 {
        head
    } else {
        log_add_exp(head, ((steps - 1) as f64).ln() + log_neg_log_ncdf(c / sigma))
    };
    if l < -20.0 {
        l - 0.5 * l.exp()
    } else {
        log1mexp(-l.exp())
    }
}

/// `(ln P_S(E_C), ln Q_S(E_C))`.
fn log_event_masses(sigma: f64, steps: u64, c: f64) -> (f64, f64) {
    (log_event_mass(sigma, steps, c, 2.0), log_event_mass(sigma, steps, c, 1.0))
}

/// `(P_S(E_C), Q_S(E_C))` for the shuffle dominating pair.
pub fn shuffle_event_masses(sigma: f64, steps: u64, c: f64) -> (f64, f64) {
    let (lp, lq) = log_event_masses(sigma, steps, c);
    (lp.exp(), lq.exp())
}

/// `P_S(E_C) − e^ε Q_S(E_C)` clamped at 0, as `p·(1 − e^{ε + ln q − ln p})`.
fn event_gap(sigma: f64, steps: u64, epsilon: f64, c: f64) -> f64 {
    let (lp, lq) = log_event_masses(sigma, steps, c);
    if lp == f64::NEG_INFINITY {
        return 0.0;
    }
    let r = epsilon + lq - lp;
    if r >= 0.0 {
        0.0
    } else {
        lp.exp() * -r.exp_m1()
    }
}

fn best_on_grid(sigma: f64, steps: u64, epsilon: f64, grid: &[f64]) -> (f64, f64) {
    grid.par_iter()
        .map(|&c| (event_gap(sigma, steps, epsilon, c), c))
        .reduce(
            || (f64::NEG_INFINITY, f64::INFINITY),
            |a, b| {
                if a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1) {
                    a
                } else {
                    b
                }
            },
        )
}

fn golden_refine(sigma: f64, steps: u64, epsilon: f64, center: f64, width: f64, start: (f64, f64)) -> (f64, f64) {
    let f = |c: f64| event_gap(sigma, steps, epsilon, c);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (center - width, center + width);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    let cand = if f1 >= f2 { (f1, x1) } else { (f2, x2) };
    if cand.0 > start.0 {
        cand
    } else {
        start
    }
}

fn check_shuffle_inputs(sigma: f64, steps: u64, params: &ShuffleBoundParams) -> Result<()> {
    check_positive("sigma", sigma)?;
    if steps == 0 {
        return Err(AccountingError::InvalidParameter {
            name: "steps",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    params.validate()
}

/// Lower bound `max_C P_S(E_C) − e^ε Q_S(E_C)` on `δ_S(ε)`, with the
/// maximizing `C` (ties go to the smaller `C`).
pub fn shuffle_delta_lower(sigma: f64, steps: u64, epsilon: f64, params: &ShuffleBoundParams) -> Result<PrivacyBound> {
    check_shuffle_inputs(sigma, steps, params)?;
    let grid = params.grid();
    let mut best = best_on_grid(sigma, steps, epsilon, &grid);
    if params.refine && best.0 > 0.0 {
        best = golden_refine(sigma, steps, epsilon, best.1, params.c_step, best);
    }
    let mut b = PrivacyBound::new(epsilon, best.0.max(0.0), BoundKind::Lower, Mechanism::Shuffle, Method::EcBound);
    b.argmax_c = Some(best.1);
    Ok(b)
}

/// Lower bound on `ε_S(δ)`: the largest bracketed ε whose `E_C` bound still
/// reaches `delta`, or 0 when none does.
pub fn shuffle_eps_lower(sigma: f64, steps: u64, delta: f64, params: &ShuffleBoundParams) -> Result<PrivacyBound> {
    check_shuffle_inputs(sigma, steps, params)?;
    let curve = |e: f64| shuffle_delta_lower(sigma, steps, e, params).map(|b| b.delta).unwrap_or(0.0);
    let eps = invert_curve(curve, delta, DEFAULT_EPSILON_BRACKET, BoundKind::Lower)?;
    let at = shuffle_delta_lower(sigma, steps, eps, params)?;
    let mut b = PrivacyBound::new(eps, delta, BoundKind::Lower, Mechanism::Shuffle, Method::EcBound);
    b.argmax_c = at.argmax_c;
    if at.delta < delta {
        b.flag = Some(BoundFlag::EpsilonAtFloor);
    }
    Ok(b)
}

/// The event `{w : Σ w_t ≥ (ε + ln 2 + T ln T)σ² + T/2}` on which the Poisson
/// pair's loss is at least `ε + ln 2`.
pub fn bad_event_halfspace(sigma: f64, steps: u64, epsilon: f64) -> Result<Halfspace> {
    check_halfspace_inputs(sigma, steps)?;
    let t = steps as f64;
    Halfspace::new(vec![1.0; steps as usize], (epsilon + std::f64::consts::LN_2 + t * t.ln()) * sigma * sigma + 0.5 * t)
}

fn check_halfspace_inputs(sigma: f64, steps: u64) -> Result<()> {
    check_positive("sigma", sigma)?;
    if steps < 2 {
        return Err(AccountingError::InvalidParameter {
            name: "steps",
            value: steps as f64,
            reason: "the halfspace bound needs at least 2 steps",
        });
    }
    Ok(())
}

/// `ln(½ Φ(−εσ/√T − (T ln T + ln 2)σ/√T − √T/(2σ)))`.
pub fn log_poisson_halfspace_delta_lower(sigma: f64, steps: u64, epsilon: f64) -> Result<f64> {
    check_halfspace_inputs(sigma, steps)?;
    let t = steps as f64;
    let rt = t.sqrt();
    let z = -(epsilon + std::f64::consts::LN_2 + t * t.ln()) * sigma / rt - rt / (2.0 * sigma);
    Ok(log_ncdf(z) - std::f64::consts::LN_2)
}

/// Lower bound on `δ_P(ε)` from the halfspace event, for `q = 1/T`.
pub fn poisson_halfspace_delta_lower(sigma: f64, steps: u64, epsilon: f64) -> Result<PrivacyBound> {
    let ld = log_poisson_halfspace_delta_lower(sigma, steps, epsilon)?;
    Ok(PrivacyBound::new(epsilon, ld.exp(), BoundKind::Lower, Mechanism::Poisson, Method::Halfspace))
}

/// Lower bound on `ε_P(δ)`: the largest bracketed ε whose halfspace bound still
/// reaches `delta`, or 0 when none does.
pub fn poisson_halfspace_eps_lower(sigma: f64, steps: u64, delta: f64) -> Result<PrivacyBound> {
    check_halfspace_inputs(sigma, steps)?;
    let curve = |e: f64| log_poisson_halfspace_delta_lower(sigma, steps, e).map(f64::exp).unwrap_or(0.0);
    let eps = invert_curve(curve, delta, DEFAULT_EPSILON_BRACKET, BoundKind::Lower)?;
    let mut b = PrivacyBound::new(eps, delta, BoundKind::Lower, Mechanism::Poisson, Method::Halfspace);
    if curve(eps) < delta {
        b.flag = Some(BoundFlag::EpsilonAtFloor);
    }
    Ok(b)
}

/// Total-variation (ε = 0) comparison of the deterministic and Poisson samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvReport {
    /// `2Φ(1/(2σ)) − 1`.
    pub tv_deterministic: f64,
    /// `1 − (1 − tv_deterministic/T)^T`.
    pub tv_poisson_upper: f64,
    /// Pessimistic PLD `δ_P(0)`.
    pub pld_tv_poisson: f64,
    pub within_coupling_bound: bool,
    pub strictly_below_deterministic: bool,
}

pub fn tv_comparison(sigma: f64, steps: u64) -> Result<TvReport> {
    tv_comparison_with(sigma, steps, PldOptions::default())
}

pub fn tv_comparison_with(sigma: f64, steps: u64, options: PldOptions) -> Result<TvReport> {
    let config = AccountingConfig::new(sigma, steps)?;
    let tv_d = 2.0 * ncdf(0.5 / sigma) - 1.0;
    let t = steps as f64;
    let tv_p_upper = -(t * (-tv_d / t).ln_1p()).exp_m1();
    let pld = PoissonPldAccountant::new(config, options)?.delta(0.0).0.delta;
    Ok(TvReport {
        tv_deterministic: tv_d,
        tv_poisson_upper: tv_p_upper,
        pld_tv_poisson: pld,
        within_coupling_bound: pld <= tv_p_upper + 1e-9,
        strictly_below_deterministic: steps == 1 || pld < tv_d,
    })
}
