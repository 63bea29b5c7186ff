//! Closed-form privacy curve of ABLQ with the deterministic batch sampler.
//!
//! Each record is touched exactly once, so the curve is that of a single
//! Gaussian mechanism with sensitivity 1 regardless of `T`:
//! `δ_D(ε) = Φ(−σε + 1/(2σ)) − e^ε Φ(−σε − 1/(2σ))`.

use crate::accounting::{invert_curve, BoundFlag, BoundKind, Mechanism, Method, PrivacyBound, DEFAULT_EPSILON_BRACKET};
use crate::error::{check_positive, AccountingError, Result};
use crate::gaussian::log_ncdf;

/// `log δ_D(ε)`; `-inf` when the curve is exactly zero in floating point.
pub fn log_delta_deterministic(sigma: f64, epsilon: f64) -> f64 {
    let a = -sigma * epsilon + 0.5 / sigma;
    let b = a - 1.0 / sigma;
    let la = log_ncdf(a);
    let lb = log_ncdf(b);
    let r = epsilon + lb - la;
    if r >= 0.0 {
        return f64::NEG_INFINITY;
    }
    la + (-r.exp_m1()).ln()
}

/// `δ_D(ε)` as an exact bound.
///
/// `sigma` must be positive; out-of-domain `epsilon` is treated as 0 below.
pub fn delta_deterministic(sigma: f64, epsilon: f64) -> PrivacyBound {
    let delta = log_delta_deterministic(sigma, epsilon).exp().clamp(0.0, 1.0);
    PrivacyBound::new(epsilon, delta, BoundKind::Exact, Mechanism::Deterministic, Method::ClosedForm)
}

/// `ε_D(δ)` by bisection on the closed form.
pub fn eps_deterministic(sigma: f64, delta: f64) -> Result<PrivacyBound> {
    check_positive("sigma", sigma)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountingError::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "must lie in (0, 1)",
        });
    }
    let log_target = delta.ln();
    if log_delta_deterministic(sigma, 0.0) <= log_target {
        return Ok(PrivacyBound::new(0.0, delta, BoundKind::Exact, Mechanism::Deterministic, Method::ClosedForm)
            .with_flag(BoundFlag::EpsilonAtFloor));
    }
    let eps = invert_curve(
        |e| delta_deterministic(sigma, e).delta,
        delta,
        DEFAULT_EPSILON_BRACKET,
        BoundKind::Exact,
    )?;
    Ok(PrivacyBound::new(eps, delta, BoundKind::Exact, Mechanism::Deterministic, Method::ClosedForm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ncdf;

    #[test]
    fn reference_values() {
        let d = delta_deterministic(0.4, 4.0);
        assert!((d.delta - 0.244).abs() < 5e-4, "{}", d.delta);
        assert_eq!(d.kind, BoundKind::Exact);

        let e = eps_deterministic(0.5, 1e-6).unwrap();
        assert!((e.epsilon - 10.997).abs() < 0.01, "{}", e.epsilon);
        let e = eps_deterministic(0.7, 1e-5).unwrap();
        assert!((e.epsilon - 6.652).abs() < 0.01, "{}", e.epsilon);

        let d = delta_deterministic(0.5, 10.997).delta;
        assert!((d / 1e-6 - 1.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn epsilon_zero_is_total_variation() {
        for &s in &[0.3, 0.7, 2.0, 5.0] {
            let d = delta_deterministic(s, 0.0).delta;
            assert!((d - (2.0 * ncdf(0.5 / s) - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn floor_returns_zero_with_flag() {
        let d0 = delta_deterministic(0.5, 0.0).delta;
        let e = eps_deterministic(0.5, d0).unwrap();
        assert_eq!(e.epsilon, 0.0);
        assert_eq!(e.flag, Some(BoundFlag::EpsilonAtFloor));
        let e = eps_deterministic(0.5, 0.999).unwrap();
        assert_eq!(e.epsilon, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(eps_deterministic(0.0, 1e-5).is_err());
        assert!(eps_deterministic(1.0, 0.0).is_err());
        assert!(eps_deterministic(1.0, 1.0).is_err());
    }

    #[test]
    fn large_epsilon_stays_finite_and_positive() {
        let l = log_delta_deterministic(0.4, 15.0);
        assert!(l.is_finite() && l < -14.0, "{l}");
        let l50 = log_delta_deterministic(0.3, 50.0);
        assert!(l50.is_finite() && l50 < l);
        assert!(delta_deterministic(0.4, 1e4).delta >= 0.0);
    }

    #[test]
    fn monotone_in_epsilon_and_sigma() {
        let sigmas: Vec<f64> = (0..=47).map(|i| 0.3 + 0.1 * i as f64).collect();
        let eps: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
        for &s in &sigmas {
            let mut prev = f64::INFINITY;
            for &e in &eps {
                let l = log_delta_deterministic(s, e);
                assert!(l < prev, "σ={s} ε={e}");
                prev = l;
            }
        }
        for &e in &eps {
            let mut prev = f64::INFINITY;
            for &s in &sigmas {
                let l = log_delta_deterministic(s, e);
                assert!(l < prev, "σ={s} ε={e}");
                prev = l;
            }
        }
    }

    #[test]
    fn lipschitz_in_exp_epsilon() {
        for &s in &[0.3, 0.5, 1.0, 2.0] {
            let grid: Vec<f64> = (0..=100).map(|i| 0.2 * i as f64).collect();
            for i in 0..grid.len() {
                for j in (i + 1)..grid.len() {
                    let (e1, e2) = (grid[i], grid[j]);
                    let diff = delta_deterministic(s, e1).delta - delta_deterministic(s, e2).delta;
                    assert!(diff <= e2.exp() - e1.exp() + 1e-15);
                }
            }
        }
    }
}
