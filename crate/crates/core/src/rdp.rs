//! Rényi-DP accountant for ABLQ with Poisson batch sampling.

use rayon::prelude::*;

use crate::accounting::{AccountingConfig, Adjacency, BoundFlag, BoundKind, Mechanism, Method, PrivacyBound};
use crate::error::{check_positive, check_probability, AccountingError, Result};
use crate::gaussian::LN_SQRT_2PI;
use crate::numeric::{log_add_exp, log_sum_exp, NeumaierSum};

const QUAD_REL_TOL: f64 = 1e-12;
/// Panels whose log-integrand stays this far below the peak are skipped.
const NEGLIGIBLE_LOG: f64 = 80.0;
const MAX_DEPTH: u32 = 24;

/// Default Rényi orders: 1.01..10.99 in steps of 0.01, 11..256, 288..1024 in steps of 32.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = (101..1100).map(|i| i as f64 / 100.0).collect();
    orders.extend((11..=256).map(|i| i as f64));
    orders.extend((288..=1024).step_by(32).map(|i| i as f64));
    orders
}

/// `ln((1+y)^α − 1 − αy)` where `ln(1+y) = loss`.
fn log_excess(alpha: f64, loss: f64) -> f64 {
    let y = loss.exp_m1();
    if (alpha * y).abs() < 0.5 {
        // Σ_{k≥2} C(α,k) y^k
        let mut coef = alpha;
        let mut pow = y;
        let mut acc = NeumaierSum::default();
        for k in 2..200 {
            coef *= (alpha - (k - 1) as f64) / k as f64;
            pow *= y;
            let term = coef * pow;
            acc.add(term);
            if term.abs() < 1e-18 * acc.value().abs() {
                break;
            }
        }
        let g = acc.value();
        return if g > 0.0 { g.ln() } else { f64::NEG_INFINITY };
    }
    let a = alpha * loss;
    if a > 1.0 {
        // (1 + αy)e^{−a} = α·e^{loss−a} + (1−α)·e^{−a}
        let t = (alpha.ln() + loss - a).exp() + (1.0 - alpha) * (-a).exp();
        a + (-t).ln_1p()
    } else {
        let g = a.exp_m1() - alpha * y;
        if g > 0.0 {
            g.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

struct Integrand {
    sigma: f64,
    log_one_minus_q: f64,
    log_q: f64,
    alpha: f64,
}

impl Integrand {
    fn log_value(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let u = (2.0 * x - 1.0) / (2.0 * s2);
        let loss = log_add_exp(self.log_one_minus_q, self.log_q + u);
        -x * x / (2.0 * s2) - self.sigma.ln() - LN_SQRT_2PI + log_excess(self.alpha, loss)
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 on `[a, b]` of `exp(f(x) − shift)`: (Kronrod, |K − G|).
fn gk15<F: Fn(f64) -> f64>(f: &F, shift: f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let eval = |x: f64| (f(x) - shift).exp();
    let fc = eval(c);
    let mut k = K_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let v = eval(c - r * GK_NODES[i]) + eval(c + r * GK_NODES[i]);
        k += K_WEIGHTS[i] * v;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * v;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// `noise` is the relative rounding error of the integrand values; error
/// estimates below it cannot be improved by subdividing.
#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(f: &F, shift: f64, a: f64, b: f64, tol: f64, noise: f64, depth: u32, out: &mut NeumaierSum) {
    let (k, err) = gk15(f, shift, a, b);
    if err <= tol.max(noise * k.abs()) || depth >= MAX_DEPTH {
        out.add(k);
        return;
    }
    let m = 0.5 * (a + b);
    adaptive(f, shift, a, m, 0.5 * tol, noise, depth + 1, out);
    adaptive(f, shift, m, b, 0.5 * tol, noise, depth + 1, out);
}

/// `ln ∫ exp(f)` over `[lo, hi]`, scanning at `step` to locate the mass first.
/// `magnitude(x)` bounds the size of the terms that cancel inside `f(x)`.
fn log_integrate<F: Fn(f64) -> f64, M: Fn(f64) -> f64>(f: &F, magnitude: M, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let peak = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let rough: f64 = vals.iter().map(|v| (v - peak).exp()).sum::<f64>() * h;
    let tol = QUAD_REL_TOL * rough / n as f64;
    let mut total = NeumaierSum::default();
    for i in 0..n {
        if vals[i].max(vals[i + 1]) < peak - NEGLIGIBLE_LOG {
            continue;
        }
        let noise = 1e-14 + 4.0 * f64::EPSILON * magnitude(xs[i].abs().max(xs[i + 1].abs()));
        adaptive(f, peak, xs[i], xs[i + 1], tol, noise, 0, &mut total);
    }
    peak + total.value().ln()
}

/// Per-step Rényi divergence `ε_α = (1/(α−1)) ln ∫ A^α B^{1−α}` of the
/// Poisson-subsampled Gaussian pair, by adaptive quadrature.
pub fn rdp_subsampled_gaussian(sigma: f64, q: f64, alpha: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_probability("q", q)?;
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(AccountingError::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must be finite and greater than 1",
        });
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma * sigma));
    }
    let integrand = Integrand {
        sigma,
        log_one_minus_q: (-q).ln_1p(),
        log_q: q.ln(),
        alpha,
    };
    // ∫ φ·[(A/B)^α − 1 − α(A/B − 1)] = ∫ A^α B^{1−α} − 1
    let s2 = sigma * sigma;
    let log_i = log_integrate(
        &|x| integrand.log_value(x),
        |x| (x * x + alpha * x) / s2,
        -20.0 * sigma,
        alpha.max(1.0) + 20.0 * sigma,
        0.25 * sigma,
    );
    let log1p_i = if log_i > 0.0 {
        log_i + (-log_i).exp().ln_1p()
    } else {
        log_i.exp().ln_1p()
    };
    Ok((log1p_i / (alpha - 1.0)).max(0.0))
}

/// Integer-order closed form via the binomial expansion of `A^α`.
pub fn rdp_subsampled_gaussian_binomial(sigma: f64, q: f64, alpha: u32) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_probability("q", q)?;
    if alpha < 2 {
        return Err(AccountingError::InvalidParameter {
            name: "alpha",
            value: alpha as f64,
            reason: "integer order must be at least 2",
        });
    }
    if q == 1.0 {
        return Ok(alpha as f64 / (2.0 * sigma * sigma));
    }
    let a = alpha as f64;
    let (l1q, lq) = ((-q).ln_1p(), q.ln());
    let lg_a = libm::lgamma(a + 1.0);
    let terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            let k = k as f64;
            lg_a - libm::lgamma(k + 1.0) - libm::lgamma(a - k + 1.0) + (a - k) * l1q + k * lq + (k * k - k) / (2.0 * sigma * sigma)
        })
        .collect();
    Ok((log_sum_exp(&terms) / (a - 1.0)).max(0.0))
}

/// Per-step RDP values on an order grid, composed over `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
    steps: u64,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, values: Vec<f64>, steps: u64) -> Result<Self> {
        if orders.len() != values.len() {
            return Err(AccountingError::DimensionMismatch {
                expected: orders.len(),
                got: values.len(),
            });
        }
        if orders.is_empty() {
            return Err(AccountingError::DimensionMismatch { expected: 1, got: 0 });
        }
        if orders.iter().any(|&a| !(a > 1.0)) || orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AccountingError::InvalidParameter {
                name: "orders",
                value: orders[0],
                reason: "must be strictly increasing and greater than 1",
            });
        }
        if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(AccountingError::InvalidParameter {
                name: "values",
                value: v,
                reason: "must be finite and nonnegative",
            });
        }
        if steps == 0 {
            return Err(AccountingError::InvalidParameter {
                name: "steps",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(Self { orders, values, steps })
    }

    /// Evaluates the Poisson-subsampled Gaussian on `orders` in parallel.
    pub fn subsampled_gaussian(sigma: f64, q: f64, steps: u64, orders: Vec<f64>) -> Result<Self> {
        let values = orders
            .par_iter()
            .map(|&a| rdp_subsampled_gaussian(sigma, q, a))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(orders, values, steps)
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn composed(&self, i: usize) -> f64 {
        self.steps as f64 * self.values[i]
    }

    /// `min_α [Tε_α + ln(1 − 1/α) − (ln δ + ln α)/(α − 1)]` and its minimizer.
    pub fn epsilon(&self, delta: f64) -> (f64, Option<f64>) {
        let ld = delta.ln();
        let mut best = (f64::INFINITY, None);
        for (i, &a) in self.orders.iter().enumerate() {
            let e = self.composed(i) + (-1.0 / a).ln_1p() - (ld + a.ln()) / (a - 1.0);
            if e < best.0 {
                best = (e, Some(a));
            }
        }
        (best.0.max(0.0), best.1)
    }

    /// `min_α exp((α−1)(Tε_α − ε + ln(1 − 1/α)) − ln α)` and its minimizer.
    pub fn delta(&self, epsilon: f64) -> (f64, Option<f64>) {
        let mut best = (f64::INFINITY, None);
        for (i, &a) in self.orders.iter().enumerate() {
            let ld = (a - 1.0) * (self.composed(i) - epsilon + (-1.0 / a).ln_1p()) - a.ln();
            if ld < best.0 {
                best = (ld, Some(a));
            }
        }
        (best.0.exp().min(1.0), best.1)
    }
}

fn curve_for(config: &AccountingConfig) -> Result<RdpCurve> {
    config.validate()?;
    if config.adjacency != Adjacency::ZeroOut {
        return Err(AccountingError::UnsupportedConversion(
            "zero-out adjacency; convert the result with group privacy",
        ));
    }
    RdpCurve::subsampled_gaussian(config.sigma, config.sampling_probability, config.steps, default_orders())
}

fn rdp_bound(epsilon: f64, delta: f64, order: Option<f64>) -> PrivacyBound {
    let mut b = PrivacyBound::new(epsilon, delta, BoundKind::Upper, Mechanism::Poisson, Method::Rdp);
    b.rdp_order = order;
    if !epsilon.is_finite() || order.is_none() {
        b.flag = Some(BoundFlag::Unbounded);
    }
    b
}

/// RDP upper bound on `ε_P(δ)` over the default order grid.
pub fn eps_rdp(config: &AccountingConfig, delta: f64) -> Result<PrivacyBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountingError::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "must lie in (0, 1)",
        });
    }
    Ok(eps_rdp_from_curve(&curve_for(config)?, delta))
}

/// RDP upper bound on `δ_P(ε)` over the default order grid.
pub fn delta_rdp(config: &AccountingConfig, epsilon: f64) -> Result<PrivacyBound> {
    if !(epsilon >= 0.0) {
        return Err(AccountingError::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must be nonnegative",
        });
    }
    Ok(delta_rdp_from_curve(&curve_for(config)?, epsilon))
}

pub fn eps_rdp_from_curve(curve: &RdpCurve, delta: f64) -> PrivacyBound {
    let (e, a) = curve.epsilon(delta);
    rdp_bound(e, delta, a)
}

pub fn delta_rdp_from_curve(curve: &RdpCurve, epsilon: f64) -> PrivacyBound {
    let (d, a) = curve.delta(epsilon);
    let mut b = rdp_bound(epsilon, d, a);
    if d >= 1.0 {
        b.flag = Some(BoundFlag::DeltaClamped);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let o = default_orders();
        assert_eq!(o[0], 1.01);
        assert_eq!(*o.last().unwrap(), 1024.0);
        assert!(o.windows(2).all(|w| w[0] < w[1]));
        assert!(o.contains(&2.0) && o.contains(&256.0) && o.contains(&288.0));
    }

    #[test]
    fn full_sampling_is_gaussian_divergence() {
        for &a in &[1.5, 2.0, 10.0] {
            let v = rdp_subsampled_gaussian(0.7, 1.0, a).unwrap();
            assert!((v - a / (2.0 * 0.49)).abs() < 1e-14);
        }
    }

    #[test]
    fn near_full_sampling_matches_gaussian() {
        // q slightly below 1 must go through the quadrature path
        let v = rdp_subsampled_gaussian(0.8, 1.0 - 1e-12, 3.0).unwrap();
        assert!((v / (3.0 / (2.0 * 0.64)) - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn binomial_and_quadrature_agree() {
        for &a in &[2u32, 8, 32] {
            let quad = rdp_subsampled_gaussian(0.5, 1e-4, a as f64).unwrap();
            let bin = rdp_subsampled_gaussian_binomial(0.5, 1e-4, a).unwrap();
            assert!((quad / bin - 1.0).abs() < 1e-8, "α={a}: {quad} vs {bin}");
        }
        for &(s, q, a) in &[(1.0, 0.1, 5u32), (0.3, 0.01, 20), (2.0, 0.5, 100)] {
            let quad = rdp_subsampled_gaussian(s, q, a as f64).unwrap();
            let bin = rdp_subsampled_gaussian_binomial(s, q, a).unwrap();
            assert!((quad / bin - 1.0).abs() < 1e-8, "σ={s} q={q} α={a}: {quad} vs {bin}");
        }
    }

    #[test]
    fn second_order_expansion_for_tiny_q() {
        // ε_α ≈ α q² (e^{1/σ²} − 1)/2 as q → 0
        let (s, q, a) = (1.0, 1e-6, 3.0);
        let v = rdp_subsampled_gaussian(s, q, a).unwrap();
        let approx = a * q * q * (1.0f64.exp() - 1.0) / 2.0;
        assert!((v / approx - 1.0).abs() < 1e-4, "{v} vs {approx}");
    }

    #[test]
    fn nondecreasing_in_order() {
        for &s in &[0.5, 1.3] {
            let curve = RdpCurve::subsampled_gaussian(s, 1e-3, 1, default_orders()).unwrap();
            for w in curve.values().windows(2) {
                assert!(w[1] >= w[0] * (1.0 - 1e-9), "σ={s}: {} then {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn conversions_are_mutually_inverse() {
        let config = AccountingConfig::new(0.7, 1000).unwrap();
        let curve = curve_for(&config).unwrap();
        for &d in &[1e-5, 1e-8] {
            let e = eps_rdp_from_curve(&curve, d);
            let back = delta_rdp_from_curve(&curve, e.epsilon);
            assert!((back.delta / d - 1.0).abs() < 0.01, "{} vs {d}", back.delta);
        }
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(rdp_subsampled_gaussian(1.0, 0.1, 1.0).is_err());
        assert!(rdp_subsampled_gaussian_binomial(1.0, 0.1, 1).is_err());
        assert!(RdpCurve::new(vec![2.0, 1.5], vec![0.1, 0.1], 1).is_err());
        assert!(RdpCurve::new(vec![2.0], vec![0.1, 0.2], 1).is_err());
        assert!(RdpCurve::new(vec![2.0], vec![f64::NAN], 1).is_err());
    }

    #[test]
    fn unbounded_is_flagged() {
        let curve = RdpCurve::new(vec![2.0], vec![1e300], 10).unwrap();
        let b = eps_rdp_from_curve(&curve, 1e-5);
        assert!(b.epsilon.is_infinite() || b.epsilon > 1e300);
        let d = delta_rdp_from_curve(&curve, 1.0);
        assert_eq!(d.delta, 1.0);
        assert_eq!(d.flag, Some(BoundFlag::DeltaClamped));
    }
}
