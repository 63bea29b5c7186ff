//! T-fold self-composition by FFT convolution with exponentiation by squaring.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DiscretePld, Rounding};
use crate::error::{AccountingError, Result};
use crate::numeric::log_sum_exp;

/// Default cap on the length of any intermediate loss grid.
pub const DEFAULT_GRID_CAP: usize = 1 << 28;

const CHERNOFF_LAMBDAS: usize = 200;

/// Log-MGF of a single step on a fixed λ grid, used to bound where the mass of
/// a k-fold sum can lie.
struct TailBounds {
    lambdas: Vec<f64>,
    log_mgf_pos: Vec<f64>,
    log_mgf_neg: Vec<f64>,
    log_half_tail: f64,
}

impl TailBounds {
    fn new(single: &DiscretePld, tail_mass: f64) -> Self {
        let support: Vec<(f64, f64)> = single
            .masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| (single.loss_at(i), m.ln()))
            .collect();
        let lambdas: Vec<f64> = (0..CHERNOFF_LAMBDAS)
            .map(|j| 1e-3 * 1e6f64.powf(j as f64 / (CHERNOFF_LAMBDAS - 1) as f64))
            .collect();
        let mut buf = vec![0.0; support.len()];
        let mut mgf = |sign: f64, lam: f64| {
            for (b, &(l, lm)) in buf.iter_mut().zip(&support) {
                *b = sign * lam * l + lm;
            }
            log_sum_exp(&buf)
        };
        let log_mgf_pos = lambdas.iter().map(|&l| mgf(1.0, l)).collect();
        let log_mgf_neg = lambdas.iter().map(|&l| mgf(-1.0, l)).collect();
        Self {
            lambdas,
            log_mgf_pos,
            log_mgf_neg,
            log_half_tail: (0.5 * tail_mass).ln(),
        }
    }

    /// Loss range holding all but `tail_mass` of a k-fold sum.
    fn range(&self, k: u64) -> (f64, f64) {
        let k = k as f64;
        let mut hi = f64::INFINITY;
        let mut lo = f64::NEG_INFINITY;
        for (j, &lam) in self.lambdas.iter().enumerate() {
            hi = hi.min((k * self.log_mgf_pos[j] - self.log_half_tail) / lam);
            lo = lo.max(-(k * self.log_mgf_neg[j] - self.log_half_tail) / lam);
        }
        (lo, hi)
    }
}

fn fft_convolve(a: &[f64], b: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let size = n.next_power_of_two();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let load = |x: &[f64]| {
        let mut v = vec![Complex::new(0.0, 0.0); size];
        for (c, &r) in v.iter_mut().zip(x) {
            c.re = r;
        }
        v
    };
    let mut fa = load(a);
    fwd.process(&mut fa);
    if std::ptr::eq(a, b) {
        for c in fa.iter_mut() {
            *c = *c * *c;
        }
    } else {
        let mut fb = load(b);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= *y;
        }
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.truncate(n);
    fa.into_iter().map(|c| c.re * scale).collect()
}

fn convolve_pair(
    a: &DiscretePld,
    b: &DiscretePld,
    k: u64,
    bounds: &TailBounds,
    grid_cap: usize,
    planner: &mut FftPlanner<f64>,
) -> Result<DiscretePld> {
    let needed = a.masses().len() + b.masses().len() - 1;
    if needed > grid_cap {
        return Err(AccountingError::GridOverflow { needed, cap: grid_cap });
    }
    let rounding = a.rounding();
    let h = a.grid_spacing();
    let mut masses = if std::ptr::eq(a, b) {
        fft_convolve(a.masses(), a.masses(), planner)
    } else {
        fft_convolve(a.masses(), b.masses(), planner)
    };
    let mut clamped = 0.0;
    for m in masses.iter_mut() {
        if *m < 0.0 {
            clamped -= *m;
            *m = 0.0;
        }
    }
    let mut infinity_mass = 1.0 - (1.0 - a.infinity_mass()) * (1.0 - b.infinity_mass());
    match rounding {
        Rounding::Pessimistic => infinity_mass += clamped,
        Rounding::Optimistic => {
            for m in masses.iter_mut().rev() {
                if clamped <= 0.0 {
                    break;
                }
                let take = m.min(clamped);
                *m -= take;
                clamped -= take;
            }
        }
    }
    let origin = a.origin_index() + b.origin_index();

    let (lo, hi) = bounds.range(k);
    let lo_idx = ((lo / h).floor() as i64).max(origin);
    let hi_idx = ((hi / h).ceil() as i64).min(origin + masses.len() as i64 - 1);
    if lo_idx > hi_idx {
        return Ok(DiscretePld::from_parts(h, origin, masses, infinity_mass.min(1.0), rounding));
    }
    let start = (lo_idx - origin) as usize;
    let end = (hi_idx - origin) as usize + 1;
    let below: f64 = masses[..start].iter().sum();
    let above: f64 = masses[end..].iter().sum();
    masses.truncate(end);
    masses.drain(..start);
    if rounding == Rounding::Pessimistic {
        masses[0] += below;
        infinity_mass += above;
    }
    Ok(DiscretePld::from_parts(h, lo_idx, masses, infinity_mass.min(1.0), rounding))
}

/// `T`-fold self-composition with the default truncation and grid cap.
pub fn self_compose(pld: &DiscretePld, steps: u64) -> Result<DiscretePld> {
    self_compose_with(pld, steps, super::DEFAULT_TAIL_MASS, DEFAULT_GRID_CAP)
}

/// `T`-fold self-composition.
///
/// After each convolution the grid is cut to a range that, by a Chernoff
/// bound on the single-step loss, holds all but `tail_mass` of the sum; the
/// cut mass is moved to the first point and to infinity (pessimistic) or
/// dropped (optimistic).
pub fn self_compose_with(pld: &DiscretePld, steps: u64, tail_mass: f64, grid_cap: usize) -> Result<DiscretePld> {
    if steps == 0 {
        return Err(AccountingError::InvalidParameter {
            name: "steps",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if steps == 1 {
        return Ok(pld.clone());
    }
    let bounds = TailBounds::new(pld, tail_mass);
    let mut planner = FftPlanner::new();
    let mut result: Option<(DiscretePld, u64)> = None;
    let mut base = pld.clone();
    let mut base_k = 1u64;
    let mut t = steps;
    loop {
        if t & 1 == 1 {
            result = Some(match result {
                None => (base.clone(), base_k),
                Some((r, k)) => (convolve_pair(&r, &base, k + base_k, &bounds, grid_cap, &mut planner)?, k + base_k),
            });
        }
        t >>= 1;
        if t == 0 {
            break;
        }
        base = convolve_pair(&base, &base, 2 * base_k, &bounds, grid_cap, &mut planner)?;
        base_k *= 2;
    }
    Ok(result.expect("steps >= 1").0)
}
