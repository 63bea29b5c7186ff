//! Monte-Carlo ground truth: exact densities of the dominating pairs, an
//! importance-sampling estimator of the hockey-stick divergence, and a direct
//! simulator of the batch samplers.

mod simulate;

pub use simulate::{simulate_ablq, simulate_ablq_run, AblqRun};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, AccountingError, Result};
use crate::gaussian::LN_SQRT_2PI;
use crate::numeric::{log_add_exp, log_sum_exp, NeumaierSum};

/// Samples drawn per RNG stream.
pub const CHUNK_SIZE: usize = 10_000;

const MAX_EXPANDED_STEPS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Numerator,
    Denominator,
}

/// `Forward` estimates `D(P‖Q)`, `Reverse` estimates `D(Q‖P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    fn sides(self) -> (Side, Side) {
        match self {
            Direction::Forward => (Side::Numerator, Side::Denominator),
            Direction::Reverse => (Side::Denominator, Side::Numerator),
        }
    }
}

/// One component `w · N(mean, σ²I)` of an isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MixturePairSpec {
    /// `P = N(1, σ²)`, `Q = N(0, σ²)`.
    Deterministic { sigma: f64 },
    /// `P = ∏ₜ [(1−q)N(0,σ²) + qN(1,σ²)]`, `Q = N(0, σ²I_T)`.
    Poisson { sigma: f64, steps: u64, q: f64 },
    /// `P = (1/T) Σₜ N(2eₜ, σ²I)`, `Q = (1/T) Σₜ N(eₜ, σ²I)`.
    Shuffle { sigma: f64, steps: u64 },
    /// Arbitrary finite mixtures of the same dimension.
    General {
        dim: usize,
        numerator: Vec<GaussianComponent>,
        denominator: Vec<GaussianComponent>,
    },
}

fn check_steps(steps: u64) -> Result<()> {
    if steps == 0 {
        return Err(AccountingError::InvalidParameter {
            name: "steps",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    Ok(())
}

fn check_components(dim: usize, comps: &[GaussianComponent]) -> Result<()> {
    if comps.is_empty() {
        return Err(AccountingError::InvalidParameter {
            name: "components",
            value: 0.0,
            reason: "a mixture needs at least one component",
        });
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AccountingError::InvalidParameter {
            name: "weight",
            value: total,
            reason: "component weights must sum to 1",
        });
    }
    for c in comps {
        check_positive("sigma", c.sigma)?;
        if !(c.weight >= 0.0) {
            return Err(AccountingError::InvalidParameter {
                name: "weight",
                value: c.weight,
                reason: "must be nonnegative",
            });
        }
        if c.mean.len() != dim {
            return Err(AccountingError::DimensionMismatch { expected: dim, got: c.mean.len() });
        }
    }
    Ok(())
}

fn basis(dim: usize, t: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[t] = scale;
    v
}

impl MixturePairSpec {
    pub fn deterministic(sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        Ok(Self::Deterministic { sigma })
    }

    pub fn poisson(sigma: f64, steps: u64, q: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_steps(steps)?;
        check_probability("q", q)?;
        Ok(Self::Poisson { sigma, steps, q })
    }

    pub fn shuffle(sigma: f64, steps: u64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_steps(steps)?;
        Ok(Self::Shuffle { sigma, steps })
    }

    pub fn general(dim: usize, numerator: Vec<GaussianComponent>, denominator: Vec<GaussianComponent>) -> Result<Self> {
        check_components(dim, &numerator)?;
        check_components(dim, &denominator)?;
        Ok(Self::General { dim, numerator, denominator })
    }

    /// Output pair of the shuffle sampler on the dataset `(−L, …, −L, 1)` with
    /// one record per batch, shifted by `L·1`: components `N((L+1)eₜ)` vs `N(L eₜ)`.
    pub fn scaled_shuffle(sigma: f64, steps: u64, scale: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_steps(steps)?;
        check_positive("scale", scale)?;
        let d = steps as usize;
        let w = 1.0 / steps as f64;
        let comps = |shift: f64| {
            (0..d)
                .map(|t| GaussianComponent { weight: w, mean: basis(d, t, shift), sigma })
                .collect::<Vec<_>>()
        };
        Self::general(d, comps(scale + 1.0), comps(scale))
    }

    /// `Σᵢ wᵢ(Pᵢ, Qᵢ)` for pairs of equal dimension; Poisson pairs are
    /// expanded into their `2^T` subset components.
    pub fn mixture(parts: &[(f64, MixturePairSpec)]) -> Result<Self> {
        let first = parts.first().ok_or(AccountingError::InvalidParameter {
            name: "components",
            value: 0.0,
            reason: "a mixture needs at least one pair",
        })?;
        let dim = first.1.dim();
        let (mut num, mut den) = (Vec::new(), Vec::new());
        for (w, spec) in parts {
            if spec.dim() != dim {
                return Err(AccountingError::DimensionMismatch { expected: dim, got: spec.dim() });
            }
            for (side, out) in [(Side::Numerator, &mut num), (Side::Denominator, &mut den)] {
                for mut c in spec.components(side)? {
                    c.weight *= w;
                    out.push(c);
                }
            }
        }
        Self::general(dim, num, den)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Deterministic { .. } => 1,
            Self::Poisson { steps, .. } | Self::Shuffle { steps, .. } => *steps as usize,
            Self::General { dim, .. } => *dim,
        }
    }

    /// Explicit mixture components of one side.
    pub fn components(&self, side: Side) -> Result<Vec<GaussianComponent>> {
        let num = side == Side::Numerator;
        match self {
            Self::Deterministic { sigma } => Ok(vec![GaussianComponent {
                weight: 1.0,
                mean: vec![if num { 1.0 } else { 0.0 }],
                sigma: *sigma,
            }]),
            Self::Shuffle { sigma, steps } => {
                let d = *steps as usize;
                let shift = if num { 2.0 } else { 1.0 };
                Ok((0..d)
                    .map(|t| GaussianComponent { weight: 1.0 / d as f64, mean: basis(d, t, shift), sigma: *sigma })
                    .collect())
            }
            Self::Poisson { sigma, steps, q } => {
                let d = *steps as usize;
                if !num {
                    return Ok(vec![GaussianComponent { weight: 1.0, mean: vec![0.0; d], sigma: *sigma }]);
                }
                if *steps > MAX_EXPANDED_STEPS {
                    return Err(AccountingError::InvalidParameter {
                        name: "steps",
                        value: *steps as f64,
                        reason: "subset expansion is limited to 16 steps",
                    });
                }
                Ok((0u32..1 << d)
                    .map(|mask| {
                        let k = mask.count_ones() as i32;
                        GaussianComponent {
                            weight: q.powi(k) * (1.0 - q).powi(d as i32 - k),
                            mean: (0..d).map(|t| ((mask >> t) & 1) as f64).collect(),
                            sigma: *sigma,
                        }
                    })
                    .collect())
            }
            Self::General { numerator, denominator, .. } => Ok(if num { numerator.clone() } else { denominator.clone() }),
        }
    }

    /// Exact log-density of one side at `w`.
    pub fn log_density(&self, side: Side, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(AccountingError::DimensionMismatch { expected: self.dim(), got: w.len() });
        }
        Ok(self.log_density_unchecked(side, w))
    }

    fn log_density_unchecked(&self, side: Side, w: &[f64]) -> f64 {
        let num = side == Side::Numerator;
        match self {
            Self::Deterministic { sigma } => log_phi(w[0] - if num { 1.0 } else { 0.0 }, *sigma),
            Self::Poisson { sigma, q, .. } => {
                let s = *sigma;
                if !num {
                    return w.iter().map(|&x| log_phi(x, s)).sum();
                }
                let (l0, l1) = ((-q).ln_1p(), q.ln());
                w.iter().map(|&x| log_add_exp(l0 + log_phi(x, s), l1 + log_phi(x - 1.0, s))).sum()
            }
            Self::Shuffle { sigma, steps } => {
                // component t differs from N(0, σ²I) only in coordinate t
                let s2 = 2.0 * sigma * sigma;
                let m = if num { 2.0 } else { 1.0 };
                let base: f64 = w.iter().map(|&x| log_phi(x, *sigma)).sum();
                let shifts: Vec<f64> = w.iter().map(|&x| (2.0 * m * x - m * m) / s2).collect();
                base - (*steps as f64).ln() + log_sum_exp(&shifts)
            }
            Self::General { numerator, denominator, .. } => {
                let comps = if num { numerator } else { denominator };
                let terms: Vec<f64> = comps
                    .iter()
                    .map(|c| c.weight.ln() + w.iter().zip(&c.mean).map(|(&x, &mu)| log_phi(x - mu, c.sigma)).sum::<f64>())
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    /// Draws one point from `side` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, side: Side, rng: &mut R, out: &mut [f64]) {
        let num = side == Side::Numerator;
        match self {
            Self::Deterministic { sigma } => {
                out[0] = sigma * rng.sample::<f64, _>(StandardNormal) + if num { 1.0 } else { 0.0 };
            }
            Self::Poisson { sigma, q, .. } => {
                for x in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    let shift = if num && rng.random::<f64>() < *q { 1.0 } else { 0.0 };
                    *x = sigma * z + shift;
                }
            }
            Self::Shuffle { sigma, steps } => {
                for x in out.iter_mut() {
                    *x = sigma * rng.sample::<f64, _>(StandardNormal);
                }
                let t = rng.random_range(0..*steps as usize);
                out[t] += if num { 2.0 } else { 1.0 };
            }
            Self::General { numerator, denominator, .. } => {
                let comps = if num { numerator } else { denominator };
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = comps.len() - 1;
                for (i, c) in comps.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let c = &comps[pick];
                for (x, &mu) in out.iter_mut().zip(&c.mean) {
                    *x = mu + c.sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

fn log_phi(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    -0.5 * z * z - LN_SQRT_2PI - sigma.ln()
}

/// RNG for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Sample mean with its normal-approximation standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Monte-Carlo hockey-stick divergence `D_{e^ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HSEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub epsilon: f64,
    pub direction: Direction,
}

impl HSEstimate {
    /// `true` when `value` is within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

fn summarize(sum: f64, sum_sq: f64, n: u64) -> MeanEstimate {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    MeanEstimate { mean, std_error: (var / nf).sqrt(), samples: n }
}

/// Runs `n_samples` draws from `side` in fixed chunks, calling `f(w, acc)` per
/// draw; `acc` holds `k` running values. Returns the per-slot
/// `(sum, sum of squares)` summed in chunk order.
fn run_chunks<F>(spec: &MixturePairSpec, side: Side, n_samples: u64, seed: u64, k: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let chunks = n_samples.div_ceil(CHUNK_SIZE as u64);
    let partials: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = (n_samples - c * CHUNK_SIZE as u64).min(CHUNK_SIZE as u64);
            let mut w = vec![0.0; spec.dim()];
            let mut vals = vec![0.0; k];
            let mut sums = vec![(NeumaierSum::default(), NeumaierSum::default()); k];
            for _ in 0..len {
                spec.sample_into(side, &mut rng, &mut w);
                f(&w, &mut vals);
                for (s, &v) in sums.iter_mut().zip(&vals) {
                    s.0.add(v);
                    s.1.add(v * v);
                }
            }
            sums.iter().map(|(a, b)| (a.value(), b.value())).collect()
        })
        .collect();
    (0..k)
        .map(|j| {
            let mut a = NeumaierSum::default();
            let mut b = NeumaierSum::default();
            for p in &partials {
                a.add(p[j].0);
                b.add(p[j].1);
            }
            (a.value(), b.value())
        })
        .collect()
}

fn check_samples(n_samples: u64) -> Result<()> {
    if n_samples == 0 {
        return Err(AccountingError::InvalidParameter {
            name: "samples",
            value: 0.0,
            reason: "must be positive",
        });
    }
    Ok(())
}

/// `E[g(ℓ)]` for the privacy loss `ℓ = ln(num/den)` with `w` drawn from the
/// direction's numerator.
pub fn estimate_loss_mean<G>(spec: &MixturePairSpec, direction: Direction, n_samples: u64, seed: u64, g: G) -> Result<MeanEstimate>
where
    G: Fn(f64) -> f64 + Sync,
{
    check_samples(n_samples)?;
    let (num, den) = direction.sides();
    let s = run_chunks(spec, num, n_samples, seed, 1, |w, out| {
        out[0] = g(spec.log_density_unchecked(num, w) - spec.log_density_unchecked(den, w));
    });
    Ok(summarize(s[0].0, s[0].1, n_samples))
}

/// Probability of `event` under one side.
pub fn estimate_probability<E>(spec: &MixturePairSpec, side: Side, n_samples: u64, seed: u64, event: E) -> Result<MeanEstimate>
where
    E: Fn(&[f64]) -> bool + Sync,
{
    check_samples(n_samples)?;
    let s = run_chunks(spec, side, n_samples, seed, 1, |w, out| out[0] = if event(w) { 1.0 } else { 0.0 });
    Ok(summarize(s[0].0, s[0].1, n_samples))
}

/// `D_{e^ε}` at several ε from one shared sample stream.
pub fn estimate_hs_multi(
    spec: &MixturePairSpec,
    epsilons: &[f64],
    n_samples: u64,
    seed: u64,
    direction: Direction,
) -> Result<Vec<HSEstimate>> {
    check_samples(n_samples)?;
    let (num, den) = direction.sides();
    let s = run_chunks(spec, num, n_samples, seed, epsilons.len(), |w, out| {
        let loss = spec.log_density_unchecked(num, w) - spec.log_density_unchecked(den, w);
        for (o, &e) in out.iter_mut().zip(epsilons) {
            let r = e - loss;
            *o = if r >= 0.0 { 0.0 } else { -r.exp_m1() };
        }
    });
    Ok(epsilons
        .iter()
        .zip(s)
        .map(|(&e, (a, b))| {
            let m = summarize(a, b, n_samples);
            HSEstimate { estimate: m.mean, std_error: m.std_error, samples: n_samples, epsilon: e, direction }
        })
        .collect())
}

/// Estimate of `D_{e^ε}` as `E_{w∼num}[max(0, 1 − e^ε den(w)/num(w))]`.
pub fn estimate_hs(spec: &MixturePairSpec, epsilon: f64, n_samples: u64, seed: u64, direction: Direction) -> Result<HSEstimate> {
    Ok(estimate_hs_multi(spec, &[epsilon], n_samples, seed, direction)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::delta_deterministic;

    #[test]
    fn shuffle_density_is_permutation_symmetric() {
        let s = MixturePairSpec::shuffle(0.7, 2).unwrap();
        let a = s.log_density(Side::Numerator, &[2.0, 0.0]).unwrap();
        let b = s.log_density(Side::Numerator, &[0.0, 2.0]).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(s.log_density(Side::Numerator, &[1.0]).is_err());
    }

    #[test]
    fn closed_forms_match_component_expansion() {
        let specs = [
            MixturePairSpec::poisson(0.6, 3, 0.3).unwrap(),
            MixturePairSpec::shuffle(0.8, 4).unwrap(),
            MixturePairSpec::deterministic(0.4).unwrap(),
        ];
        for spec in &specs {
            let d = spec.dim();
            let g = MixturePairSpec::general(d, spec.components(Side::Numerator).unwrap(), spec.components(Side::Denominator).unwrap()).unwrap();
            let mut rng = chunk_rng(3, 0);
            let mut w = vec![0.0; d];
            for _ in 0..50 {
                spec.sample_into(Side::Numerator, &mut rng, &mut w);
                for side in [Side::Numerator, Side::Denominator] {
                    let a = spec.log_density(side, &w).unwrap();
                    let b = g.log_density(side, &w).unwrap();
                    assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let spec = MixturePairSpec::shuffle(0.5, 3).unwrap();
        let a = estimate_hs(&spec, 0.5, 25_000, 11, Direction::Forward).unwrap();
        let b = estimate_hs(&spec, 0.5, 25_000, 11, Direction::Forward).unwrap();
        assert_eq!(a, b);
        let c = estimate_hs(&spec, 0.5, 25_000, 12, Direction::Forward).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn deterministic_pair_matches_closed_form() {
        let spec = MixturePairSpec::deterministic(0.4).unwrap();
        let est = estimate_hs_multi(&spec, &[0.0, 1.0, 4.0], 200_000, 5, Direction::Forward).unwrap();
        for e in est {
            let exact = delta_deterministic(0.4, e.epsilon).delta;
            assert!(e.agrees_with(exact, 4.0), "{e:?} vs {exact}");
        }
        // the Gaussian pair is symmetric
        let r = estimate_hs(&spec, 1.0, 200_000, 5, Direction::Reverse).unwrap();
        assert!(r.agrees_with(delta_deterministic(0.4, 1.0).delta, 4.0));
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let c = GaussianComponent { weight: 0.5, mean: vec![0.0], sigma: 1.0 };
        assert!(MixturePairSpec::general(1, vec![c.clone()], vec![c]).is_err());
        let d = MixturePairSpec::deterministic(1.0).unwrap();
        let s = MixturePairSpec::shuffle(1.0, 2).unwrap();
        assert!(MixturePairSpec::mixture(&[(0.5, d), (0.5, s)]).is_err());
    }
}
