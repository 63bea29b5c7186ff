use ablq_core::accounting::{AccountingConfig, Mechanism};
use ablq_core::deterministic::delta_deterministic;
use ablq_core::gaussian::{nsf, Halfspace};
use ablq_core::lower_bounds::{bad_event_halfspace, log_poisson_halfspace_delta_lower, shuffle_delta_lower, ShuffleBoundParams};
use ablq_core::oracle::{
    estimate_hs, estimate_hs_multi, estimate_loss_mean, estimate_probability, simulate_ablq_run, Direction as McDirection,
    MixturePairSpec, Side,
};
use ablq_core::pld::{step_loss_cdf, Direction, PldOptions, PoissonPldAccountant, Rounding, SubsampledGaussianStep};
use ablq_core::rdp::rdp_subsampled_gaussian;
use ablq_core::validation::GOLDEN_SHUFFLE_HS;

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

#[test]
fn step_loss_cdf_matches_sampling() {
    let (sigma, q) = (0.5, 1e-4);
    let spec = MixturePairSpec::poisson(sigma, 1, q).unwrap();
    let step = SubsampledGaussianStep::new(sigma, q, Direction::Add).unwrap();
    let exact = step_loss_cdf(&step, 0.0);
    let est = estimate_probability(&spec, Side::Numerator, 10_000_000, 3, |w| {
        spec.log_density(Side::Numerator, w).unwrap() - spec.log_density(Side::Denominator, w).unwrap() <= 0.0
    })
    .unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn rdp_order_one_limit_is_kl() {
    let spec = MixturePairSpec::poisson(1.0, 1, 0.1).unwrap();
    let kl = estimate_loss_mean(&spec, McDirection::Forward, 10_000_000, 5, |l| l).unwrap();
    let rdp = rdp_subsampled_gaussian(1.0, 0.1, 1.0001).unwrap();
    assert!((kl.mean - rdp).abs() <= 3.0 * kl.std_error + 1e-6, "{kl:?} vs {rdp}");
}

#[test]
fn importance_weights_normalize() {
    for spec in [MixturePairSpec::shuffle(0.7, 3).unwrap(), MixturePairSpec::poisson(0.7, 3, 0.3).unwrap()] {
        let m = estimate_loss_mean(&spec, McDirection::Forward, 1_000_000, 8, |l| (-l).exp()).unwrap();
        assert!((m.mean - 1.0).abs() <= 4.0 * m.std_error, "{m:?}");
    }
}

#[test]
fn scaled_shuffle_approaches_deterministic() {
    let (sigma, steps, eps) = (0.5, 4, 1.0);
    let n = 1_000_000;
    let est: Vec<_> = [1.0, 10.0, 100.0]
        .iter()
        .map(|&l| estimate_hs(&MixturePairSpec::scaled_shuffle(sigma, steps, l).unwrap(), eps, n, 21, McDirection::Forward).unwrap())
        .collect();
    for w in est.windows(2) {
        assert!(w[1].estimate + 3.0 * w[0].std_error.hypot(w[1].std_error) >= w[0].estimate, "{est:?}");
    }
    assert!(est[2].estimate > est[0].estimate);
    let det = delta_deterministic(sigma, eps).delta;
    assert!(est[2].agrees_with(det, 3.0), "{:?} vs {det}", est[2]);
}

#[test]
fn simulated_shuffle_matches_mixture() {
    // (−1, −1, −1, 1) with one record per batch, shifted by +1, is the scaled pair at L = 1
    let (sigma, steps) = (0.8, 4);
    let data = [Some(-1.0), Some(-1.0), Some(-1.0), Some(1.0)];
    let runs = 40_000;
    let mut hits = 0u64;
    let mut coord_sum = [0.0; 4];
    for seed in 0..runs {
        let g = simulate_ablq_run(Mechanism::Shuffle, &data, 1, steps, sigma, seed).unwrap().outputs;
        for (s, x) in coord_sum.iter_mut().zip(&g) {
            *s += x + 1.0;
        }
        hits += u64::from(g[0] + 1.0 > 1.0);
    }
    let spec = MixturePairSpec::scaled_shuffle(sigma, steps as u64, 1.0).unwrap();
    let mix = estimate_probability(&spec, Side::Numerator, 1_000_000, 4, |w| w[0] > 1.0).unwrap();
    let p = hits as f64 / runs as f64;
    let se = (p * (1.0 - p) / runs as f64).sqrt().hypot(mix.std_error);
    assert!((p - mix.mean).abs() <= 4.0 * se, "{p} vs {mix:?}");
    // each coordinate has mean 2/T and variance at most 1 + σ²
    let tol = 4.0 * ((1.0 + sigma * sigma) / runs as f64).sqrt();
    for s in coord_sum {
        assert!((s / runs as f64 - 0.5).abs() <= tol);
    }
}

#[test]
fn poisson_batch_sizes_have_expected_mean() {
    let data = vec![Some(0.0); 100];
    let mut total = 0usize;
    let mut count = 0usize;
    for seed in 0..200 {
        let run = simulate_ablq_run(Mechanism::Poisson, &data, 10, 50, 1.0, seed).unwrap();
        total += run.batch_sizes.iter().sum::<usize>();
        count += run.batch_sizes.len();
    }
    let mean = total as f64 / count as f64;
    let se = (10.0 * 0.9 / count as f64).sqrt();
    assert!((mean - 10.0).abs() <= 4.0 * se, "{mean}");
}

/// `P_P(Σ w ≥ b)` for the Poisson pair with `q = 1/T`, by conditioning on the
/// number of included steps.
fn poisson_sum_tail(sigma: f64, steps: u64, b: f64) -> f64 {
    let q = 1.0 / steps as f64;
    let s = sigma * (steps as f64).sqrt();
    (0..=steps).map(|k| binomial_pmf(steps, k, q) * nsf((b - k as f64) / s)).sum()
}

#[test]
fn halfspace_event_is_rare_and_bound_is_below_its_mass() {
    let (sigma, steps, eps) = (0.3, 10u64, 50.0);
    let spec = MixturePairSpec::poisson(sigma, steps, 0.1).unwrap();
    let hs = bad_event_halfspace(sigma, steps, eps).unwrap();
    let n = 10_000_000;
    let est = estimate_probability(&spec, Side::Numerator, n, 13, |w| hs.contains(w)).unwrap();
    let mass = poisson_sum_tail(sigma, steps, hs.offset());
    assert_eq!(est.mean, 0.0);
    assert!(mass < 3.0 / n as f64, "{mass}");
    assert!(log_poisson_halfspace_delta_lower(sigma, steps, eps).unwrap() < mass.ln());

    // a lower threshold where the mass is measurable
    let shifted = Halfspace::new(vec![1.0; steps as usize], 2.5).unwrap();
    let est = estimate_probability(&spec, Side::Numerator, 2_000_000, 14, |w| shifted.contains(w)).unwrap();
    let mass = poisson_sum_tail(sigma, steps, 2.5);
    assert!(mass > 1e-3);
    assert!((est.mean - mass).abs() <= 3.0 * est.std_error, "{est:?} vs {mass}");
}

#[test]
fn shuffle_pair_matches_golden_value() {
    let spec = MixturePairSpec::shuffle(0.5, 3).unwrap();
    let est = estimate_hs(&spec, 0.5, 10_000_000, 99, McDirection::Forward).unwrap();
    let (g, gse) = GOLDEN_SHUFFLE_HS;
    assert!((est.estimate - g).abs() <= 3.0 * est.std_error.hypot(gse), "{est:?}");
}

#[test]
fn pld_sandwich_straddles_sampling() {
    let (sigma, q, steps, eps) = (0.5, 0.2, 5u64, 1.0);
    let acc = PoissonPldAccountant::new(AccountingConfig::with_sampling_probability(sigma, steps, q).unwrap(), PldOptions::default()).unwrap();
    let spec = MixturePairSpec::poisson(sigma, steps, q).unwrap();
    for (dir, mc) in [(Direction::Add, McDirection::Forward), (Direction::Remove, McDirection::Reverse)] {
        let est = estimate_hs(&spec, eps, 2_000_000, 31, mc).unwrap();
        let lo = acc.composed(Rounding::Optimistic, dir).unwrap().delta(eps);
        let hi = acc.composed(Rounding::Pessimistic, dir).unwrap().delta(eps);
        assert!(lo <= hi);
        assert!(est.estimate + 3.0 * est.std_error >= lo && est.estimate - 3.0 * est.std_error <= hi, "{dir:?} {lo} {est:?} {hi}");
    }
}

#[test]
fn shuffle_lower_bound_is_below_sampling() {
    let p = ShuffleBoundParams::default();
    for steps in [2u64, 3] {
        let spec = MixturePairSpec::shuffle(0.6, steps).unwrap();
        for est in estimate_hs_multi(&spec, &[0.0, 0.5, 1.5], 1_000_000, 40 + steps, McDirection::Forward).unwrap() {
            let lower = shuffle_delta_lower(0.6, steps, est.epsilon, &p).unwrap().delta;
            assert!(lower <= est.estimate + 3.0 * est.std_error, "T={steps} {lower} {est:?}");
        }
    }
}
