//! Cross-module validation suites: closed-form and accountant regressions,
//! ordering invariants and Monte-Carlo oracle agreement.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::accounting::AccountingConfig;
use crate::deterministic::{delta_deterministic, eps_deterministic, log_delta_deterministic};
use crate::error::Result;
use crate::lower_bounds::{
    log_poisson_halfspace_delta_lower, poisson_halfspace_delta_lower, shuffle_delta_lower, shuffle_eps_lower,
    tv_comparison, ShuffleBoundParams,
};
use crate::oracle::{estimate_hs, estimate_hs_multi, Direction as McDirection, MixturePairSpec};
use crate::pld::{Direction, PldOptions, PoissonPldAccountant, Rounding};
use crate::rdp::{delta_rdp, eps_rdp};

/// Golden `D_{e^0.5}(P_S‖Q_S)` at σ = 0.5, T = 3 from an independent 10⁸-sample run.
pub const GOLDEN_SHUFFLE_HS: (f64, f64) = (0.597_869_45, 3.9e-5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Fast,
    Full,
}

impl Suite {
    /// Monte-Carlo samples per oracle estimate.
    pub fn samples(self) -> u64 {
        match self {
            Suite::Fast => 200_000,
            Suite::Full => 10_000_000,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Fast => "fast",
            Suite::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    ClosedForm,
    Pld,
    Rdp,
    Shuffle,
    Ordering,
    Structural,
    Oracle,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::ClosedForm => "closed-form",
            Group::Pld => "pld",
            Group::Rdp => "rdp",
            Group::Shuffle => "shuffle",
            Group::Ordering => "ordering",
            Group::Structural => "structural",
            Group::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|measured − expected| ≤ tol`
    Within,
    /// `measured ≤ expected + tol`
    AtMost,
    /// `measured ≥ expected − tol`
    AtLeast,
    /// `measured < expected`
    Below,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Within => "~",
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Below => "<",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub group: Group,
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(group: Group, name: impl Into<String>, measured: f64, relation: Relation, expected: f64, tolerance: f64) -> Self {
        let passed = match relation {
            Relation::Within => (measured - expected).abs() <= tolerance,
            Relation::AtMost => measured <= expected + tolerance,
            Relation::AtLeast => measured >= expected - tolerance,
            Relation::Below => measured < expected,
        };
        Self { group, name: name.into(), measured, relation, expected, tolerance, passed }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: measured {:.6e} {} {:.6e} (tol {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.group,
            self.name,
            self.measured,
            self.relation,
            self.expected,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn group_passed(&self, group: Group) -> bool {
        self.checks.iter().filter(|c| c.group == group).all(|c| c.passed)
    }

    /// Plain-text report; identical for identical `(suite, seed)`.
    pub fn render(&self) -> String {
        let mut out = format!("validate suite={} seed={}\n", self.suite, self.seed);
        for c in &self.checks {
            let _ = writeln!(out, "{c}");
        }
        let n = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "passed {n}/{}", self.checks.len());
        out
    }
}

/// Largest `δ(ε₁) − δ(ε₂) − (e^{ε₂} − e^{ε₁})` over grid pairs `ε₁ < ε₂`.
pub fn lipschitz_excess(eps: &[f64], delta: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..eps.len() {
        for j in (i + 1)..eps.len() {
            worst = worst.max(delta[i] - delta[j] - (eps[j].exp() - eps[i].exp()));
        }
    }
    worst
}

/// `n` points `start, start + step, …`.
fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + step * i as f64).collect()
}

/// `σ ∈ {0.3, 0.4, …, 2.0}`.
pub fn ordering_sigmas() -> Vec<f64> {
    grid(0.3, 0.1, 18)
}

fn closed_form(out: &mut Vec<Check>) -> Result<()> {
    use Group::ClosedForm as G;
    out.push(Check::new(G, "delta_D(4) sigma=0.4", delta_deterministic(0.4, 4.0).delta, Relation::Within, 0.244, 5e-4));
    out.push(Check::new(G, "eps_D(1e-6) sigma=0.5", eps_deterministic(0.5, 1e-6)?.epsilon, Relation::Within, 10.997, 0.01));
    out.push(Check::new(G, "eps_D(1e-5) sigma=0.7", eps_deterministic(0.7, 1e-5)?.epsilon, Relation::Within, 6.652, 0.01));
    Ok(())
}

fn pld(out: &mut Vec<Check>) -> Result<()> {
    use Group::Pld as G;
    let opts = PldOptions::default();
    let a = PoissonPldAccountant::new(AccountingConfig::new(0.5, 10_000)?, opts)?;
    let (up, low) = a.epsilon(1e-6)?;
    out.push(Check::new(G, "eps_P(1e-6) sigma=0.5 T=1e4 pessimistic", up.epsilon, Relation::Within, 1.96, 0.05));
    out.push(Check::new(G, "eps_P(1e-6) sigma=0.5 T=1e4 optimistic <= pessimistic", low.epsilon, Relation::AtMost, up.epsilon, 0.0));
    let a = PoissonPldAccountant::new(AccountingConfig::new(1.3, 10_000)?, opts)?;
    let (up, low) = a.epsilon(1e-6)?;
    out.push(Check::new(G, "eps_P(1e-6) sigma=1.3 T=1e4 pessimistic", up.epsilon, Relation::Within, 0.031, 0.005));
    out.push(Check::new(G, "eps_P(1e-6) sigma=1.3 T=1e4 optimistic <= pessimistic", low.epsilon, Relation::AtMost, up.epsilon, 0.0));
    let a = PoissonPldAccountant::new(AccountingConfig::new(0.4, 10_000)?, opts)?;
    let (up, low) = a.delta(4.0);
    out.push(Check::new(G, "delta_P(4) sigma=0.4 T=1e4 pessimistic", up.delta, Relation::Within, 1.18e-5, 1.18e-6));
    out.push(Check::new(G, "delta_P(4) sigma=0.4 T=1e4 optimistic <= pessimistic", low.delta, Relation::AtMost, up.delta, 0.0));
    let a = PoissonPldAccountant::new(AccountingConfig::new(0.8, 1000)?, opts)?;
    let up = a.delta(1.0).0.delta;
    // tiny-δ regime: one order of magnitude in either direction
    out.push(Check::new(G, "log10 delta_P(1) sigma=0.8 T=1000 pessimistic", up.log10(), Relation::Within, 9.873e-9f64.log10(), 1.0));
    let a = PoissonPldAccountant::new(AccountingConfig::new(0.7, 1000)?, opts)?;
    out.push(Check::new(G, "eps_P(1e-5) sigma=0.7 T=1000 pessimistic", a.epsilon(1e-5)?.0.epsilon, Relation::Within, 0.61, 0.03));
    Ok(())
}

fn rdp(out: &mut Vec<Check>) -> Result<()> {
    use Group::Rdp as G;
    let cases = [(0.5, 10_000, 1e-6, 3.43), (0.7, 1000, 1e-5, 1.64), (0.4, 100_000, 1e-6, 4.71)];
    for (s, t, d, want) in cases {
        let e = eps_rdp(&AccountingConfig::new(s, t)?, d)?.epsilon;
        out.push(Check::new(G, format!("eps_rdp({d:e}) sigma={s} T={t}"), e, Relation::Within, want, 0.1 * want));
    }
    let d = delta_rdp(&AccountingConfig::new(0.8, 1000)?, 1.0)?.delta;
    out.push(Check::new(G, "delta_rdp(1) sigma=0.8 T=1000", d, Relation::Within, 3.346e-5, 0.15 * 3.346e-5));
    Ok(())
}

fn shuffle(out: &mut Vec<Check>) -> Result<()> {
    use Group::Shuffle as G;
    let p = ShuffleBoundParams::default();
    out.push(Check::new(G, "delta_S(4) sigma=0.4 T=1e4", shuffle_delta_lower(0.4, 10_000, 4.0, &p)?.delta, Relation::AtLeast, 0.226, 0.0));
    // these figures are printed to two significant digits; compare at that precision
    out.push(Check::new(
        G,
        "delta_S(12) sigma=0.4 T=1e4 at printed precision",
        shuffle_delta_lower(0.4, 10_000, 12.0, &p)?.delta,
        Relation::Within,
        7.5e-5,
        0.05e-5,
    ));
    out.push(Check::new(
        G,
        "delta_S(1) sigma=0.8 T=1000 at printed precision",
        shuffle_delta_lower(0.8, 1000, 1.0, &p)?.delta,
        Relation::Within,
        0.018,
        0.0005,
    ));
    out.push(Check::new(
        G,
        "delta_S(4) sigma=1.0 T=1000 at printed precision",
        shuffle_delta_lower(1.0, 1000, 4.0, &p)?.delta,
        Relation::Within,
        4.38e-7,
        0.005e-7,
    ));
    for (s, t, d, want) in [(0.5, 10_000, 1e-6, 10.994), (1.3, 10_000, 1e-6, 0.26), (1.3, 1000, 1e-5, 0.83)] {
        let e = shuffle_eps_lower(s, t, d, &p)?.epsilon;
        out.push(Check::new(G, format!("eps_S({d:e}) sigma={s} T={t}"), e, Relation::AtLeast, want, 0.0));
    }
    Ok(())
}

fn ordering(out: &mut Vec<Check>) -> Result<()> {
    use Group::Ordering as G;
    let p = ShuffleBoundParams::default();
    let up = PoissonPldAccountant::upper_only(AccountingConfig::new(0.5, 10_000)?, PldOptions::default())?
        .epsilon(1e-6)?
        .0
        .epsilon;
    let sh = shuffle_eps_lower(0.5, 10_000, 1e-6, &p)?.epsilon;
    out.push(Check::new(G, "eps_S / eps_P at sigma=0.5 T=1e4 delta=1e-6", sh / up, Relation::AtLeast, 5.0, 0.0));
    let dp = PoissonPldAccountant::upper_only(AccountingConfig::new(0.4, 10_000)?, PldOptions::default())?.delta(4.0).0.delta;
    let ds = shuffle_delta_lower(0.4, 10_000, 4.0, &p)?.delta;
    out.push(Check::new(G, "delta_S(4) / delta_P(4) at sigma=0.4 T=1e4", ds / dp, Relation::AtLeast, 1e4, 0.0));

    // shuffling never does worse than deterministic batches
    let mut worst = f64::NEG_INFINITY;
    for s in ordering_sigmas() {
        for t in [10, 1000, 10_000] {
            for e in grid(0.0, 0.5, 41) {
                worst = worst.max(shuffle_delta_lower(s, t, e, &p)?.delta - delta_deterministic(s, e).delta);
            }
        }
    }
    out.push(Check::new(G, "max delta_S lower - delta_D over sigma x T x eps grid", worst, Relation::AtMost, 0.0, 1e-12));

    for s in [0.3, 0.5, 1.0] {
        for t in [10, 100] {
            let r = tv_comparison(s, t)?;
            out.push(Check::new(G, format!("delta_P(0) < delta_D(0) sigma={s} T={t}"), r.pld_tv_poisson, Relation::Below, r.tv_deterministic, 0.0));
            out.push(Check::new(
                G,
                format!("delta_P(0) <= 1-(1-delta_D(0)/T)^T sigma={s} T={t}"),
                r.pld_tv_poisson,
                Relation::AtMost,
                r.tv_poisson_upper,
                1e-9,
            ));
        }
    }

    let crossing = (0..=500)
        .map(f64::from)
        .find(|&e| log_poisson_halfspace_delta_lower(0.3, 10, e).unwrap_or(f64::NEG_INFINITY) > log_delta_deterministic(0.3, e))
        .unwrap_or(f64::INFINITY);
    out.push(Check::new(G, "first eps with halfspace delta_P lower > delta_D (sigma=0.3 T=10)", crossing, Relation::AtMost, 500.0, 0.0));

    let pld10 = PoissonPldAccountant::upper_only(AccountingConfig::new(0.3, 10)?, PldOptions::default())?;
    for e in [1.0, 5.0, 20.0] {
        out.push(Check::new(
            G,
            format!("halfspace lower <= PLD upper sigma=0.3 T=10 eps={e}"),
            poisson_halfspace_delta_lower(0.3, 10, e)?.delta,
            Relation::AtMost,
            pld10.delta(e).0.delta,
            1e-12,
        ));
    }
    Ok(())
}

fn structural(out: &mut Vec<Check>, mc: &[(f64, f64)]) -> Result<()> {
    use Group::Structural as G;
    let p = ShuffleBoundParams::default();
    let eps = grid(0.0, 0.25, 41);
    let tol = 1e-12;
    for s in [0.3, 0.5, 1.0, 2.0] {
        let d: Vec<f64> = eps.iter().map(|&e| delta_deterministic(s, e).delta).collect();
        out.push(Check::new(G, format!("Lipschitz in e^eps: delta_D sigma={s}"), lipschitz_excess(&eps, &d), Relation::AtMost, 0.0, tol));
    }
    for (s, t) in [(0.5, 100), (1.0, 1000)] {
        let a = PoissonPldAccountant::upper_only(AccountingConfig::new(s, t)?, PldOptions::default())?;
        let d: Vec<f64> = eps.iter().map(|&e| a.delta(e).0.delta).collect();
        out.push(Check::new(G, format!("Lipschitz in e^eps: PLD upper sigma={s} T={t}"), lipschitz_excess(&eps, &d), Relation::AtMost, 0.0, tol));
    }
    for (s, t) in [(0.4, 10_000), (0.8, 1000)] {
        let d: Vec<f64> = eps.iter().map(|&e| shuffle_delta_lower(s, t, e, &p).map(|b| b.delta)).collect::<Result<_>>()?;
        out.push(Check::new(G, format!("Lipschitz in e^eps: delta_S lower sigma={s} T={t}"), lipschitz_excess(&eps, &d), Relation::AtMost, 0.0, tol));
    }
    let d: Vec<f64> = eps.iter().map(|&e| poisson_halfspace_delta_lower(0.3, 10, e).map(|b| b.delta)).collect::<Result<_>>()?;
    out.push(Check::new(G, "Lipschitz in e^eps: halfspace lower sigma=0.3 T=10", lipschitz_excess(&eps, &d), Relation::AtMost, 0.0, tol));

    // mixture of (N(1,.25), N(0,.25)) and (N(1,1), N(0,1)) with weights 0.3, 0.7
    for (i, e) in [0.0, 1.0].into_iter().enumerate() {
        let bound = 0.3 * delta_deterministic(0.5, e).delta + 0.7 * delta_deterministic(1.0, e).delta;
        let (est, se) = mc[i];
        out.push(Check::new(G, format!("joint convexity: mixture MC at eps={e} <= 0.3 D1 + 0.7 D2 (+3SE)"), est, Relation::AtMost, bound, 3.0 * se));
    }
    Ok(())
}

/// Mixture pair used by the joint-convexity check.
pub fn convexity_mixture() -> Result<MixturePairSpec> {
    MixturePairSpec::mixture(&[(0.3, MixturePairSpec::deterministic(0.5)?), (0.7, MixturePairSpec::deterministic(1.0)?)])
}

/// Monte-Carlo agreement checks with `n` samples per estimate; `golden` adds
/// the comparison with [`GOLDEN_SHUFFLE_HS`].
pub fn oracle_checks(n: u64, seed: u64, golden: bool) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    oracle(&mut out, n, seed, golden)?;
    Ok(out)
}

fn oracle(out: &mut Vec<Check>, n: u64, seed: u64, golden: bool) -> Result<()> {
    use Group::Oracle as G;
    let p = ShuffleBoundParams::default();
    let mut stream = seed;
    let mut next_seed = || {
        stream = stream.wrapping_add(0x9E37_79B9_7F4A_7C15);
        stream
    };

    for s in [0.4, 0.7, 1.0] {
        let spec = MixturePairSpec::deterministic(s)?;
        for est in estimate_hs_multi(&spec, &[0.0, 1.0, 4.0], n, next_seed(), McDirection::Forward)? {
            let exact = delta_deterministic(s, est.epsilon).delta;
            out.push(Check::new(G, format!("MC deterministic pair sigma={s} eps={}", est.epsilon), est.estimate, Relation::Within, exact, 3.0 * est.std_error));
        }
    }

    let eps = [0.0, 0.5, 1.0];
    for t in [1u64, 3, 5] {
        let config = AccountingConfig::with_sampling_probability(0.5, t, 0.2)?;
        let acc = PoissonPldAccountant::new(config, PldOptions::default())?;
        let spec = MixturePairSpec::poisson(0.5, t, 0.2)?;
        for (dir, mc_dir) in [(Direction::Add, McDirection::Forward), (Direction::Remove, McDirection::Reverse)] {
            let pess = acc.composed(Rounding::Pessimistic, dir).expect("built");
            let opt = acc.composed(Rounding::Optimistic, dir).expect("built");
            for est in estimate_hs_multi(&spec, &eps, n, next_seed(), mc_dir)? {
                let e = est.epsilon;
                let name = format!("MC Poisson pair sigma=0.5 q=0.2 T={t} {dir:?} eps={e}");
                out.push(Check::new(G, format!("{name} >= PLD optimistic"), est.estimate, Relation::AtLeast, opt.delta(e), 3.0 * est.std_error));
                out.push(Check::new(G, format!("{name} <= PLD pessimistic"), est.estimate, Relation::AtMost, pess.delta(e), 3.0 * est.std_error));
            }
        }
    }

    for t in [2u64, 3] {
        for s in [0.4, 1.0] {
            let spec = MixturePairSpec::shuffle(s, t)?;
            for est in estimate_hs_multi(&spec, &[0.0, 1.0, 2.0], n, next_seed(), McDirection::Forward)? {
                let e = est.epsilon;
                let lower = shuffle_delta_lower(s, t, e, &p)?.delta;
                out.push(Check::new(G, format!("E_C lower <= MC shuffle pair sigma={s} T={t} eps={e}"), lower, Relation::AtMost, est.estimate, 3.0 * est.std_error));
                out.push(Check::new(
                    G,
                    format!("MC shuffle pair <= delta_D sigma={s} T={t} eps={e}"),
                    est.estimate,
                    Relation::AtMost,
                    delta_deterministic(s, e).delta,
                    3.0 * est.std_error,
                ));
            }
        }
    }

    if golden {
        let spec = MixturePairSpec::shuffle(0.5, 3)?;
        let est = estimate_hs(&spec, 0.5, n, next_seed(), McDirection::Forward)?;
        let (g, gse) = GOLDEN_SHUFFLE_HS;
        let se = est.std_error.hypot(gse);
        out.push(Check::new(G, "MC shuffle pair sigma=0.5 T=3 eps=0.5 vs golden", est.estimate, Relation::Within, g, 3.0 * se));
    }
    Ok(())
}

/// Runs every check of `suite`; Monte-Carlo streams derive from `seed`.
pub fn run_suite(suite: Suite, seed: u64) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    closed_form(&mut checks)?;
    pld(&mut checks)?;
    rdp(&mut checks)?;
    shuffle(&mut checks)?;
    ordering(&mut checks)?;
    let mixture = convexity_mixture()?;
    let mc: Vec<(f64, f64)> = estimate_hs_multi(&mixture, &[0.0, 1.0], suite.samples(), seed ^ 0xB1, McDirection::Forward)?
        .into_iter()
        .map(|e| (e.estimate, e.std_error))
        .collect();
    structural(&mut checks, &mc)?;
    oracle(&mut checks, suite.samples(), seed, suite == Suite::Full)?;
    Ok(ValidationReport { suite, seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_relations() {
        assert!(Check::new(Group::Oracle, "a", 1.0, Relation::Within, 1.1, 0.2).passed);
        assert!(!Check::new(Group::Oracle, "a", 1.0, Relation::Below, 1.0, 0.0).passed);
        assert!(Check::new(Group::Oracle, "a", 1.0, Relation::AtMost, 0.9, 0.1).passed);
        assert!(!Check::new(Group::Oracle, "a", f64::NAN, Relation::AtLeast, 0.0, 1.0).passed);
    }

    #[test]
    fn lipschitz_excess_detects_steep_drop() {
        let eps = [0.0, 0.1];
        assert!(lipschitz_excess(&eps, &[0.5, 0.45]) <= 0.0);
        assert!(lipschitz_excess(&eps, &[0.5, 0.1]) > 0.0);
    }
}
