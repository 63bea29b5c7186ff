//! Privacy-loss-distribution accountant for ABLQ with Poisson batch sampling.
//!
//! One step of the mechanism is dominated by the Poisson-subsampled Gaussian
//! pair; the whole run is its `T`-fold composition. Pessimistic and optimistic
//! discretizations of the loss give certified upper and lower bounds.

mod compose;
mod step;

use serde::{Deserialize, Serialize};

pub use compose::{self_compose, self_compose_with, DEFAULT_GRID_CAP};
pub use step::{discretize_step, step_loss_cdf, Direction, SubsampledGaussianStep};

use crate::accounting::{
    invert_curve, AccountingConfig, Adjacency, BoundFlag, BoundKind, Mechanism, Method, PrivacyBound,
};
use crate::error::{check_positive, AccountingError, Result};
use crate::numeric::NeumaierSum;

pub const DEFAULT_GRID_SPACING: f64 = 1e-4;
pub const DEFAULT_TAIL_MASS: f64 = 1e-15;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Pessimistic,
    Optimistic,
}

impl Rounding {
    pub fn bound_kind(self) -> BoundKind {
        match self {
            Rounding::Pessimistic => BoundKind::Upper,
            Rounding::Optimistic => BoundKind::Lower,
        }
    }
}

/// A privacy loss distribution on the grid `{(origin_index + i)·h}` plus a
/// point mass at `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePld {
    grid_spacing: f64,
    origin_index: i64,
    masses: Vec<f64>,
    infinity_mass: f64,
    rounding: Rounding,
}

impl DiscretePld {
    pub fn new(grid_spacing: f64, origin_index: i64, masses: Vec<f64>, infinity_mass: f64, rounding: Rounding) -> Result<Self> {
        check_positive("grid_spacing", grid_spacing)?;
        if masses.is_empty() {
            return Err(AccountingError::DimensionMismatch { expected: 1, got: 0 });
        }
        if let Some(&bad) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(AccountingError::InvalidParameter {
                name: "masses",
                value: bad,
                reason: "must be finite and nonnegative",
            });
        }
        if !(0.0..=1.0).contains(&infinity_mass) {
            return Err(AccountingError::InvalidParameter {
                name: "infinity_mass",
                value: infinity_mass,
                reason: "must lie in [0, 1]",
            });
        }
        let pld = Self::from_parts(grid_spacing, origin_index, masses, infinity_mass, rounding);
        let total = pld.total_mass();
        let ok = match rounding {
            Rounding::Pessimistic => (total - 1.0).abs() <= MASS_TOLERANCE,
            Rounding::Optimistic => total <= 1.0 + MASS_TOLERANCE,
        };
        if !ok {
            return Err(AccountingError::InvalidParameter {
                name: "masses",
                value: total,
                reason: "total mass violates the rounding invariant",
            });
        }
        Ok(pld)
    }

    pub(crate) fn from_parts(grid_spacing: f64, origin_index: i64, masses: Vec<f64>, infinity_mass: f64, rounding: Rounding) -> Self {
        Self {
            grid_spacing,
            origin_index,
            masses,
            infinity_mass,
            rounding,
        }
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn origin_index(&self) -> i64 {
        self.origin_index
    }

    /// Loss value of index 0.
    pub fn origin(&self) -> f64 {
        self.origin_index as f64 * self.grid_spacing
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn loss_at(&self, i: usize) -> f64 {
        (self.origin_index + i as i64) as f64 * self.grid_spacing
    }

    pub fn max_loss(&self) -> f64 {
        self.loss_at(self.masses.len() - 1)
    }

    pub fn total_mass(&self) -> f64 {
        let mut s = NeumaierSum::default();
        for &m in &self.masses {
            s.add(m);
        }
        s.add(self.infinity_mass);
        s.value()
    }

    /// Hockey-stick divergence `Σ_{ℓᵢ>ε} pᵢ(1 − e^{ε−ℓᵢ}) + m_∞`.
    pub fn delta(&self, epsilon: f64) -> f64 {
        let h = self.grid_spacing;
        let first = ((epsilon / h).floor() as i128 + 1 - self.origin_index as i128).max(0);
        let mut s = NeumaierSum::default();
        s.add(self.infinity_mass);
        if first < self.masses.len() as i128 {
            for (i, &m) in self.masses.iter().enumerate().skip(first as usize) {
                let l = self.loss_at(i);
                if l > epsilon {
                    s.add(m * -(epsilon - l).exp_m1());
                }
            }
        }
        s.value().clamp(0.0, 1.0)
    }

    /// Smallest ε on the grid bracket with `delta(ε) ≤ target` (pessimistic) or
    /// the largest with `delta(ε) ≥ target` (optimistic).
    pub fn epsilon(&self, target_delta: f64) -> Result<f64> {
        let hi = self.max_loss().max(0.0) + 1.0;
        invert_curve(|e| self.delta(e), target_delta, (0.0, hi), self.rounding.bound_kind())
    }
}

/// Hockey-stick divergence of a discrete PLD, see [`DiscretePld::delta`].
pub fn pld_delta(pld: &DiscretePld, epsilon: f64) -> f64 {
    pld.delta(epsilon)
}

/// ε for a target δ, see [`DiscretePld::epsilon`].
pub fn pld_epsilon(pld: &DiscretePld, target_delta: f64) -> Result<f64> {
    pld.epsilon(target_delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PldOptions {
    pub grid_spacing: f64,
    pub tail_mass: f64,
    pub grid_cap: usize,
}

impl Default for PldOptions {
    fn default() -> Self {
        Self {
            grid_spacing: DEFAULT_GRID_SPACING,
            tail_mass: DEFAULT_TAIL_MASS,
            grid_cap: DEFAULT_GRID_CAP,
        }
    }
}

/// Composed PLDs of both directions under one rounding.
#[derive(Debug, Clone)]
struct DirectionPair {
    add: DiscretePld,
    remove: DiscretePld,
}

impl DirectionPair {
    fn delta(&self, epsilon: f64) -> f64 {
        self.add.delta(epsilon).max(self.remove.delta(epsilon))
    }

    fn epsilon(&self, delta: f64) -> Result<f64> {
        Ok(self.add.epsilon(delta)?.max(self.remove.epsilon(delta)?))
    }
}

/// Holds the composed PLDs for a configuration so repeated queries are cheap.
#[derive(Debug, Clone)]
pub struct PoissonPldAccountant {
    config: AccountingConfig,
    options: PldOptions,
    pessimistic: DirectionPair,
    optimistic: Option<DirectionPair>,
}

impl PoissonPldAccountant {
    pub fn new(config: AccountingConfig, options: PldOptions) -> Result<Self> {
        Self::build(config, options, true)
    }

    /// Pessimistic side only; lower bounds degrade to the trivial 0 and `ε = 0`.
    pub fn upper_only(config: AccountingConfig, options: PldOptions) -> Result<Self> {
        Self::build(config, options, false)
    }

    fn build(config: AccountingConfig, options: PldOptions, with_lower: bool) -> Result<Self> {
        config.validate()?;
        if config.adjacency != Adjacency::ZeroOut {
            return Err(AccountingError::UnsupportedConversion(
                "zero-out adjacency; convert the result with group privacy",
            ));
        }
        let build = |rounding| -> Result<DirectionPair> {
            let compose = |direction| -> Result<DiscretePld> {
                let step = SubsampledGaussianStep::new(config.sigma, config.sampling_probability, direction)?;
                let single = discretize_step(&step, options.grid_spacing, rounding, options.tail_mass)?;
                self_compose_with(&single, config.steps, options.tail_mass, options.grid_cap)
            };
            Ok(DirectionPair {
                add: compose(Direction::Add)?,
                remove: compose(Direction::Remove)?,
            })
        };
        Ok(Self {
            config,
            options,
            pessimistic: build(Rounding::Pessimistic)?,
            optimistic: if with_lower { Some(build(Rounding::Optimistic)?) } else { None },
        })
    }

    pub fn config(&self) -> &AccountingConfig {
        &self.config
    }

    pub fn options(&self) -> &PldOptions {
        &self.options
    }

    /// `None` for the optimistic side of an [`upper_only`](Self::upper_only) accountant.
    pub fn composed(&self, rounding: Rounding, direction: Direction) -> Option<&DiscretePld> {
        let pair = match rounding {
            Rounding::Pessimistic => &self.pessimistic,
            Rounding::Optimistic => self.optimistic.as_ref()?,
        };
        Some(match direction {
            Direction::Add => &pair.add,
            Direction::Remove => &pair.remove,
        })
    }

    fn bound(epsilon: f64, delta: f64, kind: BoundKind) -> PrivacyBound {
        PrivacyBound::new(epsilon, delta, kind, Mechanism::Poisson, Method::Pld)
    }

    /// (upper, lower) bounds on `δ_P(ε)`, maximized over both directions.
    pub fn delta(&self, epsilon: f64) -> (PrivacyBound, PrivacyBound) {
        let up = self.pessimistic.delta(epsilon);
        let low = self.optimistic.as_ref().map_or(0.0, |o| o.delta(epsilon).min(up));
        (
            Self::bound(epsilon, up, BoundKind::Upper),
            Self::bound(epsilon, low, BoundKind::Lower),
        )
    }

    /// (upper, lower) bounds on `ε_P(δ)`.
    pub fn epsilon(&self, delta: f64) -> Result<(PrivacyBound, PrivacyBound)> {
        let up = self.pessimistic.epsilon(delta)?;
        let low = match self.optimistic.as_ref().map_or(Ok(0.0), |o| o.epsilon(delta)) {
            Ok(e) => e.min(up),
            Err(AccountingError::BracketFailure { .. }) => up,
            Err(e) => return Err(e),
        };
        let mut upper = Self::bound(up, delta, BoundKind::Upper);
        let mut lower = Self::bound(low, delta, BoundKind::Lower);
        if up == 0.0 {
            upper.flag = Some(BoundFlag::EpsilonAtFloor);
        }
        if low == 0.0 {
            lower.flag = Some(BoundFlag::EpsilonAtFloor);
        }
        Ok((upper, lower))
    }
}

/// (upper, lower) PLD bounds on `δ_P(ε)` with default discretization.
pub fn delta_poisson(config: &AccountingConfig, epsilon: f64) -> Result<(PrivacyBound, PrivacyBound)> {
    Ok(PoissonPldAccountant::new(*config, PldOptions::default())?.delta(epsilon))
}

/// (upper, lower) PLD bounds on `ε_P(δ)` with default discretization.
pub fn eps_poisson(config: &AccountingConfig, delta: f64) -> Result<(PrivacyBound, PrivacyBound)> {
    PoissonPldAccountant::new(*config, PldOptions::default())?.epsilon(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::delta_deterministic;

    fn toy() -> DiscretePld {
        DiscretePld::new(0.5, -1, vec![0.2, 0.3, 0.4], 0.1, Rounding::Pessimistic).unwrap()
    }

    #[test]
    fn invariants_checked() {
        assert!(DiscretePld::new(0.5, 0, vec![0.5, 0.4], 0.0, Rounding::Pessimistic).is_err());
        assert!(DiscretePld::new(0.5, 0, vec![0.5, 0.4], 0.0, Rounding::Optimistic).is_ok());
        assert!(DiscretePld::new(0.5, 0, vec![0.5, -0.1, 0.6], 0.0, Rounding::Optimistic).is_err());
        assert!(DiscretePld::new(0.5, 0, vec![], 0.0, Rounding::Optimistic).is_err());
        assert!(DiscretePld::new(0.0, 0, vec![1.0], 0.0, Rounding::Optimistic).is_err());
        assert!(DiscretePld::new(0.5, 0, vec![0.5], 1.5, Rounding::Optimistic).is_err());
    }

    #[test]
    fn delta_by_hand() {
        let p = toy();
        // losses −0.5, 0, 0.5
        let expected = 0.4 * (1.0 - (-0.5f64).exp()) + 0.1;
        assert!((p.delta(0.0) - expected).abs() < 1e-15);
        assert_eq!(p.delta(10.0), 0.1);
        assert!((p.delta(-1e6) - 1.0).abs() < 1e-15);
        assert_eq!(p.origin(), -0.5);
    }

    #[test]
    fn epsilon_inverts_delta() {
        let p = DiscretePld::new(0.5, -2, vec![0.5, 0.5], 0.0, Rounding::Optimistic).unwrap();
        assert_eq!(p.epsilon(0.1).unwrap(), 0.0);
        let p = toy();
        assert!(matches!(p.epsilon(0.05), Err(AccountingError::BracketFailure { .. })));
        let e = p.epsilon(0.2).unwrap();
        assert!(p.delta(e) <= 0.2 && (p.delta(e) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn full_sampling_single_step_matches_closed_form() {
        let (s, h, tail) = (0.5, 1e-4, 1e-15);
        let st = SubsampledGaussianStep::new(s, 1.0, Direction::Add).unwrap();
        let exact = delta_deterministic(s, 1.0).delta;
        for rounding in [Rounding::Pessimistic, Rounding::Optimistic] {
            let p = self_compose(&discretize_step(&st, h, rounding, tail).unwrap(), 1).unwrap();
            let d = p.delta(1.0);
            assert!((d - exact).abs() <= 2.0 * h * 1f64.exp() + 2.0 * tail, "{rounding:?} {d} vs {exact}");
        }
    }

    #[test]
    fn composition_is_associative() {
        let st = SubsampledGaussianStep::new(0.8, 0.1, Direction::Add).unwrap();
        let p = discretize_step(&st, 1e-3, Rounding::Pessimistic, 1e-12).unwrap();
        let four = self_compose(&p, 4).unwrap();
        let two_two = self_compose(&self_compose(&p, 2).unwrap(), 2).unwrap();
        let off = four.origin_index() - two_two.origin_index();
        for (i, &m) in four.masses().iter().enumerate() {
            let j = i as i64 + off;
            let other = if j >= 0 && (j as usize) < two_two.masses().len() { two_two.masses()[j as usize] } else { 0.0 };
            assert!((m - other).abs() < 1e-12, "bucket {i}: {m} vs {other}");
        }
        assert!((four.infinity_mass() - two_two.infinity_mass()).abs() < 1e-12);
    }

    #[test]
    fn sandwich_and_gap_shrinks() {
        let config = AccountingConfig::with_sampling_probability(0.5, 5, 0.2).unwrap();
        let mut prev_gap = f64::INFINITY;
        for &h in &[4e-4, 2e-4, 1e-4] {
            let opts = PldOptions { grid_spacing: h, ..PldOptions::default() };
            let acc = PoissonPldAccountant::new(config, opts).unwrap();
            let mut gap = 0.0f64;
            for &e in &[0.0, 0.5, 1.0, 2.0] {
                let (up, low) = acc.delta(e);
                assert!(low.delta <= up.delta);
                gap = gap.max(up.delta - low.delta);
            }
            assert!(gap < prev_gap, "h={h} gap={gap}");
            prev_gap = gap;
        }
    }

    #[test]
    fn rejects_substitution_config() {
        let mut config = AccountingConfig::new(1.0, 10).unwrap();
        config.adjacency = Adjacency::Substitution;
        assert!(PoissonPldAccountant::new(config, PldOptions::default()).is_err());
    }
}
