//! Shared configuration, privacy-bound records and curve inversion.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, AccountingError, Result};

/// Default bracket for ε searches.
pub const DEFAULT_EPSILON_BRACKET: (f64, f64) = (0.0, 1e4);

const INVERT_REL_TOL: f64 = 1e-6;
const INVERT_DELTA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    ZeroOut,
    Substitution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Exact,
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Deterministic,
    Poisson,
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "closed-form")]
    ClosedForm,
    #[serde(rename = "pld")]
    Pld,
    #[serde(rename = "rdp")]
    Rdp,
    #[serde(rename = "ec-bound")]
    EcBound,
    #[serde(rename = "halfspace")]
    Halfspace,
    #[serde(rename = "mc")]
    MonteCarlo,
}

/// Conditions attached to a bound that a reader must not miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFlag {
    /// δ exceeded 1 and was clamped.
    DeltaClamped,
    /// The requested δ is at least the curve value at ε = 0, so ε = 0 is returned.
    EpsilonAtFloor,
    /// No order or grid point produced a finite value.
    Unbounded,
}

impl std::fmt::Display for Adjacency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Adjacency::ZeroOut => "zero_out",
            Adjacency::Substitution => "substitution",
        })
    }
}

impl std::fmt::Display for BoundFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundFlag::DeltaClamped => "delta_clamped",
            BoundFlag::EpsilonAtFloor => "epsilon_at_floor",
            BoundFlag::Unbounded => "unbounded",
        })
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundKind::Exact => "exact",
            BoundKind::Upper => "upper",
            BoundKind::Lower => "lower",
        })
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Deterministic => "deterministic",
            Mechanism::Poisson => "poisson",
            Mechanism::Shuffle => "shuffle",
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed-form",
            Method::Pld => "pld",
            Method::Rdp => "rdp",
            Method::EcBound => "ec-bound",
            Method::Halfspace => "halfspace",
            Method::MonteCarlo => "mc",
        })
    }
}

/// Noise scale, step count, Poisson sampling probability and adjacency.
///
/// `sigma` is in units of the query sensitivity (clip norm 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountingConfig {
    pub sigma: f64,
    pub steps: u64,
    pub sampling_probability: f64,
    pub adjacency: Adjacency,
}

impl AccountingConfig {
    /// Single-epoch configuration: `q = 1/T`, zero-out adjacency.
    pub fn new(sigma: f64, steps: u64) -> Result<Self> {
        if steps == 0 {
            return Err(AccountingError::InvalidParameter {
                name: "steps",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Self::with_sampling_probability(sigma, steps, 1.0 / steps as f64)
    }

    pub fn with_sampling_probability(sigma: f64, steps: u64, q: f64) -> Result<Self> {
        let config = Self {
            sigma,
            steps,
            sampling_probability: q,
            adjacency: Adjacency::ZeroOut,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("sigma", self.sigma)?;
        if self.steps == 0 {
            return Err(AccountingError::InvalidParameter {
                name: "steps",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        check_probability("sampling_probability", self.sampling_probability)
    }
}

/// An (ε, δ) point together with what it means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBound {
    pub epsilon: f64,
    pub delta: f64,
    pub kind: BoundKind,
    pub mechanism: Mechanism,
    pub method: Method,
    pub adjacency: Adjacency,
    /// Maximizing threshold `C` of the shuffle event family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_c: Option<f64>,
    /// Minimizing Rényi order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rdp_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<BoundFlag>,
}

impl PrivacyBound {
    pub fn new(epsilon: f64, delta: f64, kind: BoundKind, mechanism: Mechanism, method: Method) -> Self {
        Self {
            epsilon,
            delta,
            kind,
            mechanism,
            method,
            adjacency: Adjacency::ZeroOut,
            argmax_c: None,
            rdp_order: None,
            flag: None,
        }
    }

    pub fn with_flag(mut self, flag: BoundFlag) -> Self {
        self.flag = Some(flag);
        self
    }
}

/// Inverts a nonincreasing privacy curve `ε ↦ δ` by bisection.
///
/// For `Upper`/`Exact` curves the returned ε satisfies `delta_fn(ε) ≤ target`
/// (a valid, possibly slightly conservative ε); for `Lower` curves it
/// satisfies `delta_fn(ε) ≥ target`, so it never overstates a lower bound.
/// When `delta_fn(lo) ≤ target` the left end is returned.
pub fn invert_curve<F>(delta_fn: F, target_delta: f64, bracket: (f64, f64), kind: BoundKind) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = bracket;
    if !(target_delta > 0.0 && target_delta < 1.0) {
        return Err(AccountingError::InvalidParameter {
            name: "target_delta",
            value: target_delta,
            reason: "must lie in (0, 1)",
        });
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(AccountingError::InvalidParameter {
            name: "bracket",
            value: hi - lo,
            reason: "must be a finite interval with lo <= hi",
        });
    }
    let mut f_lo = delta_fn(lo);
    if f_lo <= target_delta {
        return Ok(lo);
    }
    let mut f_hi = delta_fn(hi);
    if f_hi > target_delta {
        return Err(AccountingError::BracketFailure {
            target: target_delta,
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    // invariant: f_lo > target >= f_hi
    for _ in 0..200 {
        if hi - lo <= INVERT_REL_TOL * hi.abs().max(1e-9) || f_lo - f_hi <= INVERT_DELTA_TOL * target_delta {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = delta_fn(mid);
        if f_mid > target_delta {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Ok(match kind {
        BoundKind::Lower => lo,
        BoundKind::Upper | BoundKind::Exact => hi,
    })
}

/// Zero-out → substitution adjacency via group privacy: (ε, δ) ↦ (2ε, δ(1 + e^ε)).
///
/// Only guarantees transfer this way, so lower bounds are rejected.
pub fn group_privacy_zero_out_to_substitution(bound: &PrivacyBound) -> Result<PrivacyBound> {
    if bound.kind == BoundKind::Lower {
        return Err(AccountingError::UnsupportedConversion("exact or upper bounds"));
    }
    if bound.adjacency != Adjacency::ZeroOut {
        return Err(AccountingError::UnsupportedConversion("zero-out adjacency"));
    }
    let mut out = bound.clone();
    out.epsilon = 2.0 * bound.epsilon;
    out.adjacency = Adjacency::Substitution;
    let delta = if bound.delta == 0.0 { 0.0 } else { bound.delta * (1.0 + bound.epsilon.exp()) };
    if delta > 1.0 {
        out.delta = 1.0;
        out.flag = Some(BoundFlag::DeltaClamped);
    } else {
        out.delta = delta;
    }
    if out.kind == BoundKind::Exact {
        // the conversion only yields a guarantee
        out.kind = BoundKind::Upper;
    }
    Ok(out)
}
