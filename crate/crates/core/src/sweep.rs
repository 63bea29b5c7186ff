//! Parameter sweeps producing the curve data of the figure presets as CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{AccountingConfig, PrivacyBound};
use crate::deterministic::{delta_deterministic, eps_deterministic};
use crate::error::{check_positive, AccountingError, Result};
use crate::lower_bounds::{
    poisson_halfspace_delta_lower, poisson_halfspace_eps_lower, shuffle_delta_lower, shuffle_eps_lower, ShuffleBoundParams,
};
use crate::pld::{PldOptions, PoissonPldAccountant};
use crate::rdp::{default_orders, delta_rdp_from_curve, eps_rdp_from_curve, RdpCurve};

pub const CSV_HEADER: &str = "x,mechanism,method,kind,epsilon,delta";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// `x = σ`, ε at fixed δ.
    EpsVsSigma,
    /// `x = ε`, δ at fixed σ.
    DeltaVsEps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accountant {
    Deterministic,
    PoissonPld,
    PoissonRdp,
    ShuffleLower,
    PoissonHalfspaceLower,
}

impl Accountant {
    pub const ALL: [Accountant; 5] = [
        Accountant::Deterministic,
        Accountant::PoissonPld,
        Accountant::PoissonRdp,
        Accountant::ShuffleLower,
        Accountant::PoissonHalfspaceLower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Accountant::Deterministic => "deterministic",
            Accountant::PoissonPld => "poisson-pld",
            Accountant::PoissonRdp => "poisson-rdp",
            Accountant::ShuffleLower => "shuffle-lower",
            Accountant::PoissonHalfspaceLower => "poisson-halfspace-lower",
        }
    }
}

impl std::fmt::Display for Accountant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Accountant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Accountant::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown accountant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub steps: u64,
    /// Fixed σ for [`SweepMode::DeltaVsEps`].
    pub sigma: Option<f64>,
    /// Fixed δ for [`SweepMode::EpsVsSigma`].
    pub delta: Option<f64>,
    pub grid: Vec<f64>,
    pub accountants: Vec<Accountant>,
    pub pld: PldOptions,
    pub shuffle: ShuffleBoundParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub accountant: Accountant,
    pub bound: PrivacyBound,
}

/// `n` evenly spaced points on `[start, stop]`.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> AccountingError {
    AccountingError::InvalidParameter { name, value, reason }
}

impl SweepSpec {
    pub fn eps_vs_sigma(delta: f64, steps: u64, sigmas: Vec<f64>, accountants: Vec<Accountant>) -> Self {
        Self {
            mode: SweepMode::EpsVsSigma,
            steps,
            sigma: None,
            delta: Some(delta),
            grid: sigmas,
            accountants,
            pld: PldOptions::default(),
            shuffle: ShuffleBoundParams::default(),
        }
    }

    pub fn delta_vs_eps(sigma: f64, steps: u64, epsilons: Vec<f64>, accountants: Vec<Accountant>) -> Self {
        Self {
            mode: SweepMode::DeltaVsEps,
            steps,
            sigma: Some(sigma),
            delta: None,
            grid: epsilons,
            accountants,
            pld: PldOptions::default(),
            shuffle: ShuffleBoundParams::default(),
        }
    }

    /// Named presets `fig1` … `fig7`.
    pub fn preset(name: &str) -> Option<Self> {
        use Accountant::*;
        let upper = vec![Deterministic, PoissonPld, PoissonRdp, ShuffleLower];
        let sigmas = linspace(0.3, 2.0, 18);
        Some(match name {
            "fig1" => Self::eps_vs_sigma(1e-6, 10_000, sigmas, upper),
            "fig2" => Self::delta_vs_eps(0.3, 10, linspace(0.0, 60.0, 61), vec![Deterministic, PoissonPld, PoissonHalfspaceLower]),
            "fig3" => Self::delta_vs_eps(0.4, 10_000, linspace(0.0, 16.0, 33), upper),
            // the caption says T = 10,000; the accompanying text says 100,000
            "fig4" => Self::eps_vs_sigma(1e-6, 100_000, sigmas, upper),
            "fig5" => Self::eps_vs_sigma(1e-5, 1000, sigmas, upper),
            "fig6" => Self::delta_vs_eps(0.8, 1000, linspace(0.0, 8.0, 33), upper),
            "fig7" => Self::delta_vs_eps(1.0, 1000, linspace(0.0, 8.0, 33), upper),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

    pub fn validate(&self) -> Result<()> {
        if self.accountants.is_empty() {
            return Err(invalid("accountants", 0.0, "at least one accountant is required"));
        }
        if self.grid.is_empty() {
            return Err(invalid("grid", 0.0, "grid must be nonempty"));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|x| !x.is_finite()) {
            return Err(invalid("grid", f64::NAN, "grid must be finite and strictly increasing"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", 0.0, "must be at least 1"));
        }
        match self.mode {
            SweepMode::EpsVsSigma => {
                let d = self.delta.ok_or(invalid("delta", f64::NAN, "required for an eps-vs-sigma sweep"))?;
                if !(d > 0.0 && d < 1.0) {
                    return Err(invalid("delta", d, "must lie in (0, 1)"));
                }
                if self.grid[0] <= 0.0 {
                    return Err(invalid("sigma", self.grid[0], "grid values must be positive"));
                }
            }
            SweepMode::DeltaVsEps => {
                check_positive("sigma", self.sigma.unwrap_or(f64::NAN))?;
                if self.grid[0] < 0.0 {
                    return Err(invalid("epsilon", self.grid[0], "grid values must be nonnegative"));
                }
            }
        }
        if self.accountants.contains(&Accountant::PoissonHalfspaceLower) && self.steps < 2 {
            return Err(invalid("steps", self.steps as f64, "the halfspace bound needs at least 2 steps"));
        }
        self.shuffle.validate()
    }

    fn eps_row(&self, sigma: f64, acc: Accountant) -> Result<PrivacyBound> {
        let delta = self.delta.expect("validated");
        let t = self.steps;
        match acc {
            Accountant::Deterministic => eps_deterministic(sigma, delta),
            Accountant::PoissonPld => {
                let config = AccountingConfig::new(sigma, t)?;
                Ok(PoissonPldAccountant::upper_only(config, self.pld)?.epsilon(delta)?.0)
            }
            Accountant::PoissonRdp => {
                let curve = RdpCurve::subsampled_gaussian(sigma, 1.0 / t as f64, t, default_orders())?;
                Ok(eps_rdp_from_curve(&curve, delta))
            }
            Accountant::ShuffleLower => shuffle_eps_lower(sigma, t, delta, &self.shuffle),
            Accountant::PoissonHalfspaceLower => poisson_halfspace_eps_lower(sigma, t, delta),
        }
    }

    fn run_delta_vs_eps(&self) -> Result<Vec<SweepRow>> {
        let sigma = self.sigma.expect("validated");
        let t = self.steps;
        let pld = if self.accountants.contains(&Accountant::PoissonPld) {
            Some(PoissonPldAccountant::upper_only(AccountingConfig::new(sigma, t)?, self.pld)?)
        } else {
            None
        };
        let rdp = if self.accountants.contains(&Accountant::PoissonRdp) {
            Some(RdpCurve::subsampled_gaussian(sigma, 1.0 / t as f64, t, default_orders())?)
        } else {
            None
        };
        let per_point = |&e: &f64| -> Result<Vec<SweepRow>> {
            self.accountants
                .iter()
                .map(|&acc| {
                    let bound = match acc {
                        Accountant::Deterministic => delta_deterministic(sigma, e),
                        Accountant::PoissonPld => pld.as_ref().expect("built").delta(e).0,
                        Accountant::PoissonRdp => delta_rdp_from_curve(rdp.as_ref().expect("built"), e),
                        Accountant::ShuffleLower => shuffle_delta_lower(sigma, t, e, &self.shuffle)?,
                        Accountant::PoissonHalfspaceLower => poisson_halfspace_delta_lower(sigma, t, e)?,
                    };
                    Ok(SweepRow { x: e, accountant: acc, bound })
                })
                .collect()
        };
        let rows: Result<Vec<Vec<SweepRow>>> = self.grid.par_iter().map(per_point).collect();
        Ok(rows?.into_iter().flatten().collect())
    }

    /// All rows in grid order, then accountant order.
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        self.validate()?;
        match self.mode {
            SweepMode::DeltaVsEps => self.run_delta_vs_eps(),
            SweepMode::EpsVsSigma => {
                let jobs: Vec<(f64, Accountant)> = self
                    .grid
                    .iter()
                    .flat_map(|&s| self.accountants.iter().map(move |&a| (s, a)))
                    .collect();
                jobs.par_iter()
                    .map(|&(s, a)| Ok(SweepRow { x: s, accountant: a, bound: self.eps_row(s, a)? }))
                    .collect()
            }
        }
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "nan".to_string()
    }
}

/// CSV with [`CSV_HEADER`]; each value carries 17 significant digits.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let b = &r.bound;
        let _ = writeln!(out, "{},{},{},{},{},{}", num(r.x), b.mechanism, b.method, b.kind, num(b.epsilon), num(b.delta));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::BoundKind;

    #[test]
    fn rejects_bad_specs() {
        let mut s = SweepSpec::delta_vs_eps(0.5, 10, vec![0.0, 1.0], vec![]);
        assert!(s.run().is_err());
        s.accountants = vec![Accountant::Deterministic];
        s.grid = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        s.grid = vec![];
        assert!(s.validate().is_err());
        let s = SweepSpec::eps_vs_sigma(1.5, 10, vec![0.5], vec![Accountant::Deterministic]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_layout_and_order() {
        let spec = SweepSpec::delta_vs_eps(
            0.5,
            10,
            vec![0.0, 1.0, 2.0],
            vec![Accountant::Deterministic, Accountant::ShuffleLower, Accountant::PoissonHalfspaceLower],
        );
        let rows = spec.run().unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[4].x, 1.0);
        assert_eq!(rows[4].accountant, Accountant::ShuffleLower);
        assert_eq!(rows[4].bound.kind, BoundKind::Lower);
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("0.0000000000000000e0,deterministic,closed-form,exact,"));
        assert!(lines[2].contains(",shuffle,ec-bound,lower,"));
        assert_eq!(csv, to_csv(&spec.run().unwrap()));
    }

    #[test]
    fn presets_validate() {
        for name in SweepSpec::PRESETS {
            SweepSpec::preset(name).unwrap().validate().unwrap();
        }
        assert!(SweepSpec::preset("fig9").is_none());
        assert_eq!("poisson-rdp".parse::<Accountant>(), Ok(Accountant::PoissonRdp));
    }
}
