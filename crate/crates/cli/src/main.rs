use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use ablq_core::lower_bounds::{poisson_halfspace_eps_lower, ShuffleBoundParams};
use ablq_core::oracle::simulate_ablq_run;
use ablq_core::pld::{PldOptions, PoissonPldAccountant};
use ablq_core::sweep::{linspace, to_csv, Accountant, SweepMode, SweepSpec};
use ablq_core::validation::{run_suite, Suite};
use ablq_core::{
    delta_deterministic, delta_rdp, eps_deterministic, eps_rdp, group_privacy_zero_out_to_substitution,
    poisson_halfspace_delta_lower, shuffle_delta_lower, shuffle_eps_lower, AccountingConfig, AccountingError, Adjacency,
    Mechanism, PrivacyBound,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAILED_CHECKS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BRACKET: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "ablq", version, about = "Privacy accounting for adaptive batch linear queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single (ε, δ) point for one mechanism and accountant.
    Query(QueryArgs),
    /// Curve data as CSV.
    Sweep(SweepArgs),
    /// Run the validation suite.
    Validate(ValidateArgs),
    /// One simulated run of the mechanism.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Deterministic,
    Poisson,
    Shuffle,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Deterministic => Mechanism::Deterministic,
            MechanismArg::Poisson => Mechanism::Poisson,
            MechanismArg::Shuffle => Mechanism::Shuffle,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QueryAccountant {
    ClosedForm,
    Pld,
    Rdp,
    EcBound,
    Halfspace,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AdjacencyArg {
    ZeroOut,
    Substitution,
}

#[derive(Args)]
struct Discretization {
    /// PLD loss-grid spacing.
    #[arg(long, default_value_t = 1e-4)]
    discretization: f64,
    /// PLD tail mass truncated per side.
    #[arg(long, default_value_t = 1e-15)]
    tail_mass: f64,
    /// Largest shuffle threshold C.
    #[arg(long, default_value_t = 100.0)]
    c_max: f64,
    /// Shuffle threshold spacing.
    #[arg(long, default_value_t = 0.01)]
    c_step: f64,
}

impl Discretization {
    fn pld(&self) -> PldOptions {
        PldOptions { grid_spacing: self.discretization, tail_mass: self.tail_mass, ..PldOptions::default() }
    }

    fn shuffle(&self) -> ShuffleBoundParams {
        ShuffleBoundParams { c_max: self.c_max, c_step: self.c_step, ..ShuffleBoundParams::default() }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_enum)]
    mechanism: MechanismArg,
    /// Defaults to closed-form, pld or ec-bound by mechanism.
    #[arg(long, value_enum)]
    accountant: Option<QueryAccountant>,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    steps: u64,
    #[arg(long, conflicts_with = "delta", required_unless_present = "delta")]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Report the optimistic PLD lower bound instead of the upper bound.
    #[arg(long)]
    lower: bool,
    #[arg(long, value_enum, default_value_t = AdjacencyArg::ZeroOut)]
    adjacency: AdjacencyArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(flatten)]
    disc: Discretization,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    EpsVsSigma,
    DeltaVsEps,
}

#[derive(Args)]
struct SweepArgs {
    /// fig1 … fig7; other flags override the preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    grid_start: Option<f64>,
    #[arg(long)]
    grid_stop: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Comma-separated accountant names.
    #[arg(long)]
    accountant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    disc: Discretization,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::Fast)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mechanism: MechanismArg,
    #[arg(long)]
    batch_size: usize,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    sigma: f64,
    /// Comma-separated records in [-1, 1], `_` for a zeroed-out record.
    /// Defaults to (-1, …, -1, 1) with n = b·T.
    #[arg(long)]
    data: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

enum Failure {
    Usage(String),
    Bracket(String),
    Io(String),
    Checks,
}

impl From<AccountingError> for Failure {
    fn from(e: AccountingError) -> Self {
        match e {
            AccountingError::BracketFailure { .. } => Failure::Bracket(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn render_bound(b: &PrivacyBound, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string(b).expect("bounds serialize"),
        Format::Text => {
            let mut s = format!(
                "mechanism={} method={} kind={} adjacency={} epsilon={} delta={:e}",
                b.mechanism, b.method, b.kind, b.adjacency, b.epsilon, b.delta
            );
            if let Some(c) = b.argmax_c {
                s.push_str(&format!(" argmax_c={c}"));
            }
            if let Some(a) = b.rdp_order {
                s.push_str(&format!(" rdp_order={a}"));
            }
            if let Some(f) = b.flag {
                s.push_str(&format!(" flag={f}"));
            }
            s
        }
    }
}

fn zero_out_query(a: &QueryArgs, eps: Option<f64>) -> Result<PrivacyBound, Failure> {
    let acc = a.accountant.unwrap_or(match a.mechanism {
        MechanismArg::Deterministic => QueryAccountant::ClosedForm,
        MechanismArg::Poisson => QueryAccountant::Pld,
        MechanismArg::Shuffle => QueryAccountant::EcBound,
    });
    let (s, t) = (a.sigma, a.steps);
    if a.lower && acc != QueryAccountant::Pld {
        return Err(Failure::Usage("--lower only applies to the pld accountant".into()));
    }
    let b = match (a.mechanism, acc, eps, a.delta) {
        (MechanismArg::Deterministic, QueryAccountant::ClosedForm, Some(e), _) => {
            AccountingConfig::new(s, 1)?;
            delta_deterministic(s, e)
        }
        (MechanismArg::Deterministic, QueryAccountant::ClosedForm, None, Some(d)) => eps_deterministic(s, d)?,
        (MechanismArg::Poisson, QueryAccountant::Pld, e, d) => {
            let acc = PoissonPldAccountant::new(AccountingConfig::new(s, t)?, a.disc.pld())?;
            let (up, low) = match (e, d) {
                (Some(e), _) => acc.delta(e),
                (None, Some(d)) => acc.epsilon(d)?,
                _ => unreachable!("clap requires one of --eps/--delta"),
            };
            if a.lower {
                low
            } else {
                up
            }
        }
        (MechanismArg::Poisson, QueryAccountant::Rdp, Some(e), _) => delta_rdp(&AccountingConfig::new(s, t)?, e)?,
        (MechanismArg::Poisson, QueryAccountant::Rdp, None, Some(d)) => eps_rdp(&AccountingConfig::new(s, t)?, d)?,
        (MechanismArg::Poisson, QueryAccountant::Halfspace, Some(e), _) => poisson_halfspace_delta_lower(s, t, e)?,
        (MechanismArg::Poisson, QueryAccountant::Halfspace, None, Some(d)) => poisson_halfspace_eps_lower(s, t, d)?,
        (MechanismArg::Shuffle, QueryAccountant::EcBound, Some(e), _) => shuffle_delta_lower(s, t, e, &a.disc.shuffle())?,
        (MechanismArg::Shuffle, QueryAccountant::EcBound, None, Some(d)) => shuffle_eps_lower(s, t, d, &a.disc.shuffle())?,
        _ => return Err(Failure::Usage("accountant does not apply to this mechanism".into())),
    };
    Ok(b)
}

fn cmd_query(a: QueryArgs) -> CmdResult {
    let bound = match a.adjacency {
        AdjacencyArg::ZeroOut => zero_out_query(&a, a.eps)?,
        AdjacencyArg::Substitution => {
            // (ε, δ) under zero-out gives (2ε, δ(1+e^ε)) under substitution
            let e = a
                .eps
                .ok_or_else(|| Failure::Usage("substitution adjacency supports --eps queries only".into()))?;
            let zo = zero_out_query(&a, Some(e / 2.0))?;
            group_privacy_zero_out_to_substitution(&zo)?
        }
    };
    debug_assert!(a.adjacency == AdjacencyArg::Substitution || bound.adjacency == Adjacency::ZeroOut);
    println!("{}", render_bound(&bound, a.format));
    Ok(())
}

fn parse_accountants(s: &str) -> Result<Vec<Accountant>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<Accountant>().map_err(Failure::Usage))
        .collect()
}

fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec, Failure> {
    let mut spec = match &a.preset {
        Some(name) => SweepSpec::preset(name).ok_or_else(|| Failure::Usage(format!("unknown preset `{name}`")))?,
        None => {
            let mode = a.mode.ok_or_else(|| Failure::Usage("either --preset or --mode is required".into()))?;
            let all = vec![Accountant::Deterministic, Accountant::PoissonPld, Accountant::PoissonRdp, Accountant::ShuffleLower];
            match mode {
                ModeArg::EpsVsSigma => SweepSpec::eps_vs_sigma(1e-6, 1, Vec::new(), all),
                ModeArg::DeltaVsEps => SweepSpec::delta_vs_eps(1.0, 1, Vec::new(), all),
            }
        }
    };
    if let Some(mode) = a.mode {
        spec.mode = match mode {
            ModeArg::EpsVsSigma => SweepMode::EpsVsSigma,
            ModeArg::DeltaVsEps => SweepMode::DeltaVsEps,
        };
    }
    if a.sigma.is_some() {
        spec.sigma = a.sigma;
    }
    if a.delta.is_some() {
        spec.delta = a.delta;
    }
    if let Some(t) = a.steps {
        spec.steps = t;
    }
    if a.grid_start.is_some() || a.grid_stop.is_some() || a.grid_points.is_some() || spec.grid.is_empty() {
        match (a.grid_start, a.grid_stop, a.grid_points) {
            (Some(lo), Some(hi), Some(n)) => spec.grid = linspace(lo, hi, n),
            _ => return Err(Failure::Usage("--grid-start, --grid-stop and --grid-points go together".into())),
        }
    }
    if let Some(list) = &a.accountant {
        spec.accountants = parse_accountants(list)?;
    }
    spec.pld = a.disc.pld();
    spec.shuffle = a.disc.shuffle();
    Ok(spec)
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let spec = sweep_spec(&a)?;
    let csv = to_csv(&spec.run()?);
    match &a.out {
        Some(path) => fs::write(path, csv).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?,
        None => io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let suite = match a.suite {
        SuiteArg::Fast => Suite::Fast,
        SuiteArg::Full => Suite::Full,
    };
    let report = run_suite(suite, a.seed)?;
    let text = match a.format {
        Format::Text => report.render(),
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    };
    io::stdout().write_all(text.as_bytes())?;
    if let Some(path) = &a.out {
        fs::write(path, &text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn parse_data(s: &str) -> Result<Vec<Option<f64>>, Failure> {
    s.split(',')
        .map(str::trim)
        .map(|x| match x {
            "_" => Ok(None),
            _ => x.parse::<f64>().map(Some).map_err(|_| Failure::Usage(format!("bad record `{x}`"))),
        })
        .collect()
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let data = match &a.data {
        Some(s) => parse_data(s)?,
        None => {
            let n = a.batch_size * a.steps;
            (0..n).map(|i| Some(if i + 1 == n { 1.0 } else { -1.0 })).collect()
        }
    };
    let run = simulate_ablq_run(a.mechanism.into(), &data, a.batch_size, a.steps, a.sigma, a.seed)?;
    match a.format {
        Format::Json => println!(
            "{}",
            serde_json::json!({ "outputs": run.outputs, "batch_sizes": run.batch_sizes })
        ),
        Format::Text => {
            for (g, n) in run.outputs.iter().zip(&run.batch_sizes) {
                println!("{g:.16e} {n}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Query(a) => cmd_query(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(EXIT_FAILED_CHECKS),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Bracket(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_BRACKET)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
