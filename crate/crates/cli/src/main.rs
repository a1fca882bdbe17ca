use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use lottery_core::chain::ChainParams;
use lottery_core::harness::{
    check_dominance, csv_header, measure_costs, run_trial, run_trials, summarize, trial_seed,
    Backend, ConfigError, HarnessError, ScenarioConfig, DEFAULT_EPSILON,
};
use lottery_core::primitives::SigModel;
use lottery_core::scaffold::{
    build_seeded, closed_form_stats, export_dot, levels_for, materialization_limit,
    verify_as_honest, DepositOption, Mode, ScaffoldError, Tournament,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "lottery",
    version,
    about = "Zero-collateral multi-party lottery simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scaffold and write its transaction stats.
    Build(BuildArgs),
    /// Run one trial and print its result.
    Run(RunArgs),
    /// Run many trials; CSV rows plus a JSON summary.
    Sweep(SweepArgs),
    /// Worst-case cost report.
    Costs(CostsArgs),
    /// Write a scaffold as a Graphviz DAG.
    ExportDot(ExportDotArgs),
    /// Check a scaffold file as an honest player would before signing.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Plain,
    Multiinput,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plain => Mode::Plain,
            ModeArg::Multiinput => Mode::Multiinput,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DepositArg {
    Atomic,
    Hashlocked,
}

impl From<DepositArg> for DepositOption {
    fn from(d: DepositArg) -> DepositOption {
        match d {
            DepositArg::Atomic => DepositOption::Atomic,
            DepositArg::Hashlocked => DepositOption::Hashlocked,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SigModelArg {
    Multisig,
    Aggregate,
}

impl From<SigModelArg> for SigModel {
    fn from(s: SigModelArg) -> SigModel {
        match s {
            SigModelArg::Multisig => SigModel::Multisig,
            SigModelArg::Aggregate => SigModel::Aggregate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    BitcoinPlain,
    BitcoinMultiinput,
    Ethereum,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::BitcoinPlain => Backend::BitcoinPlain,
            BackendArg::BitcoinMultiinput => Backend::BitcoinMultiinput,
            BackendArg::Ethereum => Backend::Ethereum,
        }
    }
}

#[derive(Args)]
struct ScaffoldArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "plain")]
    mode: ModeArg,
    #[arg(long, default_value_t = 6)]
    tau: u64,
    /// Defaults to τ.
    #[arg(long)]
    t_commit: Option<u64>,
    #[arg(long, value_enum, default_value = "atomic")]
    deposit: DepositArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ScaffoldArgs {
    fn build(&self) -> Result<Tournament, CliError> {
        let params = ChainParams::new(self.tau, 0, 1)
            .map_err(|e| CliError::Config(format!("BadTau: {e}")))?;
        Ok(build_seeded(
            self.n,
            self.mode.into(),
            params,
            self.t_commit.unwrap_or(self.tau),
            self.deposit.into(),
            self.seed,
        )?)
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    scaffold: ScaffoldArgs,
    #[arg(long, value_enum, default_value = "multisig")]
    sig_model: SigModelArg,
    /// Stats JSON destination (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the full scaffold as JSON.
    #[arg(long)]
    scaffold_out: Option<PathBuf>,
    /// Also write the scaffold DAG in DOT format.
    #[arg(long)]
    dag: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trial seed; defaults to trial 0 under the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trials: Option<u64>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON destination (standard output after the CSV is written to --out).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct CostsArgs {
    /// Scenario file; otherwise built from the flags below with all-honest seats.
    #[arg(long, conflicts_with_all = ["backend", "n"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    backend: Option<BackendArg>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, default_value_t = 6)]
    tau: u64,
    #[arg(long, value_enum, default_value = "atomic")]
    deposit: DepositArg,
    #[arg(long, value_enum, default_value = "multisig")]
    sig_model: SigModelArg,
    #[arg(long, default_value_t = 16)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportDotArgs {
    /// Scaffold JSON written by `build --scaffold-out`; otherwise built from the flags.
    #[arg(long)]
    scaffold: Option<PathBuf>,
    #[arg(long, required_unless_present = "scaffold")]
    n: Option<usize>,
    #[arg(long, value_enum, default_value = "plain")]
    mode: ModeArg,
    #[arg(long, default_value_t = 6)]
    tau: u64,
    #[arg(long, value_enum, default_value = "atomic")]
    deposit: DepositArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scaffold JSON written by `build --scaffold-out`.
    #[arg(long)]
    scaffold: PathBuf,
    /// Player doing the checking.
    #[arg(long, default_value_t = 0)]
    party: usize,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Violations(Vec<String>),
    Internal(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Violations(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ScaffoldError> for CliError {
    fn from(e: ScaffoldError) -> Self {
        match e {
            ScaffoldError::NotPowerOfTwo(_) | ScaffoldError::TooLarge { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Internal(e.into()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => c.into(),
            HarnessError::Scaffold(s) => s.into(),
            other => CliError::Internal(other.into()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.into())
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    emit(out, &text)
}

fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("Parse: cannot read {}: {e}", path.display())))?;
    Ok(ScenarioConfig::from_json(&text)?)
}

fn load_scaffold(path: &Path) -> Result<Tournament, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("Parse: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("Parse: {e}")))
}

fn build(a: &BuildArgs) -> Result<(), CliError> {
    let s = &a.scaffold;
    levels_for(s.n)?;
    let mode: Mode = s.mode.into();
    let deposit: DepositOption = s.deposit.into();
    let sig_model: SigModel = a.sig_model.into();
    if s.n > materialization_limit(mode) {
        if a.scaffold_out.is_some() || a.dag.is_some() {
            return Err(CliError::Config(format!(
                "TooLarge: N={} is stats-only in {mode:?} mode; --scaffold-out and --dag need N <= {}",
                s.n,
                materialization_limit(mode)
            )));
        }
        info!("N={} above materialization limit; closed form only", s.n);
        return emit_json(
            a.out.as_deref(),
            &closed_form_stats(s.n, mode, deposit, sig_model)?,
        );
    }
    let t = s.build()?;
    let stats = t.stats(sig_model);
    debug!("built {} bodies", stats.total_offchain);
    if let Some(p) = &a.scaffold_out {
        fs::write(p, serde_json::to_vec(&t)?)?;
    }
    if let Some(p) = &a.dag {
        fs::write(p, export_dot(&t))?;
    }
    emit_json(a.out.as_deref(), &stats)
}

fn run(a: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let seed = a.seed.unwrap_or_else(|| trial_seed(cfg.master_seed, 0));
    let r = run_trial(&cfg, seed)?;
    emit_json(a.out.as_deref(), &r)
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.config)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    info!("sweeping {} trials of {}", cfg.trials, cfg.backend.label());
    let trials = run_trials(&cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(cfg.n))?;
    for t in &trials {
        w.write_record(t.csv_record())?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Internal(anyhow::anyhow!("csv: {e}")))?;
    emit(a.out.as_deref(), &bytes)?;

    let summary = summarize(&cfg, &trials);
    let dominance = check_dominance(&summary, cfg.n, a.epsilon);
    let doc = serde_json::json!({ "summary": summary, "dominance": dominance });
    match (&a.summary, &a.out) {
        (Some(p), _) => emit_json(Some(p), &doc)?,
        (None, Some(_)) => emit_json(None, &doc)?,
        (None, None) => {}
    }
    let mut broken = Vec::new();
    if summary.zero_sum_violations > 0 {
        broken.push(format!("ZeroSum: {} trials", summary.zero_sum_violations));
    }
    if summary.winner_violations > 0 {
        broken.push(format!("Winner: {} trials", summary.winner_violations));
    }
    if summary.max_locked_beyond_bet > 0 {
        broken.push(format!(
            "Collateral: {} locked beyond the bet",
            summary.max_locked_beyond_bet
        ));
    }
    if broken.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violations(broken))
    }
}

fn costs(a: &CostsArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => {
            let backend: Backend = a.backend.expect("required by clap").into();
            let n = a.n.expect("required by clap");
            let mut cfg = ScenarioConfig::uniform(backend, n, "honest");
            cfg.tau = a.tau;
            cfg.deposit_option = a.deposit.into();
            cfg.sig_model = a.sig_model.into();
            cfg.trials = a.trials;
            cfg.master_seed = a.seed;
            cfg
        }
    };
    cfg.validate()?;
    emit_json(a.out.as_deref(), &measure_costs(&cfg)?)
}

fn export(a: &ExportDotArgs) -> Result<(), CliError> {
    let t = match (&a.scaffold, a.n) {
        (Some(p), _) => load_scaffold(p)?,
        (None, Some(n)) => ScaffoldArgs {
            n,
            mode: a.mode,
            tau: a.tau,
            t_commit: None,
            deposit: a.deposit,
            seed: a.seed,
        }
        .build()?,
        (None, None) => unreachable!("clap requires --n without --scaffold"),
    };
    emit(a.out.as_deref(), export_dot(&t).as_bytes())
}

fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let t = load_scaffold(&a.scaffold)?;
    if a.party >= t.n {
        return Err(CliError::Config(format!(
            "BadParty: {} is not a seat of an N={} scaffold",
            a.party, t.n
        )));
    }
    match verify_as_honest(&t, a.party) {
        Ok(()) => {
            println!("ok");
            Ok(())
        }
        Err(vs) => Err(CliError::Violations(
            vs.iter().map(|v| v.to_string()).collect(),
        )),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LOTTERY_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Build(a) => build(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Costs(a) => costs(a),
        Command::ExportDot(a) => export(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("error: {m}"),
                CliError::Violations(vs) => {
                    for v in vs {
                        eprintln!("violation: {v}");
                    }
                }
                CliError::Internal(err) => eprintln!("internal: {err:#}"),
            }
            ExitCode::from(e.code())
        }
    }
}
