//! Full protocol runs on either backend, Monte Carlo sweeps, dominance checks
//! and cost reports.

mod bitcoin;
mod ethereum;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, SimChain};
use crate::contracts::{ContractTree, Vm};
use crate::primitives::{sha256, Amount, Height, PartyId, SigModel};
use crate::scaffold::{
    levels_for, DepositOption, Mode, ScaffoldError, Tournament, MAX_MULTIINPUT_N, MAX_PLAIN_N,
};
use crate::script::OracleError;
use crate::strategies::{validate_name, StrategyError};

pub use report::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    BitcoinPlain,
    BitcoinMultiinput,
    Ethereum,
}

impl Backend {
    pub fn mode(self) -> Option<Mode> {
        match self {
            Backend::BitcoinPlain => Some(Mode::Plain),
            Backend::BitcoinMultiinput => Some(Mode::Multiinput),
            Backend::Ethereum => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Backend::BitcoinPlain => "bitcoin-plain",
            Backend::BitcoinMultiinput => "bitcoin-multiinput",
            Backend::Ethereum => "ethereum",
        }
    }

    /// Blocks per tournament level.
    pub fn span(self, tau: u64) -> u64 {
        match self {
            Backend::BitcoinMultiinput => 4 * tau,
            _ => 2 * tau,
        }
    }
}

fn default_tau() -> u64 {
    6
}

fn default_one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub backend: Backend,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_tau")]
    pub tau: u64,
    /// Defaults to `τ`.
    #[serde(default, rename = "tCommit", skip_serializing_if = "Option::is_none")]
    pub t_commit: Option<Height>,
    #[serde(default)]
    pub deposit_option: DepositOption,
    #[serde(default)]
    pub sig_model: SigModel,
    pub strategy_by_player: Vec<String>,
    #[serde(default = "default_one")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_one")]
    pub bet: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("NotPowerOfTwo: N={0}")]
    NotPowerOfTwo(usize),
    #[error("TooLarge: N={n} exceeds {limit} for {backend}")]
    TooLarge {
        n: usize,
        limit: usize,
        backend: &'static str,
    },
    #[error("ZeroTrials: trials must be at least 1")]
    ZeroTrials,
    #[error("BadTau: tau={0} (ethereum needs at least 2 so commit windows are non-empty)")]
    BadTau(u64),
    #[error("ZeroBet: bet must be positive")]
    ZeroBet,
    #[error("StrategyCount: expected {expected} strategies, found {found}")]
    StrategyCount { expected: usize, found: usize },
    #[error("{0}")]
    Strategy(#[from] StrategyError),
    #[error("DepositOption: hashlocked deposits exist only on bitcoin backends")]
    HashlockedOnEthereum,
    #[error("Parse: {0}")]
    Parse(String),
}

impl ScenarioConfig {
    /// Config with defaults and the given seats.
    pub fn new(backend: Backend, strategies: &[&str]) -> Self {
        ScenarioConfig {
            backend,
            n: strategies.len(),
            tau: default_tau(),
            t_commit: None,
            deposit_option: DepositOption::Atomic,
            sig_model: SigModel::Multisig,
            strategy_by_player: strategies.iter().map(|s| s.to_string()).collect(),
            trials: 1,
            master_seed: 0,
            bet: 1,
        }
    }

    /// Every seat plays `name`.
    pub fn uniform(backend: Backend, n: usize, name: &str) -> Self {
        Self::new(backend, &vec![name; n])
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn t_commit(&self) -> Height {
        self.t_commit.unwrap_or(self.tau)
    }

    pub fn levels(&self) -> u32 {
        levels_for(self.n).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 || levels_for(self.n).is_err() {
            return Err(ConfigError::NotPowerOfTwo(self.n));
        }
        let limit = match self.backend {
            Backend::BitcoinPlain => MAX_PLAIN_N,
            Backend::BitcoinMultiinput => MAX_MULTIINPUT_N,
            Backend::Ethereum => 1 << 16,
        };
        if self.n > limit {
            return Err(ConfigError::TooLarge {
                n: self.n,
                limit,
                backend: self.backend.label(),
            });
        }
        if self.trials == 0 {
            return Err(ConfigError::ZeroTrials);
        }
        let min_tau = if self.backend == Backend::Ethereum {
            2
        } else {
            1
        };
        if self.tau < min_tau {
            return Err(ConfigError::BadTau(self.tau));
        }
        if self.bet == 0 {
            return Err(ConfigError::ZeroBet);
        }
        if self.strategy_by_player.len() != self.n {
            return Err(ConfigError::StrategyCount {
                expected: self.n,
                found: self.strategy_by_player.len(),
            });
        }
        for s in &self.strategy_by_player {
            validate_name(s)?;
        }
        if self.backend == Backend::Ethereum && self.deposit_option == DepositOption::Hashlocked {
            return Err(ConfigError::HashlockedOnEthereum);
        }
        Ok(())
    }

    /// Height by which committed trials must have settled.
    pub fn final_bound(&self) -> Height {
        self.t_commit() + self.backend.span(self.tau) * self.levels() as u64
    }

    /// Height by which aborted trials must have refunded.
    pub fn abort_bound(&self) -> Height {
        match (self.backend, self.deposit_option) {
            (Backend::Ethereum, _) => self.t_commit(),
            (_, DepositOption::Atomic) => self.t_commit(),
            (b, DepositOption::Hashlocked) => self.t_commit() + b.span(self.tau),
        }
    }

    /// Most on-chain transactions (or contract interactions) any trial may use.
    pub fn on_chain_bound(&self) -> u64 {
        let n = self.n as u64;
        let deposits = match self.deposit_option {
            DepositOption::Atomic => 1,
            DepositOption::Hashlocked => n,
        };
        match self.backend {
            Backend::BitcoinPlain => 3 * (n - 1) + deposits,
            Backend::BitcoinMultiinput => 4 * (n - 1) + deposits,
            // deployment, deposits, two commits and two opens per match, one withdrawal
            Backend::Ethereum => 1 + n + 4 * (n - 1) + 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Scaffold(#[from] ScaffoldError),
    #[error("Oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("Chain: {0}")]
    Chain(#[from] ChainError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerOutcome {
    pub deposited: Amount,
    pub returned: Amount,
    pub net_payoff: i64,
    pub max_locked_beyond_bet: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialResult {
    pub seed: u64,
    pub per_player: Vec<PlayerOutcome>,
    pub committed: bool,
    pub winner: Option<PartyId>,
    /// Height at which the tournament outcome was settled (committed trials).
    pub final_height: Option<Height>,
    /// Height of the last refund, or of the aborted ceremony (aborted trials).
    pub abort_height: Option<Height>,
    pub on_chain_tx_count: u64,
    pub on_chain_bytes: u64,
    /// Blocks from genesis to deposit completeness, or to refund availability.
    pub rounds_to_commit: Height,
}

impl TrialResult {
    pub fn payoff_sum(&self) -> i64 {
        self.per_player.iter().map(|p| p.net_payoff).sum()
    }

    pub fn aborted(&self) -> bool {
        !self.committed
    }
}

/// Everything a trial leaves behind, for inspection by tests and exporters.
pub enum TrialArtifacts {
    Bitcoin {
        chain: SimChain,
        tournament: Option<Box<Tournament>>,
        /// `Σ utxo = minted` held after every accepted transaction.
        conservation_held: bool,
    },
    Ethereum {
        vm: Vm,
        tree: ContractTree,
        conservation_held: bool,
    },
}

impl TrialArtifacts {
    pub fn conservation_held(&self) -> bool {
        match self {
            TrialArtifacts::Bitcoin {
                conservation_held, ..
            }
            | TrialArtifacts::Ethereum {
                conservation_held, ..
            } => *conservation_held,
        }
    }
}

/// Runs one trial; deterministic in `(cfg, seed)`.
pub fn run_trial(cfg: &ScenarioConfig, seed: u64) -> Result<TrialResult, HarnessError> {
    run_trial_detailed(cfg, seed).map(|(r, _)| r)
}

pub fn run_trial_detailed(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<(TrialResult, TrialArtifacts), HarnessError> {
    cfg.validate()?;
    match cfg.backend.mode() {
        Some(mode) => bitcoin::run(cfg, mode, seed),
        None => ethereum::run(cfg, seed),
    }
}

/// Seed of trial `index` under `master_seed`.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    let mut buf = [0u8; 16];
    buf[..8].copy_from_slice(&master_seed.to_le_bytes());
    buf[8..].copy_from_slice(&index.to_le_bytes());
    let h = sha256(&buf);
    u64::from_le_bytes(h.0[..8].try_into().expect("8 bytes"))
}

fn player_seed(seed: u64, p: PartyId) -> [u8; 32] {
    crate::primitives::tagged_hash(
        b"lottery/player",
        &[&seed.to_le_bytes(), &(p as u64).to_le_bytes()],
    )
    .0
}

/// Per-player bookkeeping shared by both backends. Every player starts with a
/// wallet of `N × bet`, so any demand beyond the bet would show up as locked
/// value rather than being capped by an empty wallet.
struct Ledger {
    bet: Amount,
    wallet: Amount,
    max_beyond: Vec<Amount>,
}

impl Ledger {
    fn new(n: usize, bet: Amount) -> Self {
        Ledger {
            bet,
            wallet: bet * n as Amount,
            max_beyond: vec![0; n],
        }
    }

    /// Records current sole-control holdings.
    fn observe(&mut self, holdings: &[Amount]) {
        for (p, &h) in holdings.iter().enumerate() {
            let locked = self.wallet.saturating_sub(h);
            self.max_beyond[p] = self.max_beyond[p].max(locked.saturating_sub(self.bet));
        }
    }

    fn outcomes(&self, holdings: &[Amount], deposited: &[bool]) -> Vec<PlayerOutcome> {
        holdings
            .iter()
            .enumerate()
            .map(|(p, &h)| {
                let net = h as i64 - self.wallet as i64;
                let dep = if deposited[p] { self.bet } else { 0 };
                PlayerOutcome {
                    deposited: dep,
                    returned: (dep as i64 + net).max(0) as Amount,
                    net_payoff: net,
                    max_locked_beyond_bet: self.max_beyond[p],
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
