//! Monte Carlo sweeps, dominance checks, CSV rows and cost reports.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_trial, trial_seed, Backend, HarnessError, ScenarioConfig, TrialResult};
use crate::primitives::{Amount, Height, PartyId};
use crate::scaffold::closed_form_stats;
use crate::strategies::build_strategies;

/// Tolerance used for 10000-trial dominance checks.
pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerSummary {
    pub party: PartyId,
    pub strategy: String,
    pub honest: bool,
    /// Committed trials won.
    pub wins: u64,
    /// `wins / committed`, or 0 when nothing committed.
    pub win_frequency: f64,
    /// Binomial standard error of `win_frequency`.
    pub std_error: f64,
    pub mean_payoff: f64,
    pub min_payoff_committed: Option<i64>,
    /// Net payoff → number of trials, over all trials.
    pub payoff_counts: BTreeMap<i64, u64>,
    /// Net payoffs seen in aborted trials.
    pub abort_payoff_counts: BTreeMap<i64, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PayoffSummary {
    pub backend: Backend,
    #[serde(rename = "N")]
    pub n: usize,
    pub bet: Amount,
    pub trials: u64,
    pub committed: u64,
    pub aborted: u64,
    pub abort_rate: f64,
    pub players: Vec<PlayerSummary>,
    /// Trials whose payoffs do not sum to zero.
    pub zero_sum_violations: u64,
    /// Committed trials without exactly one winner at `+(N−1)·bet`.
    pub winner_violations: u64,
    /// Committed trials where the final match produced no winner.
    pub null_winner_trials: u64,
    pub max_locked_beyond_bet: Amount,
    pub max_on_chain_tx_count: u64,
    /// Largest `finalHeight − T_Commit` over committed trials.
    pub max_rounds_to_final: Option<Height>,
    pub max_abort_height: Option<Height>,
}

/// Runs `cfg.trials` trials; results are in trial-index order.
pub fn run_trials(cfg: &ScenarioConfig) -> Result<Vec<TrialResult>, HarnessError> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, trial_seed(cfg.master_seed, i)))
        .collect()
}

pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<PayoffSummary, HarnessError> {
    let trials = run_trials(cfg)?;
    Ok(summarize(cfg, &trials))
}

pub fn summarize(cfg: &ScenarioConfig, trials: &[TrialResult]) -> PayoffSummary {
    let n = cfg.n;
    let bet = cfg.bet as i64;
    let honest: Vec<bool> = match build_strategies(&cfg.strategy_by_player) {
        Ok(s) => s.iter().map(|s| s.is_honest()).collect(),
        Err(_) => vec![false; n],
    };
    let committed = trials.iter().filter(|t| t.committed).count() as u64;
    let total = trials.len() as u64;
    let mut players: Vec<PlayerSummary> = (0..n)
        .map(|p| PlayerSummary {
            party: p,
            strategy: cfg.strategy_by_player.get(p).cloned().unwrap_or_default(),
            honest: honest[p],
            wins: 0,
            win_frequency: 0.0,
            std_error: 0.0,
            mean_payoff: 0.0,
            min_payoff_committed: None,
            payoff_counts: BTreeMap::new(),
            abort_payoff_counts: BTreeMap::new(),
        })
        .collect();
    let mut zero_sum_violations = 0;
    let mut winner_violations = 0;
    let mut null_winner_trials = 0;
    let mut max_locked = 0;
    let mut max_tx = 0;
    let mut max_rounds: Option<Height> = None;
    let mut max_abort: Option<Height> = None;
    let mut sums = vec![0i64; n];
    for t in trials {
        if t.payoff_sum() != 0 {
            zero_sum_violations += 1;
        }
        max_tx = max_tx.max(t.on_chain_tx_count);
        if t.committed {
            let top = t
                .per_player
                .iter()
                .filter(|o| o.net_payoff == (n as i64 - 1) * bet)
                .count();
            if top != 1 || t.winner.is_none() {
                winner_violations += 1;
            }
            if t.winner.is_none() {
                null_winner_trials += 1;
            }
            if let Some(h) = t.final_height {
                let r = h.saturating_sub(cfg.t_commit());
                max_rounds = Some(max_rounds.map_or(r, |m| m.max(r)));
            }
        } else if let Some(h) = t.abort_height {
            max_abort = Some(max_abort.map_or(h, |m| m.max(h)));
        }
        for (p, o) in t.per_player.iter().enumerate() {
            let ps = &mut players[p];
            max_locked = max_locked.max(o.max_locked_beyond_bet);
            sums[p] += o.net_payoff;
            *ps.payoff_counts.entry(o.net_payoff).or_default() += 1;
            if t.committed {
                ps.min_payoff_committed = Some(
                    ps.min_payoff_committed
                        .map_or(o.net_payoff, |m| m.min(o.net_payoff)),
                );
                if t.winner == Some(p) {
                    ps.wins += 1;
                }
            } else {
                *ps.abort_payoff_counts.entry(o.net_payoff).or_default() += 1;
            }
        }
    }
    for (p, ps) in players.iter_mut().enumerate() {
        if committed > 0 {
            let f = ps.wins as f64 / committed as f64;
            ps.win_frequency = f;
            ps.std_error = (f * (1.0 - f) / committed as f64).sqrt();
        }
        if total > 0 {
            ps.mean_payoff = sums[p] as f64 / total as f64;
        }
    }
    PayoffSummary {
        backend: cfg.backend,
        n,
        bet: cfg.bet,
        trials: total,
        committed,
        aborted: total - committed,
        abort_rate: if total == 0 {
            0.0
        } else {
            (total - committed) as f64 / total as f64
        },
        players,
        zero_sum_violations,
        winner_violations,
        null_winner_trials,
        max_locked_beyond_bet: max_locked,
        max_on_chain_tx_count: max_tx,
        max_rounds_to_final: max_rounds,
        max_abort_height: max_abort,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DominanceReport {
    pub pass: bool,
    /// No committed trials, so the committed-conditioned check says nothing.
    pub vacuous: bool,
    pub details: Vec<String>,
}

/// Checks each honest player's committed-trial payoffs against the ideal
/// two-point distribution: `Pr[win] ≥ 1/N − ε` and `Pr[payoff ≥ −bet] = 1`.
pub fn check_dominance(summary: &PayoffSummary, n: usize, eps: f64) -> DominanceReport {
    if summary.committed == 0 {
        return DominanceReport {
            pass: true,
            vacuous: true,
            details: vec!["no committed trials".into()],
        };
    }
    let ideal = 1.0 / n as f64;
    let floor = -(summary.bet as i64);
    let mut details = Vec::new();
    for p in summary.players.iter().filter(|p| p.honest) {
        if p.win_frequency < ideal - eps {
            details.push(format!(
                "player {}: win frequency {:.4} < {:.4} - {}",
                p.party, p.win_frequency, ideal, eps
            ));
        }
        if let Some(m) = p.min_payoff_committed {
            if m < floor {
                details.push(format!("player {}: payoff {} below -bet", p.party, m));
            }
        }
    }
    DominanceReport {
        pass: details.is_empty(),
        vacuous: false,
        details,
    }
}

/// Every player of every aborted trial nets exactly 0.
pub fn abort_payoffs_zero(summary: &PayoffSummary) -> bool {
    summary
        .players
        .iter()
        .all(|p| p.abort_payoff_counts.keys().all(|&v| v == 0))
}

/// Honest players of every aborted trial net exactly 0.
pub fn honest_abort_payoffs_zero(summary: &PayoffSummary) -> bool {
    summary
        .players
        .iter()
        .filter(|p| p.honest)
        .all(|p| p.abort_payoff_counts.keys().all(|&v| v == 0))
}

/// CSV columns: `seed, committed, winner, payoff_0 … payoff_{N−1}, finalHeight, onChainTxCount`.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string(), "committed".into(), "winner".into()];
    h.extend((0..n).map(|p| format!("payoff_{p}")));
    h.push("finalHeight".into());
    h.push("onChainTxCount".into());
    h
}

impl TrialResult {
    /// Row matching [`csv_header`]; absent values are empty fields.
    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            self.seed.to_string(),
            self.committed.to_string(),
            self.winner.map(|w| w.to_string()).unwrap_or_default(),
        ];
        r.extend(self.per_player.iter().map(|o| o.net_payoff.to_string()));
        r.push(self.final_height.map(|h| h.to_string()).unwrap_or_default());
        r.push(self.on_chain_tx_count.to_string());
        r
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub backend: Backend,
    #[serde(rename = "N")]
    pub n: usize,
    pub collateral_beyond_bet: Amount,
    /// Worst observed.
    pub on_chain_tx_count: u64,
    pub on_chain_tx_bound: u64,
    /// Bodies each party signs before any money moves; absent for contracts.
    pub off_chain_signed_per_party: Option<u128>,
    pub rounds_to_commit: Height,
    pub rounds_to_final: Option<Height>,
    pub on_chain_bytes: u64,
    /// Strategy mix that produced `on_chain_tx_count`.
    pub worst_mix: String,
    pub trials_per_mix: u64,
}

const COST_MIXES: [&str; 4] = [
    "honest",
    "abort-open",
    "selective-abort-open",
    "abort-commit",
];
const COST_TRIALS: u64 = 16;

/// Worst case over the configured mix and each uniform mix in [`COST_MIXES`].
pub fn measure_costs(cfg: &ScenarioConfig) -> Result<CostReport, HarnessError> {
    cfg.validate()?;
    let trials = cfg.trials.min(COST_TRIALS);
    let mut mixes = vec![(
        cfg.strategy_by_player.join(","),
        cfg.strategy_by_player.clone(),
    )];
    for m in COST_MIXES {
        mixes.push((format!("all {m}"), vec![m.to_string(); cfg.n]));
    }
    let off_chain = match cfg.backend.mode() {
        Some(mode) => {
            Some(closed_form_stats(cfg.n, mode, cfg.deposit_option, cfg.sig_model)?.total_offchain)
        }
        None => None,
    };
    let mut report = CostReport {
        backend: cfg.backend,
        n: cfg.n,
        collateral_beyond_bet: 0,
        on_chain_tx_count: 0,
        on_chain_tx_bound: cfg.on_chain_bound(),
        off_chain_signed_per_party: off_chain,
        rounds_to_commit: 0,
        rounds_to_final: None,
        on_chain_bytes: 0,
        worst_mix: String::new(),
        trials_per_mix: trials,
    };
    for (label, seats) in mixes {
        let mix = ScenarioConfig {
            strategy_by_player: seats,
            trials,
            ..cfg.clone()
        };
        for t in run_trials(&mix)? {
            for o in &t.per_player {
                report.collateral_beyond_bet =
                    report.collateral_beyond_bet.max(o.max_locked_beyond_bet);
            }
            if t.on_chain_tx_count > report.on_chain_tx_count || report.worst_mix.is_empty() {
                report.on_chain_tx_count = report.on_chain_tx_count.max(t.on_chain_tx_count);
                report.worst_mix = label.clone();
            }
            report.on_chain_bytes = report.on_chain_bytes.max(t.on_chain_bytes);
            report.rounds_to_commit = report.rounds_to_commit.max(t.rounds_to_commit);
            if let Some(h) = t.final_height {
                let r = h.saturating_sub(cfg.t_commit());
                report.rounds_to_final = Some(report.rounds_to_final.map_or(r, |m| m.max(r)));
            }
        }
    }
    Ok(report)
}
