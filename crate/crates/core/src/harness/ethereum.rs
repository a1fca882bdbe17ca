//! Trials on the contract backend.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    player_seed, ConfigError, HarnessError, Ledger, ScenarioConfig, TrialArtifacts, TrialResult,
};
use crate::contracts::{build_tree, Address, ContractTree, Vm};
use crate::primitives::{Amount, Height, PartyId, Secret};
use crate::scaffold::Side;
use crate::strategies::{
    build_strategies, BackendKind, CommitAction, MatchContext, OpenAction, PhaseView, Strategy,
};

/// Calldata bytes: a 4-byte selector plus one word per argument.
fn calldata_bytes(method: &str) -> u64 {
    match method {
        "commit" | "open" => 36,
        _ => 4,
    }
}

struct Player {
    addr: Address,
    secrets: Vec<Secret>,
    deposit_done: bool,
    refund_done: bool,
    payout_done: bool,
    committed: Vec<bool>,
    opened: Vec<bool>,
}

struct Sim {
    n: usize,
    bet: Amount,
    t_commit: Height,
    t_final: Height,
    vm: Vm,
    tree: ContractTree,
    players: Vec<Player>,
    complete_height: Option<Height>,
    refund_heights: Vec<Height>,
    deposited: Vec<bool>,
    conservation_held: bool,
}

impl Sim {
    fn view(&self, p: PartyId) -> PhaseView {
        PhaseView {
            backend: BackendKind::Ethereum,
            height: self.vm.height(),
            me: p,
            n: self.n,
            deposits_on_chain: self
                .vm
                .master_state(self.tree.master)
                .map_or(0, |m| m.n_players),
            ..PhaseView::default()
        }
    }

    fn check_conservation(&mut self) {
        if self.vm.total_value() != self.vm.supply() {
            self.conservation_held = false;
        }
    }

    fn complete(&self) -> bool {
        self.vm
            .master_state(self.tree.master)
            .is_some_and(|m| m.complete)
    }

    fn act(&mut self, p: PartyId, strategy: &mut dyn Strategy) -> bool {
        let h = self.vm.height();
        let me = self.players[p].addr;
        let master = self.tree.master;
        let mut progress = false;

        if h <= self.t_commit && !self.players[p].deposit_done && strategy.at_deposit(&self.view(p))
        {
            self.players[p].deposit_done = true;
            progress = true;
            if self.vm.master_deposit(master, me, self.bet).is_ok() {
                self.deposited[p] = true;
                if self.complete() && self.complete_height.is_none() {
                    self.complete_height = Some(h);
                }
            }
            self.check_conservation();
        }

        if !self.complete() {
            let refundable = self
                .vm
                .master_state(master)
                .is_some_and(|m| m.deposits.get(&me).copied().unwrap_or(false));
            if h >= self.t_commit
                && refundable
                && !self.players[p].refund_done
                && strategy.at_withdraw(&self.view(p))
            {
                self.players[p].refund_done = true;
                progress = true;
                if self.vm.master_withdraw(master, me).is_ok() {
                    self.refund_heights.push(h);
                }
                self.check_conservation();
            }
            return progress;
        }

        // seats follow deposit order
        let Some(seat) = self
            .vm
            .master_state(master)
            .and_then(|m| m.players.iter().position(|a| *a == me))
        else {
            return progress;
        };
        for level in 0..self.tree.levels.len() {
            let c = self.tree.on_path(seat, level);
            let Some(s) = self.vm.two_party_state(c).cloned() else {
                continue;
            };
            let in_commit = s.t0 < h && h < s.t1;
            let in_open = s.t1 < h && h < s.t2;
            if !in_commit && !in_open {
                continue;
            }
            let Ok((alice, bob)) = self.vm.tp_players(c) else {
                continue;
            };
            let side = if me == alice {
                Side::Left
            } else if me == bob {
                Side::Right
            } else {
                continue;
            };
            let opp = if side == Side::Left { bob } else { alice };
            let mut view = PhaseView {
                context: MatchContext::Contract {
                    address: c,
                    level: level as u32,
                },
                side: Some(side),
                opponent: opp.party(),
                my_secret: Some(self.players[p].secrets[level]),
                opponent_commitment: s.commits.get(&opp).copied(),
                ..self.view(p)
            };
            if in_commit && !self.players[p].committed[level] {
                view.deadline = s.t1;
                if let CommitAction::Commit(x) = strategy.at_commit(&view) {
                    self.players[p].committed[level] = true;
                    progress = true;
                    let _ = self.vm.tp_commit(c, me, x);
                }
            }
            if in_open && s.commits.contains_key(&me) && !self.players[p].opened[level] {
                view.deadline = s.t2;
                view.opponent_opening = s.openings.get(&opp).map(|o| Secret(*o));
                if let OpenAction::Open(x) = strategy.at_open(&view) {
                    self.players[p].opened[level] = true;
                    progress = true;
                    let _ = self.vm.tp_open(c, me, x.0);
                }
            }
        }

        if h > self.t_final
            && !self.players[p].payout_done
            && self.vm.tp_get_winner(self.tree.final_contract()) == Ok(me)
            && strategy.at_withdraw(&self.view(p))
        {
            self.players[p].payout_done = true;
            progress = true;
            let _ = self.vm.master_withdraw(master, me);
            self.check_conservation();
        }
        progress
    }

    /// Value each player can move alone: wallet, refundable deposit, or the pot once won.
    fn holdings(&self) -> Vec<Amount> {
        let h = self.vm.height();
        let master = self.vm.master_state(self.tree.master);
        let pot = self.vm.contract(self.tree.master).map_or(0, |c| c.balance);
        let winner = self.vm.tp_get_winner(self.tree.final_contract()).ok();
        self.players
            .iter()
            .map(|pl| {
                let mut v = self.vm.balance_of(pl.addr);
                if let Some(m) = master {
                    if !m.complete
                        && m.deposits.get(&pl.addr).copied().unwrap_or(false)
                        && h >= m.t_commit
                    {
                        v += m.bet;
                    }
                    if m.complete && winner == Some(pl.addr) {
                        v += pot;
                    }
                }
                v
            })
            .collect()
    }
}

fn event_heights(tree: &ContractTree, vm: &Vm, t_commit: Height, end: Height) -> Vec<Height> {
    let mut hs: BTreeSet<Height> = [0, t_commit, end].into_iter().collect();
    for row in &tree.levels {
        if let Some(s) = row.first().and_then(|c| vm.two_party_state(*c)) {
            for h in [s.t0 + 1, s.t1 - 1, s.t1 + 1, s.t2 - 1, s.t2 + 1] {
                hs.insert(h);
            }
        }
    }
    hs.into_iter().filter(|&h| h <= end).collect()
}

pub(super) fn run(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<(TrialResult, TrialArtifacts), HarnessError> {
    let n = cfg.n;
    let bet = cfg.bet;
    let t_commit = cfg.t_commit();
    let levels = cfg.levels() as usize;
    let mut strategies = build_strategies(&cfg.strategy_by_player).map_err(ConfigError::from)?;
    let mut vm = Vm::new(0);
    let tree = build_tree(&mut vm, n, t_commit, cfg.tau, bet)?;
    let t_final = vm.master_state(tree.master).map_or(t_commit, |m| m.t_final);
    let mut players = Vec::with_capacity(n);
    for (p, s) in strategies.iter_mut().enumerate() {
        let addr = Address::of_party(p);
        vm.fund(addr, bet * n as Amount);
        let mut rng = ChaCha8Rng::from_seed(player_seed(seed, p));
        players.push(Player {
            addr,
            secrets: (0..levels).map(|_| s.choose_secret(&mut rng)).collect(),
            deposit_done: false,
            refund_done: false,
            payout_done: false,
            committed: vec![false; levels],
            opened: vec![false; levels],
        });
    }
    let mut ledger = Ledger::new(n, bet);
    let end = t_final + 2;
    let heights = event_heights(&tree, &vm, t_commit, end);
    let mut sim = Sim {
        n,
        bet,
        t_commit,
        t_final,
        vm,
        tree,
        players,
        complete_height: None,
        refund_heights: Vec::new(),
        deposited: vec![false; n],
        conservation_held: true,
    };
    for h in heights {
        sim.vm.advance_to(h);
        loop {
            let mut progress = false;
            for (p, s) in strategies.iter_mut().enumerate() {
                progress |= sim.act(p, s.as_mut());
            }
            if !progress {
                break;
            }
        }
        sim.check_conservation();
        ledger.observe(&sim.holdings());
    }

    let committed = sim.complete();
    let winner = if committed {
        sim.vm
            .tp_get_winner(sim.tree.final_contract())
            .ok()
            .and_then(Address::party)
    } else {
        None
    };
    let trace = sim.vm.trace();
    let holdings = sim.holdings();
    let result = TrialResult {
        seed,
        per_player: ledger.outcomes(&holdings, &sim.deposited),
        committed,
        winner,
        final_height: committed.then_some(t_final),
        abort_height: (!committed)
            .then(|| sim.refund_heights.iter().max().copied().unwrap_or(t_commit)),
        on_chain_tx_count: 1 + trace.len() as u64,
        on_chain_bytes: trace.iter().map(|r| calldata_bytes(&r.method)).sum(),
        rounds_to_commit: sim.complete_height.unwrap_or(t_commit),
    };
    Ok((
        result,
        TrialArtifacts::Ethereum {
            vm: sim.vm,
            tree: sim.tree,
            conservation_held: sim.conservation_held,
        },
    ))
}
