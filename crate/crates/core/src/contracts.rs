//! A minimal account-model contract VM hosting the two-party commit/reveal
//! lottery, the master deposit contract and the bracket that wires them.
//!
//! Calls are executed one at a time in submission order. A call either
//! completes or reverts, and a revert restores storage and balances exactly.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{sha256, Amount, Hash256, Height, PartyId};
use crate::scaffold::{levels_for, ScaffoldError};

/// Account or contract address. `Address::NULL` (0) means "unset".
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Address(pub u64);

impl Address {
    pub const NULL: Address = Address(0);

    /// External account of player `p`.
    pub fn of_party(p: PartyId) -> Self {
        Address(p as u64 + 1)
    }

    /// Inverse of [`Address::of_party`].
    pub fn party(self) -> Option<PartyId> {
        (self.0 >= 1 && self.0 < CONTRACT_BASE).then(|| (self.0 - 1) as PartyId)
    }

    pub fn is_null(self) -> bool {
        self == Address::NULL
    }

    /// 32-byte big-endian word, as hashed by the commitment scheme.
    pub fn word(self) -> [u8; 32] {
        let mut w = [0u8; 32];
        w[24..].copy_from_slice(&self.0.to_be_bytes());
        w
    }
}

const CONTRACT_BASE: u64 = 1 << 32;

/// `sha256(sender ‖ s)`: the commitment a player publishes for secret `s`.
pub fn commitment_for(sender: Address, s: &Hash256) -> Hash256 {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&sender.word());
    buf[32..].copy_from_slice(&s.0);
    sha256(&buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Revert {
    #[error("OutOfWindow")]
    OutOfWindow,
    #[error("NotAPlayer")]
    NotAPlayer,
    #[error("AlreadyCommitted")]
    AlreadyCommitted,
    #[error("AlreadyOpened")]
    AlreadyOpened,
    #[error("ZeroValue")]
    ZeroValue,
    #[error("BadOpening")]
    BadOpening,
    #[error("TooEarly")]
    TooEarly,
    #[error("WrongValue")]
    WrongValue,
    #[error("Full")]
    Full,
    #[error("AlreadyDeposited")]
    AlreadyDeposited,
    #[error("TooLate")]
    TooLate,
    #[error("NotWinner")]
    NotWinner,
    #[error("NothingToWithdraw")]
    NothingToWithdraw,
    #[error("InsufficientFunds")]
    InsufficientFunds,
    #[error("NoSuchContract")]
    NoSuchContract,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TwoPartyState {
    pub alice: Address,
    pub bob: Address,
    pub commits: BTreeMap<Address, Hash256>,
    pub openings: BTreeMap<Address, Hash256>,
    pub t0: Height,
    pub t1: Height,
    pub t2: Height,
    pub is_first_level: bool,
    pub index: usize,
    /// Master contract (first level only).
    pub deposit: Address,
    pub left: Address,
    pub right: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MasterState {
    pub players: Vec<Address>,
    pub n_players: usize,
    /// Capacity `N`.
    pub capacity: usize,
    pub complete: bool,
    pub deposits: BTreeMap<Address, bool>,
    pub final_tournament: Address,
    pub t_commit: Height,
    pub t_final: Height,
    pub bet: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Contract {
    TwoParty(TwoPartyState),
    Master(MasterState),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub contract: Contract,
    pub balance: Amount,
}

/// One line of the call trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub height: Height,
    pub sender: Address,
    pub contract: Address,
    pub method: String,
    pub args: serde_json::Value,
    pub result: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vm {
    height: Height,
    contracts: BTreeMap<Address, ContractState>,
    external: BTreeMap<Address, Amount>,
    next_contract: u64,
    supply: u128,
    trace: Vec<CallRecord>,
}

impl Vm {
    pub fn new(genesis: Height) -> Self {
        Vm {
            height: genesis,
            next_contract: CONTRACT_BASE,
            ..Self::default()
        }
    }

    pub fn height(&self) -> Height {
        self.height
    }

    /// Moves the block clock forward (never backward).
    pub fn advance_to(&mut self, h: Height) {
        self.height = self.height.max(h);
    }

    /// Credits an external account out of thin air (test faucet).
    pub fn fund(&mut self, who: Address, amount: Amount) {
        *self.external.entry(who).or_default() += amount;
        self.supply += amount as u128;
    }

    pub fn balance_of(&self, who: Address) -> Amount {
        self.external.get(&who).copied().unwrap_or(0)
    }

    pub fn contract(&self, at: Address) -> Option<&ContractState> {
        self.contracts.get(&at)
    }

    pub fn contracts(&self) -> &BTreeMap<Address, ContractState> {
        &self.contracts
    }

    pub fn trace(&self) -> &[CallRecord] {
        &self.trace
    }

    /// Total value held by contracts and accounts; constant across calls.
    pub fn total_value(&self) -> u128 {
        self.contracts
            .values()
            .map(|c| c.balance as u128)
            .sum::<u128>()
            + self.external.values().map(|&v| v as u128).sum::<u128>()
    }

    pub fn supply(&self) -> u128 {
        self.supply
    }

    fn deploy(&mut self, contract: Contract) -> Address {
        let at = Address(self.next_contract);
        self.next_contract += 1;
        self.contracts.insert(
            at,
            ContractState {
                contract,
                balance: 0,
            },
        );
        at
    }

    fn two_party(&self, at: Address) -> Result<&TwoPartyState, Revert> {
        match self.contracts.get(&at).map(|c| &c.contract) {
            Some(Contract::TwoParty(s)) => Ok(s),
            _ => Err(Revert::NoSuchContract),
        }
    }

    fn two_party_mut(&mut self, at: Address) -> Result<&mut TwoPartyState, Revert> {
        match self.contracts.get_mut(&at).map(|c| &mut c.contract) {
            Some(Contract::TwoParty(s)) => Ok(s),
            _ => Err(Revert::NoSuchContract),
        }
    }

    fn master(&self, at: Address) -> Result<&MasterState, Revert> {
        match self.contracts.get(&at).map(|c| &c.contract) {
            Some(Contract::Master(s)) => Ok(s),
            _ => Err(Revert::NoSuchContract),
        }
    }

    fn master_mut(&mut self, at: Address) -> Result<(&mut MasterState, &mut Amount), Revert> {
        match self.contracts.get_mut(&at) {
            Some(ContractState {
                contract: Contract::Master(s),
                balance,
            }) => Ok((s, balance)),
            _ => Err(Revert::NoSuchContract),
        }
    }

    /// Runs `f` as one transaction: on revert, storage and balances are restored.
    fn call<T: Serialize>(
        &mut self,
        sender: Address,
        contract: Address,
        method: &str,
        args: serde_json::Value,
        f: impl FnOnce(&mut Vm) -> Result<T, Revert>,
    ) -> Result<T, Revert> {
        let contracts = self.contracts.clone();
        let external = self.external.clone();
        let out = f(self);
        let result = match &out {
            Ok(v) => serde_json::to_value(v)
                .map(|v| {
                    if v.is_null() {
                        "ok".to_string()
                    } else {
                        format!("ok:{v}")
                    }
                })
                .unwrap_or_else(|_| "ok".into()),
            Err(e) => {
                self.contracts = contracts;
                self.external = external;
                format!("revert:{e}")
            }
        };
        self.trace.push(CallRecord {
            height: self.height,
            sender,
            contract,
            method: method.to_string(),
            args,
            result,
        });
        out
    }

    /// Players of a two-party contract: stored, or resolved from upstream
    /// contracts as `commit` would. Read-only.
    pub fn tp_players(&self, at: Address) -> Result<(Address, Address), Revert> {
        let s = self.two_party(at)?;
        if !s.alice.is_null() || !s.bob.is_null() {
            return Ok((s.alice, s.bob));
        }
        if s.is_first_level {
            Ok((
                self.master_get_player(s.deposit, 2 * s.index)?,
                self.master_get_player(s.deposit, 2 * s.index + 1)?,
            ))
        } else {
            Ok((self.tp_get_winner(s.left)?, self.tp_get_winner(s.right)?))
        }
    }

    /// Records commitment `c` for `sender` during `(T0, T1)`.
    pub fn tp_commit(
        &mut self,
        contract: Address,
        sender: Address,
        c: Hash256,
    ) -> Result<(), Revert> {
        let args = serde_json::json!({ "c": c });
        self.call(sender, contract, "commit", args, |vm| {
            let h = vm.height;
            let s = vm.two_party(contract)?;
            if !(s.t0 < h && h < s.t1) {
                return Err(Revert::OutOfWindow);
            }
            let (alice, bob) = vm.tp_players(contract)?;
            let s = vm.two_party_mut(contract)?;
            s.alice = alice;
            s.bob = bob;
            if sender.is_null() || (sender != alice && sender != bob) {
                return Err(Revert::NotAPlayer);
            }
            if c == Hash256::ZERO {
                return Err(Revert::ZeroValue);
            }
            if s.commits.contains_key(&sender) {
                return Err(Revert::AlreadyCommitted);
            }
            s.commits.insert(sender, c);
            Ok(())
        })
    }

    /// Opens `sender`'s commitment with `s` during `(T1, T2)`.
    pub fn tp_open(
        &mut self,
        contract: Address,
        sender: Address,
        secret: Hash256,
    ) -> Result<(), Revert> {
        let args = serde_json::json!({ "s": secret });
        self.call(sender, contract, "open", args, |vm| {
            let h = vm.height;
            let s = vm.two_party_mut(contract)?;
            if !(s.t1 < h && h < s.t2) {
                return Err(Revert::OutOfWindow);
            }
            if secret == Hash256::ZERO {
                return Err(Revert::ZeroValue);
            }
            if s.openings.contains_key(&sender) {
                return Err(Revert::AlreadyOpened);
            }
            if s.commits.get(&sender) != Some(&commitment_for(sender, &secret)) {
                return Err(Revert::BadOpening);
            }
            s.openings.insert(sender, secret);
            Ok(())
        })
    }

    /// Winner of a two-party contract once `T2` has passed. Read-only.
    pub fn tp_get_winner(&self, contract: Address) -> Result<Address, Revert> {
        let s = self.two_party(contract)?;
        if self.height <= s.t2 {
            return Err(Revert::TooEarly);
        }
        let (alice, bob) = (s.alice, s.bob);
        let get = |m: &BTreeMap<Address, Hash256>, a: Address| m.get(&a).copied();
        let (Some(_), Some(_)) = (get(&s.commits, alice), get(&s.commits, bob)) else {
            return Ok(if get(&s.commits, alice).is_none() {
                bob
            } else {
                alice
            });
        };
        match (get(&s.openings, alice), get(&s.openings, bob)) {
            (None, _) => Ok(bob),
            (_, None) => Ok(alice),
            (Some(a), Some(b)) => Ok(if a.parity() ^ b.parity() == 0 {
                alice
            } else {
                bob
            }),
        }
    }

    /// Joins the lottery with exactly one bet before `T_Commit`.
    pub fn master_deposit(
        &mut self,
        master: Address,
        sender: Address,
        value: Amount,
    ) -> Result<(), Revert> {
        let args = serde_json::json!({ "value": value });
        self.call(sender, master, "deposit", args, |vm| {
            let h = vm.height;
            let (m, balance) = vm.master_mut(master)?;
            if h > m.t_commit {
                return Err(Revert::TooLate);
            }
            if value != m.bet {
                return Err(Revert::WrongValue);
            }
            if m.deposits.get(&sender).copied().unwrap_or(false) {
                return Err(Revert::AlreadyDeposited);
            }
            if m.n_players >= m.capacity {
                return Err(Revert::Full);
            }
            m.players.push(sender);
            m.n_players += 1;
            m.deposits.insert(sender, true);
            *balance += value;
            if *balance >= m.capacity as Amount * m.bet {
                m.complete = true;
            }
            let funds = vm.external.entry(sender).or_default();
            if *funds < value {
                return Err(Revert::InsufficientFunds);
            }
            *funds -= value;
            Ok(())
        })
    }

    /// Refund (incomplete, from `T_Commit`) or payout to the final winner (after `T_Final`).
    pub fn master_withdraw(&mut self, master: Address, sender: Address) -> Result<Amount, Revert> {
        self.call(sender, master, "withdraw", serde_json::Value::Null, |vm| {
            let h = vm.height;
            let m = vm.master(master)?;
            let paid = if !m.complete {
                if h < m.t_commit {
                    return Err(Revert::TooEarly);
                }
                if !m.deposits.get(&sender).copied().unwrap_or(false) {
                    return Err(Revert::NothingToWithdraw);
                }
                let bet = m.bet;
                let (m, balance) = vm.master_mut(master)?;
                m.deposits.insert(sender, false);
                *balance -= bet;
                bet
            } else {
                if h < m.t_final {
                    return Err(Revert::TooEarly);
                }
                if vm.tp_get_winner(m.final_tournament)? != sender {
                    return Err(Revert::NotWinner);
                }
                let (_, balance) = vm.master_mut(master)?;
                if *balance == 0 {
                    return Err(Revert::NothingToWithdraw);
                }
                std::mem::take(balance)
            };
            *vm.external.entry(sender).or_default() += paid;
            Ok(paid)
        })
    }

    /// `players[i]`, or the null address.
    pub fn master_get_player(&self, master: Address, i: usize) -> Result<Address, Revert> {
        Ok(self
            .master(master)?
            .players
            .get(i)
            .copied()
            .unwrap_or(Address::NULL))
    }

    pub fn master_state(&self, master: Address) -> Option<&MasterState> {
        self.master(master).ok()
    }

    pub fn two_party_state(&self, at: Address) -> Option<&TwoPartyState> {
        self.two_party(at).ok()
    }

    /// Writes the call trace as JSON lines.
    pub fn export_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Addresses of a deployed bracket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractTree {
    pub master: Address,
    /// `levels[ℓ][i]`.
    pub levels: Vec<Vec<Address>>,
}

impl ContractTree {
    pub fn final_contract(&self) -> Address {
        self.levels
            .last()
            .and_then(|l| l.first())
            .copied()
            .unwrap_or(Address::NULL)
    }

    /// Contract of level `level` on player `p`'s path.
    pub fn on_path(&self, p: PartyId, level: usize) -> Address {
        self.levels[level][p >> (level + 1)]
    }
}

/// Deploys the master contract and `N - 1` two-party contracts.
pub fn build_tree(
    vm: &mut Vm,
    n: usize,
    t_commit: Height,
    tau: u64,
    bet: Amount,
) -> Result<ContractTree, ScaffoldError> {
    let levels = levels_for(n)?;
    let master = vm.deploy(Contract::Master(MasterState {
        players: Vec::new(),
        n_players: 0,
        capacity: n,
        complete: false,
        deposits: BTreeMap::new(),
        final_tournament: Address::NULL,
        t_commit,
        t_final: t_commit + 2 * tau * levels as u64,
        bet,
    }));
    let mut tree: Vec<Vec<Address>> = Vec::new();
    for level in 0..levels as usize {
        let t0 = t_commit + 2 * tau * level as u64;
        let mut row = Vec::new();
        for i in 0..(n >> (level + 1)) {
            let (left, right) = if level == 0 {
                (Address::NULL, Address::NULL)
            } else {
                (tree[level - 1][2 * i], tree[level - 1][2 * i + 1])
            };
            row.push(vm.deploy(Contract::TwoParty(TwoPartyState {
                alice: Address::NULL,
                bob: Address::NULL,
                commits: BTreeMap::new(),
                openings: BTreeMap::new(),
                t0,
                t1: t0 + tau,
                t2: t0 + 2 * tau,
                is_first_level: level == 0,
                index: i,
                deposit: if level == 0 { master } else { Address::NULL },
                left,
                right,
            })));
        }
        tree.push(row);
    }
    let final_contract = tree[levels as usize - 1][0];
    if let Ok((m, _)) = vm.master_mut(master) {
        m.final_tournament = final_contract;
    }
    Ok(ContractTree {
        master,
        levels: tree,
    })
}

/// Checks a deployed bracket against the public parameters.
pub fn verify_tree(
    vm: &Vm,
    tree: &ContractTree,
    n: usize,
    t_commit: Height,
    tau: u64,
) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let levels = match levels_for(n) {
        Ok(l) => l as usize,
        Err(e) => return Err(vec![e.to_string()]),
    };
    match vm.master_state(tree.master) {
        Some(m) => {
            if m.capacity != n
                || m.t_commit != t_commit
                || m.t_final != t_commit + 2 * tau * levels as u64
            {
                problems.push("master parameters".to_string());
            }
            if m.final_tournament != tree.final_contract() {
                problems.push("master not wired to the final contract".to_string());
            }
        }
        None => problems.push("missing master".to_string()),
    }
    if tree.levels.len() != levels {
        problems.push("wrong level count".to_string());
        return Err(problems);
    }
    for (level, row) in tree.levels.iter().enumerate() {
        for (i, at) in row.iter().enumerate() {
            let Some(s) = vm.two_party_state(*at) else {
                problems.push(format!("missing contract ({level},{i})"));
                continue;
            };
            let t0 = t_commit + 2 * tau * level as u64;
            if (s.t0, s.t1, s.t2) != (t0, t0 + tau, t0 + 2 * tau) {
                problems.push(format!("timeouts of ({level},{i})"));
            }
            let wired = if level == 0 {
                s.is_first_level && s.index == i && s.deposit == tree.master
            } else {
                !s.is_first_level
                    && s.left == tree.levels[level - 1][2 * i]
                    && s.right == tree.levels[level - 1][2 * i + 1]
            };
            if !wired {
                problems.push(format!("wiring of ({level},{i})"));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: u64 = 6;

    fn word(v: u8) -> Hash256 {
        let mut h = Hash256::ZERO;
        h.0[31] = v;
        h
    }

    /// Two players deposited and the first-level contract ready.
    fn two_player() -> (Vm, ContractTree, Address, Address) {
        let mut vm = Vm::new(0);
        let tree = build_tree(&mut vm, 2, TAU, TAU, 1).unwrap();
        let (a, b) = (Address::of_party(0), Address::of_party(1));
        vm.fund(a, 1);
        vm.fund(b, 1);
        vm.master_deposit(tree.master, a, 1).unwrap();
        vm.master_deposit(tree.master, b, 1).unwrap();
        (vm, tree, a, b)
    }

    #[test]
    fn commit_window_is_strict() {
        let (mut vm, tree, a, _) = two_player();
        let c = tree.levels[0][0];
        vm.advance_to(TAU);
        assert_eq!(vm.tp_commit(c, a, word(1)), Err(Revert::OutOfWindow));
        vm.advance_to(2 * TAU);
        assert_eq!(vm.tp_commit(c, a, word(1)), Err(Revert::OutOfWindow));
        let mut vm2 = two_player().0;
        vm2.advance_to(TAU + 1);
        assert_eq!(vm2.tp_commit(c, a, word(1)), Ok(()));
        assert_eq!(vm2.tp_commit(c, a, word(2)), Err(Revert::AlreadyCommitted));
        assert_eq!(
            vm2.tp_commit(c, Address::of_party(7), word(1)),
            Err(Revert::NotAPlayer)
        );
    }

    #[test]
    fn replayed_commitment_cannot_be_opened() {
        let (mut vm, tree, a, b) = two_player();
        let c = tree.levels[0][0];
        let s = word(6);
        let ca = commitment_for(a, &s);
        vm.advance_to(TAU + 1);
        vm.tp_commit(c, a, ca).unwrap();
        vm.tp_commit(c, b, ca).unwrap();
        vm.advance_to(2 * TAU + 1);
        assert_eq!(vm.tp_open(c, b, s), Err(Revert::BadOpening));
        vm.tp_open(c, a, s).unwrap();
        vm.advance_to(3 * TAU + 1);
        assert_eq!(vm.tp_get_winner(c), Ok(a));
    }

    #[test]
    fn winner_rules() {
        let (mut vm, tree, a, b) = two_player();
        let c = tree.levels[0][0];
        vm.advance_to(TAU + 1);
        vm.tp_commit(c, a, commitment_for(a, &word(6))).unwrap();
        vm.tp_commit(c, b, commitment_for(b, &word(3))).unwrap();
        vm.advance_to(2 * TAU);
        assert_eq!(vm.tp_open(c, a, word(6)), Err(Revert::OutOfWindow));
        vm.advance_to(2 * TAU + 1);
        vm.tp_open(c, a, word(6)).unwrap();
        vm.tp_open(c, b, word(3)).unwrap();
        assert_eq!(vm.tp_get_winner(c), Err(Revert::TooEarly));
        vm.advance_to(3 * TAU + 1);
        // 6 xor 3 = 5, odd
        assert_eq!(vm.tp_get_winner(c), Ok(b));
    }

    #[test]
    fn missing_commit_loses() {
        let (mut vm, tree, a, b) = two_player();
        let c = tree.levels[0][0];
        vm.advance_to(TAU + 1);
        vm.tp_commit(c, b, commitment_for(b, &word(3))).unwrap();
        vm.advance_to(3 * TAU + 1);
        assert_eq!(vm.tp_get_winner(c), Ok(b));
        let _ = a;
    }

    #[test]
    fn equal_openings_favor_alice() {
        let (mut vm, tree, a, b) = two_player();
        let c = tree.levels[0][0];
        vm.advance_to(TAU + 1);
        vm.tp_commit(c, a, commitment_for(a, &word(9))).unwrap();
        vm.tp_commit(c, b, commitment_for(b, &word(9))).unwrap();
        vm.advance_to(2 * TAU + 1);
        vm.tp_open(c, a, word(9)).unwrap();
        vm.tp_open(c, b, word(9)).unwrap();
        vm.advance_to(3 * TAU + 1);
        assert_eq!(vm.tp_get_winner(c), Ok(a));
    }

    #[test]
    fn master_lifecycle() {
        let (mut vm, tree, a, b) = two_player();
        let m = vm.master_state(tree.master).unwrap();
        assert!(m.complete);
        assert_eq!(vm.contract(tree.master).unwrap().balance, 2);
        vm.fund(Address::of_party(2), 1);
        assert_eq!(
            vm.master_deposit(tree.master, Address::of_party(2), 1),
            Err(Revert::Full)
        );
        let c = tree.levels[0][0];
        vm.advance_to(TAU + 1);
        vm.tp_commit(c, a, commitment_for(a, &word(2))).unwrap();
        vm.advance_to(3 * TAU + 1);
        assert_eq!(vm.master_withdraw(tree.master, b), Err(Revert::NotWinner));
        assert_eq!(vm.master_withdraw(tree.master, a), Ok(2));
        assert_eq!(
            vm.master_withdraw(tree.master, a),
            Err(Revert::NothingToWithdraw)
        );
        assert_eq!(vm.total_value(), vm.supply());
    }

    #[test]
    fn incomplete_refunds() {
        let mut vm = Vm::new(0);
        let tree = build_tree(&mut vm, 4, TAU, TAU, 1).unwrap();
        for p in 0..4 {
            vm.fund(Address::of_party(p), 1);
        }
        vm.master_deposit(tree.master, Address::of_party(0), 1)
            .unwrap();
        vm.master_deposit(tree.master, Address::of_party(1), 1)
            .unwrap();
        assert_eq!(
            vm.master_deposit(tree.master, Address::of_party(1), 1),
            Err(Revert::AlreadyDeposited)
        );
        assert_eq!(
            vm.master_deposit(tree.master, Address::of_party(2), 2),
            Err(Revert::WrongValue)
        );
        assert_eq!(
            vm.master_withdraw(tree.master, Address::of_party(0)),
            Err(Revert::TooEarly)
        );
        vm.advance_to(TAU);
        assert_eq!(vm.master_withdraw(tree.master, Address::of_party(0)), Ok(1));
        assert_eq!(vm.master_withdraw(tree.master, Address::of_party(1)), Ok(1));
        assert_eq!(
            vm.master_withdraw(tree.master, Address::of_party(2)),
            Err(Revert::NothingToWithdraw)
        );
        vm.advance_to(TAU + 1);
        assert_eq!(
            vm.master_deposit(tree.master, Address::of_party(2), 1),
            Err(Revert::TooLate)
        );
        for p in 0..4 {
            assert_eq!(vm.balance_of(Address::of_party(p)), 1);
        }
    }

    #[test]
    fn revert_restores_state() {
        let (mut vm, tree, a, _) = two_player();
        let before = (vm.contracts().clone(), vm.balance_of(a));
        vm.advance_to(TAU + 1);
        let snapshot = vm.contracts().clone();
        assert!(vm
            .tp_commit(tree.levels[0][0], Address::of_party(5), word(1))
            .is_err());
        assert_eq!(vm.contracts(), &snapshot);
        assert_eq!(before.1, vm.balance_of(a));
    }

    #[test]
    fn tree_shape() {
        let mut vm = Vm::new(0);
        let t = build_tree(&mut vm, 8, 10, TAU, 1).unwrap();
        assert_eq!(
            t.levels.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![4, 2, 1]
        );
        let top = vm.two_party_state(t.levels[2][0]).unwrap();
        assert_eq!(top.t0, 10 + 4 * TAU);
        let mid = vm.two_party_state(t.levels[1][0]).unwrap();
        assert_eq!((mid.left, mid.right), (t.levels[0][0], t.levels[0][1]));
        assert_eq!(vm.master_state(t.master).unwrap().t_final, 10 + 6 * TAU);
        assert_eq!(verify_tree(&vm, &t, 8, 10, TAU), Ok(()));
        assert!(build_tree(&mut vm, 6, 10, TAU, 1).is_err());
        let mut vm = Vm::new(0);
        let t = build_tree(&mut vm, 2, 10, TAU, 1).unwrap();
        assert_eq!(vm.two_party_state(t.levels[0][0]).unwrap().t0, 10);
    }

    #[test]
    fn trace_export() {
        let (vm, _, _, _) = two_player();
        let mut out = Vec::new();
        vm.export_trace(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["method"], "deposit");
        assert_eq!(v["result"], "ok");
    }
}
