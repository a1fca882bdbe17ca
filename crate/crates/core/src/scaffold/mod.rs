//! The pre-signed transaction scaffold for the UTXO tournament.
//!
//! A match between two players is realized by a kernel of five bodies: the
//! entry (Tx1) joins both stakes, the reveal (Tx2) spends it with the left
//! player's secret, and three outcomes settle it: TxA (left wins at the Tx2
//! timeout), TxB (right wins at the Tx1 timeout) and TxB' (right wins by
//! revealing a secret with odd combined parity). In plain mode every
//! combination of earlier outcomes gets its own kernel; in multi-input mode
//! outcomes are first merged per winner by a compression transaction.

mod ceremony;
mod deposit;
mod dot;
mod index;
mod stats;
mod verify;

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainParams, InputSpec, OutputRef, TransactionBody, TxOut};
use crate::primitives::{tagged_hash, Amount, Hash256, Height, PartyId, PublicKey, Secret};
use crate::script::Predicate;

pub use ceremony::{signing_ceremony, CeremonyOutcome, SignatureStore, SigningStage};
pub use deposit::{
    build_deposit_atomic, build_deposit_hashlocked, hashlocked_predicate, refund_body, xor_all,
    Deposit, DepositOption, IdealMpcOracle, XHAT_SLOT,
};
pub use dot::export_dot;
pub use index::{
    candidates, kernel_count, levels_for, matches_at, multiinput_kernel_count,
    multiinput_players_of, players_of, printed_closed_form, unpack_index, winner_side, Side,
    Unpacked, TX_A, TX_B, TX_B_PRIME,
};
pub use stats::{closed_form_stats, materialization_limit, TransactionStats};
pub use verify::{verify_as_honest, Violation};

/// Witness slot for the left player's kernel secret.
pub const LEFT_SLOT: &str = "left";
/// Witness slot for the right player's kernel secret.
pub const RIGHT_SLOT: &str = "right";

/// Largest bracket materialized in plain mode.
pub const MAX_PLAIN_N: usize = 8;
/// Largest bracket materialized in multi-input mode.
pub const MAX_MULTIINPUT_N: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaffoldError {
    #[error("NotPowerOfTwo: player count {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("IndexOutOfRange: ({level}, {match_index}, {combination})")]
    IndexOutOfRange {
        level: u32,
        match_index: usize,
        combination: u64,
    },
    #[error("Overflow: kernel count at level {level} exceeds 128 bits")]
    Overflow { level: u32 },
    #[error("TooLarge: {mode:?} scaffold for {n} players is not materialized (limit {limit})")]
    TooLarge { n: usize, mode: Mode, limit: usize },
    #[error("ValueMismatch: expected {expected}, found {found}")]
    ValueMismatch { expected: Amount, found: Amount },
    #[error("MpcIncomplete: missing inputs from {missing:?}")]
    MpcIncomplete { missing: Vec<PartyId> },
    #[error("EmptySet: candidate {candidate} wins no kernel of match ({level}, {match_index})")]
    EmptySet {
        level: u32,
        match_index: usize,
        candidate: PartyId,
    },
    #[error("WrongCount: expected {expected} {what}, got {found}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Plain,
    Multiinput,
}

/// `(level, match, combination)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KernelId {
    pub level: u32,
    pub match_index: usize,
    pub combination: u64,
}

impl KernelId {
    pub fn new(level: u32, match_index: usize, combination: u64) -> Self {
        KernelId {
            level,
            match_index,
            combination,
        }
    }
}

impl std::fmt::Display for KernelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.level, self.match_index, self.combination
        )
    }
}

/// Timeouts of one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub t0: Height,
    pub t1: Height,
    pub t2: Height,
}

/// Blocks per tournament level: `2τ`, or `4τ` when compressions need their own window.
pub fn span(mode: Mode, tau: u64) -> u64 {
    match mode {
        Mode::Plain => 2 * tau,
        Mode::Multiinput => 4 * tau,
    }
}

pub fn schedule(mode: Mode, t_commit: Height, tau: u64, level: u32) -> Schedule {
    let t0 = t_commit + span(mode, tau) * level as u64;
    Schedule {
        t0,
        t1: t0 + tau,
        t2: t0 + 2 * tau,
    }
}

/// Height by which all-honest play has fixed the final outcome.
pub fn completion_bound(mode: Mode, t_commit: Height, tau: u64, levels: u32) -> Height {
    t_commit + span(mode, tau) * levels as u64
}

/// Refund height for hashlocked deposits: once the first round is over.
pub fn refund_time(mode: Mode, t_commit: Height, tau: u64) -> Height {
    t_commit + span(mode, tau)
}

/// Tx1 output: left reveals, or right claims after `t1`.
pub fn entry_predicate(master: &[PublicKey], left_commit: Hash256, t1: Height) -> Predicate {
    Predicate::any_of(vec![
        Predicate::all_of(vec![
            Predicate::all_sign(master),
            Predicate::hash_preimage(left_commit, LEFT_SLOT),
        ]),
        Predicate::all_of(vec![Predicate::all_sign(master), Predicate::after(t1)]),
    ])
}

/// Tx2 output: left wins after `t2`, or right wins now with odd combined parity.
pub fn reveal_predicate(
    master: &[PublicKey],
    left_commit: Hash256,
    right_commit: Hash256,
    t2: Height,
) -> Predicate {
    Predicate::any_of(vec![
        Predicate::all_of(vec![Predicate::all_sign(master), Predicate::after(t2)]),
        Predicate::all_of(vec![
            Predicate::all_sign(master),
            Predicate::hash_preimage(left_commit, LEFT_SLOT),
            Predicate::hash_preimage(right_commit, RIGHT_SLOT),
            Predicate::xor_parity_odd(LEFT_SLOT, RIGHT_SLOT),
        ]),
    ])
}

/// Role of a body inside a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    Entry,
    Reveal,
    Outcome(usize),
}

impl Role {
    pub fn label(&self) -> &'static str {
        match self {
            Role::Entry => "Tx1",
            Role::Reveal => "Tx2",
            Role::Outcome(TX_A) => "TxA",
            Role::Outcome(TX_B) => "TxB",
            Role::Outcome(_) => "TxB'",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Kernel {
    pub id: KernelId,
    pub left_player: PartyId,
    pub right_player: PartyId,
    pub left_commit: Hash256,
    pub right_commit: Hash256,
    pub entry: TransactionBody,
    pub reveal: TransactionBody,
    /// `[TxA, TxB, TxB']`.
    pub outcomes: [TransactionBody; 3],
    pub t0: Height,
    pub t1: Height,
    pub t2: Height,
}

impl Kernel {
    pub fn winner(&self, tx: usize) -> PartyId {
        match winner_side(tx) {
            Side::Left => self.left_player,
            Side::Right => self.right_player,
        }
    }

    pub fn player(&self, side: Side) -> PartyId {
        match side {
            Side::Left => self.left_player,
            Side::Right => self.right_player,
        }
    }

    pub fn commit(&self, side: Side) -> Hash256 {
        match side {
            Side::Left => self.left_commit,
            Side::Right => self.right_commit,
        }
    }

    pub fn body(&self, role: Role) -> &TransactionBody {
        match role {
            Role::Entry => &self.entry,
            Role::Reveal => &self.reveal,
            Role::Outcome(t) => &self.outcomes[t],
        }
    }

    pub fn body_mut(&mut self, role: Role) -> &mut TransactionBody {
        match role {
            Role::Entry => &mut self.entry,
            Role::Reveal => &mut self.reveal,
            Role::Outcome(t) => &mut self.outcomes[t],
        }
    }

    pub fn outcome_ref(&self, tx: usize) -> OutputRef {
        OutputRef::new(self.outcomes[tx].ntxid(), 0)
    }

    pub fn plays(&self, p: PartyId) -> bool {
        self.left_player == p || self.right_player == p
    }
}

/// Outcome winner of kernel outcome `tx`.
pub fn winner_of(kernel: &Kernel, tx: usize) -> PartyId {
    kernel.winner(tx)
}

/// Inputs and wiring for one kernel.
pub struct KernelSpec<'a> {
    pub id: KernelId,
    pub players: (PartyId, PartyId),
    pub commits: (Hash256, Hash256),
    pub inputs: (OutputRef, OutputRef),
    pub schedule: Schedule,
    /// Stake per side.
    pub stake: Amount,
    pub master: &'a [PublicKey],
    /// Outcome outputs pay the winner's key directly.
    pub pay_winner: bool,
}

pub fn make_kernel(s: &KernelSpec<'_>) -> Kernel {
    let value = 2 * s.stake;
    let Schedule { t0, t1, t2 } = s.schedule;
    let (lc, rc) = s.commits;
    let entry = TransactionBody {
        inputs: vec![InputSpec::Fixed(s.inputs.0), InputSpec::Fixed(s.inputs.1)],
        outputs: vec![TxOut {
            value,
            predicate: entry_predicate(s.master, lc, t1),
        }],
        locktime: 0,
    };
    let entry_out = OutputRef::new(entry.ntxid(), 0);
    let reveal = TransactionBody {
        inputs: vec![InputSpec::Fixed(entry_out)],
        outputs: vec![TxOut {
            value,
            predicate: reveal_predicate(s.master, lc, rc, t2),
        }],
        locktime: 0,
    };
    let reveal_out = OutputRef::new(reveal.ntxid(), 0);
    let pay = |p: PartyId| {
        if s.pay_winner {
            Predicate::key(s.master[p])
        } else {
            Predicate::all_sign(s.master)
        }
    };
    let outcome = |from: OutputRef, winner: PartyId, locktime: Height| TransactionBody {
        inputs: vec![InputSpec::Fixed(from)],
        outputs: vec![TxOut {
            value,
            predicate: pay(winner),
        }],
        locktime,
    };
    let (l, r) = s.players;
    Kernel {
        id: s.id,
        left_player: l,
        right_player: r,
        left_commit: lc,
        right_commit: rc,
        outcomes: [
            outcome(reveal_out, l, t2),
            outcome(entry_out, r, t1),
            outcome(reveal_out, r, 0),
        ],
        entry,
        reveal,
        t0,
        t1,
        t2,
    }
}

/// Multi-input transaction merging every outcome a candidate wins in one match.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Compression {
    pub level: u32,
    pub match_index: usize,
    pub candidate: PartyId,
    pub body: TransactionBody,
}

impl Compression {
    pub fn output(&self) -> OutputRef {
        OutputRef::new(self.body.ntxid(), 0)
    }
}

/// Builds the compression for `candidate` over the kernels of match `(level, i)`.
pub fn build_compression(
    level: u32,
    i: usize,
    candidate: PartyId,
    kernels: &[Kernel],
    payout: Predicate,
) -> Result<Compression, ScaffoldError> {
    let mut set = BTreeSet::new();
    let mut value = None;
    for k in kernels {
        for tx in 0..3 {
            if k.winner(tx) == candidate {
                set.insert(k.outcome_ref(tx));
                value = Some(k.outcomes[tx].outputs[0].value);
            }
        }
    }
    let value = value.ok_or(ScaffoldError::EmptySet {
        level,
        match_index: i,
        candidate,
    })?;
    Ok(Compression {
        level,
        match_index: i,
        candidate,
        body: TransactionBody {
            inputs: vec![InputSpec::MultiInput(set)],
            outputs: vec![TxOut {
                value,
                predicate: payout,
            }],
            locktime: 0,
        },
    })
}

/// Supplies the commitment each player places in each kernel seat.
pub trait CommitmentSource {
    fn commitment(&mut self, kernel: KernelId, side: Side, player: PartyId) -> Hash256;
}

/// Fresh seeded secrets for every seat, remembered for later reveals.
pub struct SeededSecrets {
    rng: ChaCha8Rng,
    secrets: HashMap<(KernelId, Side), Secret>,
}

impl SeededSecrets {
    pub fn new(seed: u64) -> Self {
        SeededSecrets {
            rng: ChaCha8Rng::seed_from_u64(seed),
            secrets: HashMap::new(),
        }
    }

    pub fn secret(&self, kernel: KernelId, side: Side) -> Option<Secret> {
        self.secrets.get(&(kernel, side)).copied()
    }
}

impl CommitmentSource for SeededSecrets {
    fn commitment(&mut self, kernel: KernelId, side: Side, _player: PartyId) -> Hash256 {
        let s = Secret::random(&mut self.rng);
        self.secrets.insert((kernel, side), s);
        s.commitment()
    }
}

/// Public parameters of a scaffold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildConfig {
    pub n: usize,
    pub mode: Mode,
    pub t_commit: Height,
    pub params: ChainParams,
    /// One key per player; together they form the N-of-N master key.
    pub master_keys: Vec<PublicKey>,
}

/// Where the bets come from.
pub enum DepositPlan<'a> {
    Atomic {
        coins: &'a [(OutputRef, Amount)],
    },
    Hashlocked {
        coins: &'a [(OutputRef, Amount)],
        mpc: &'a IdealMpcOracle,
    },
}

/// Address of a scaffold body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum BodyLoc {
    Deposit {
        index: usize,
    },
    Kernel {
        id: KernelId,
        role: Role,
    },
    #[serde(rename_all = "camelCase")]
    Compression {
        level: u32,
        match_index: usize,
        offset: usize,
    },
}

impl std::fmt::Display for BodyLoc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BodyLoc::Deposit { index } => write!(f, "deposit[{index}]"),
            BodyLoc::Kernel { id, role } => write!(f, "{id}.{}", role.label()),
            BodyLoc::Compression {
                level,
                match_index,
                offset,
            } => write!(f, "compress({level},{match_index})[{offset}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tournament {
    pub mode: Mode,
    pub n: usize,
    pub params: ChainParams,
    pub t_commit: Height,
    pub master_keys: Vec<PublicKey>,
    pub deposit: Deposit,
    /// `levels[ℓ][i][j]`.
    pub levels: Vec<Vec<Vec<Kernel>>>,
    /// `compressions[ℓ][i][c]` for the `c`-th candidate of match `(ℓ, i)`; empty in plain mode.
    pub compressions: Vec<Vec<Vec<Compression>>>,
}

/// Builds the deposit and every kernel (and compression) of the scaffold.
pub fn build_tournament(
    cfg: &BuildConfig,
    plan: DepositPlan<'_>,
    secrets: &mut dyn CommitmentSource,
) -> Result<Tournament, ScaffoldError> {
    let levels = levels_for(cfg.n)?;
    let limit = match cfg.mode {
        Mode::Plain => MAX_PLAIN_N,
        Mode::Multiinput => MAX_MULTIINPUT_N,
    };
    if cfg.n > limit {
        return Err(ScaffoldError::TooLarge {
            n: cfg.n,
            mode: cfg.mode,
            limit,
        });
    }
    if cfg.master_keys.len() != cfg.n {
        return Err(ScaffoldError::WrongCount {
            what: "master keys",
            expected: cfg.n,
            found: cfg.master_keys.len(),
        });
    }
    let bet = cfg.params.bet_value;
    let deposit = match plan {
        DepositPlan::Atomic { coins } => {
            check_coins(coins, cfg.n)?;
            Deposit::Atomic {
                body: build_deposit_atomic(coins, bet, &cfg.master_keys)?,
            }
        }
        DepositPlan::Hashlocked { coins, mpc } => {
            check_coins(coins, cfg.n)?;
            let refund = refund_time(cfg.mode, cfg.t_commit, cfg.params.tau);
            let (bodies, xhat_digest) =
                build_deposit_hashlocked(coins, bet, &cfg.master_keys, mpc, refund)?;
            Deposit::Hashlocked {
                bodies,
                xhat_digest,
                refund_time: refund,
            }
        }
    };
    let leaves = deposit.leaves(cfg.n);

    let mut t = Tournament {
        mode: cfg.mode,
        n: cfg.n,
        params: cfg.params,
        t_commit: cfg.t_commit,
        master_keys: cfg.master_keys.clone(),
        deposit,
        levels: Vec::with_capacity(levels as usize),
        compressions: Vec::new(),
    };

    for level in 0..levels {
        let sched = schedule(cfg.mode, cfg.t_commit, cfg.params.tau, level);
        let is_final = level + 1 == levels;
        let stake = bet << level;
        let mut matches = Vec::with_capacity(matches_at(cfg.n, level));
        for i in 0..matches_at(cfg.n, level) {
            let count = match cfg.mode {
                Mode::Plain => kernel_count(level)? as u64,
                Mode::Multiinput => multiinput_kernel_count(level) as u64,
            };
            let mut kernels = Vec::with_capacity(count as usize);
            for j in 0..count {
                let id = KernelId::new(level, i, j);
                let (players, inputs) = t.seat(id, &leaves)?;
                let commits = (
                    secrets.commitment(id, Side::Left, players.0),
                    secrets.commitment(id, Side::Right, players.1),
                );
                kernels.push(make_kernel(&KernelSpec {
                    id,
                    players,
                    commits,
                    inputs,
                    schedule: sched,
                    stake,
                    master: &cfg.master_keys,
                    pay_winner: is_final && cfg.mode == Mode::Plain,
                }));
            }
            matches.push(kernels);
        }
        if cfg.mode == Mode::Multiinput {
            let mut comps = Vec::with_capacity(matches.len());
            for (i, kernels) in matches.iter().enumerate() {
                let mut per = Vec::new();
                for c in candidates(level, i) {
                    let payout = if is_final {
                        Predicate::key(cfg.master_keys[c])
                    } else {
                        Predicate::all_sign(&cfg.master_keys)
                    };
                    per.push(build_compression(level, i, c, kernels, payout)?);
                }
                comps.push(per);
            }
            t.compressions.push(comps);
        }
        t.levels.push(matches);
    }
    Ok(t)
}

fn check_coins(coins: &[(OutputRef, Amount)], n: usize) -> Result<(), ScaffoldError> {
    if coins.len() != n {
        return Err(ScaffoldError::WrongCount {
            what: "coins",
            expected: n,
            found: coins.len(),
        });
    }
    Ok(())
}

/// Deterministic placeholder coins for scaffolds built off-chain.
pub fn placeholder_coins(seed: u64, n: usize, bet: Amount) -> Vec<(OutputRef, Amount)> {
    (0..n)
        .map(|p| {
            let id = tagged_hash(
                b"lottery/coin",
                &[&seed.to_le_bytes(), &(p as u64).to_le_bytes()],
            );
            (OutputRef::new(id, 0), bet)
        })
        .collect()
}

/// Scaffold from seeded keys, coins and secrets, for tooling that needs one
/// without running a trial.
pub fn build_seeded(
    n: usize,
    mode: Mode,
    params: ChainParams,
    t_commit: Height,
    deposit: DepositOption,
    seed: u64,
) -> Result<Tournament, ScaffoldError> {
    levels_for(n)?;
    let cfg = BuildConfig {
        n,
        mode,
        t_commit,
        params,
        master_keys: (0..n).map(|p| PublicKey::derive(seed, p)).collect(),
    };
    let coins = placeholder_coins(seed, n, params.bet_value);
    let mut secrets = SeededSecrets::new(seed);
    match deposit {
        DepositOption::Atomic => {
            build_tournament(&cfg, DepositPlan::Atomic { coins: &coins }, &mut secrets)
        }
        DepositOption::Hashlocked => {
            let mut mpc = IdealMpcOracle::new(n);
            for p in 0..n {
                mpc.submit(
                    p,
                    tagged_hash(
                        b"lottery/mpc",
                        &[&seed.to_le_bytes(), &(p as u64).to_le_bytes()],
                    )
                    .0,
                );
            }
            build_tournament(
                &cfg,
                DepositPlan::Hashlocked {
                    coins: &coins,
                    mpc: &mpc,
                },
                &mut secrets,
            )
        }
    }
}

impl Tournament {
    pub fn level_count(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn final_level(&self) -> u32 {
        self.level_count() - 1
    }

    pub fn schedule(&self, level: u32) -> Schedule {
        schedule(self.mode, self.t_commit, self.params.tau, level)
    }

    /// Height by which all-honest play fixes the final outcome.
    pub fn completion_bound(&self) -> Height {
        completion_bound(
            self.mode,
            self.t_commit,
            self.params.tau,
            self.level_count(),
        )
    }

    pub fn kernel(&self, id: KernelId) -> Option<&Kernel> {
        self.levels
            .get(id.level as usize)?
            .get(id.match_index)?
            .get(id.combination as usize)
    }

    pub fn kernel_mut(&mut self, id: KernelId) -> Option<&mut Kernel> {
        self.levels
            .get_mut(id.level as usize)?
            .get_mut(id.match_index)?
            .get_mut(id.combination as usize)
    }

    pub fn compression(
        &self,
        level: u32,
        match_index: usize,
        offset: usize,
    ) -> Option<&Compression> {
        self.compressions
            .get(level as usize)?
            .get(match_index)?
            .get(offset)
    }

    pub fn body(&self, loc: BodyLoc) -> Option<&TransactionBody> {
        match loc {
            BodyLoc::Deposit { index } => self.deposit.bodies().get(index).copied(),
            BodyLoc::Kernel { id, role } => self.kernel(id).map(|k| k.body(role)),
            BodyLoc::Compression {
                level,
                match_index,
                offset,
            } => self
                .compression(level, match_index, offset)
                .map(|c| &c.body),
        }
    }

    pub fn kernels(&self) -> impl Iterator<Item = &Kernel> {
        self.levels.iter().flatten().flatten()
    }

    pub fn all_compressions(&self) -> impl Iterator<Item = &Compression> {
        self.compressions.iter().flatten().flatten()
    }

    /// Every body that needs N-of-N signatures, in signing order (deposit excluded).
    pub fn scaffold_bodies(&self) -> Vec<(BodyLoc, &TransactionBody)> {
        let mut out = Vec::new();
        for k in self.kernels() {
            for role in [
                Role::Entry,
                Role::Reveal,
                Role::Outcome(0),
                Role::Outcome(1),
                Role::Outcome(2),
            ] {
                out.push((BodyLoc::Kernel { id: k.id, role }, k.body(role)));
            }
        }
        for (level, per_level) in self.compressions.iter().enumerate() {
            for (match_index, per_match) in per_level.iter().enumerate() {
                for (offset, c) in per_match.iter().enumerate() {
                    out.push((
                        BodyLoc::Compression {
                            level: level as u32,
                            match_index,
                            offset,
                        },
                        &c.body,
                    ));
                }
            }
        }
        out
    }

    /// Scaffold bodies followed by deposits.
    pub fn all_bodies(&self) -> Vec<(BodyLoc, &TransactionBody)> {
        let mut out = self.scaffold_bodies();
        for (index, b) in self.deposit.bodies().into_iter().enumerate() {
            out.push((BodyLoc::Deposit { index }, b));
        }
        out
    }

    pub fn body_count(&self) -> usize {
        self.kernels().count() * 5 + self.all_compressions().count() + self.deposit.count()
    }

    /// Kernels enumerated per match, `[ℓ][i]`.
    pub fn kernel_counts(&self) -> Vec<Vec<usize>> {
        self.levels
            .iter()
            .map(|l| l.iter().map(|m| m.len()).collect())
            .collect()
    }

    /// Scaffold bodies able to spend each output (multi-input sets count every member).
    pub fn spenders(&self) -> HashMap<OutputRef, Vec<BodyLoc>> {
        let mut map: HashMap<OutputRef, Vec<BodyLoc>> = HashMap::new();
        for (loc, body) in self.scaffold_bodies() {
            for input in &body.inputs {
                match input {
                    InputSpec::Fixed(r) => map.entry(*r).or_default().push(loc),
                    InputSpec::MultiInput(set) => {
                        for r in set {
                            map.entry(*r).or_default().push(loc);
                        }
                    }
                }
            }
        }
        map
    }

    /// Player a body settles a match for, if it is an outcome or compression.
    pub fn payee(&self, loc: BodyLoc) -> Option<PartyId> {
        match loc {
            BodyLoc::Kernel {
                id,
                role: Role::Outcome(t),
            } => self.kernel(id).map(|k| k.winner(t)),
            BodyLoc::Compression {
                level,
                match_index,
                offset,
            } => self
                .compression(level, match_index, offset)
                .map(|c| c.candidate),
            _ => None,
        }
    }

    /// Whether `loc` settles the whole tournament.
    pub fn is_final_payout(&self, loc: BodyLoc) -> bool {
        let last = self.final_level();
        match (self.mode, loc) {
            (
                Mode::Plain,
                BodyLoc::Kernel {
                    id,
                    role: Role::Outcome(_),
                },
            ) => id.level == last,
            (Mode::Multiinput, BodyLoc::Compression { level, .. }) => level == last,
            _ => false,
        }
    }

    /// Players and funding outputs of kernel `id`, derived from already-built children.
    fn seat(
        &self,
        id: KernelId,
        leaves: &[OutputRef],
    ) -> Result<((PartyId, PartyId), (OutputRef, OutputRef)), ScaffoldError> {
        let KernelId {
            level,
            match_index: i,
            combination: j,
        } = id;
        if level == 0 {
            return Ok(((2 * i, 2 * i + 1), (leaves[2 * i], leaves[2 * i + 1])));
        }
        let prev = (level - 1) as usize;
        match self.mode {
            Mode::Plain => {
                let u = unpack_index(level, i, j)?;
                let lk = &self.levels[prev][u.left_match][u.left_kernel as usize];
                let rk = &self.levels[prev][u.right_match][u.right_kernel as usize];
                Ok((
                    (lk.winner(u.left_tx), rk.winner(u.right_tx)),
                    (lk.outcome_ref(u.left_tx), rk.outcome_ref(u.right_tx)),
                ))
            }
            Mode::Multiinput => {
                let (l, r) = multiinput_players_of(self.n, level, i, j)?;
                let half = 1u64 << level;
                let lc = &self.compressions[prev][2 * i][(j / half) as usize];
                let rc = &self.compressions[prev][2 * i + 1][(j % half) as usize];
                Ok(((l, r), (lc.output(), rc.output())))
            }
        }
    }

    /// Expected players and funding outputs of `id` recomputed from public data.
    pub fn expected_seat(
        &self,
        id: KernelId,
    ) -> Result<((PartyId, PartyId), (OutputRef, OutputRef)), ScaffoldError> {
        let leaves = self.deposit.leaves(self.n);
        if leaves.len() != self.n {
            return Err(ScaffoldError::WrongCount {
                what: "deposit leaves",
                expected: self.n,
                found: leaves.len(),
            });
        }
        self.seat(id, &leaves)
    }
}
