//! Player decision procedures: the honest reference player and a library of
//! adversaries, usable on both backends.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::OutputRef;
use crate::contracts::{commitment_for, Address};
use crate::primitives::{sha256, Hash256, Height, PartyId, Secret};
use crate::scaffold::{KernelId, Side};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Bitcoin,
    Ethereum,
}

/// Match a decision is about.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MatchContext {
    #[default]
    None,
    Kernel(KernelId),
    Contract {
        address: Address,
        level: u32,
    },
}

/// What a player can see when asked for a decision: public chain or contract
/// data plus its own secrets.
#[derive(Clone, Debug, Default)]
pub struct PhaseView {
    pub backend: BackendKind,
    pub height: Height,
    pub me: PartyId,
    pub n: usize,
    pub context: MatchContext,
    /// My seat in the current match (left = alice).
    pub side: Option<Side>,
    pub opponent: Option<PartyId>,
    pub my_secret: Option<Secret>,
    pub opponent_commitment: Option<Hash256>,
    /// Opponent's opening, once public.
    pub opponent_opening: Option<Secret>,
    /// First height at which the current window is closed.
    pub deadline: Height,
    /// Result of checking the scaffold as an honest player would.
    pub scaffold_verified: bool,
    pub deposits_on_chain: usize,
}

impl PhaseView {
    /// Whether this is the last height before `deadline`.
    pub fn last_chance(&self) -> bool {
        self.height + 1 >= self.deadline
    }
}

/// Left/alice wins on even combined parity, right/bob on odd.
pub fn opening_wins(side: Side, mine: &Secret, theirs: &Secret) -> bool {
    let odd = mine.parity() ^ theirs.parity() == 1;
    odd == (side == Side::Right)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitAction {
    Commit(Hash256),
    Silent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpenAction {
    Open(Secret),
    Silent,
}

/// A fully signed transaction a player could broadcast now.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub label: String,
    /// Player this transaction settles a match for, if any.
    pub payee: Option<PartyId>,
    /// Publishes one of the broadcaster's own unopened secrets.
    pub reveals_own: bool,
    pub consumes: Vec<OutputRef>,
}

pub trait Strategy {
    fn name(&self) -> String;

    fn is_honest(&self) -> bool {
        false
    }

    fn choose_secret(&mut self, rng: &mut dyn RngCore) -> Secret {
        Secret::random(rng)
    }

    /// Commitment placed in a scaffold seat; `honest` hashes the chosen secret.
    fn override_commitment(&mut self, _view: &PhaseView, honest: Hash256) -> Hash256 {
        honest
    }

    /// Whether `at_signing` reads `scaffold_verified` (checking is not free).
    fn needs_verification(&self) -> bool {
        self.is_honest()
    }

    fn at_signing(&mut self, view: &PhaseView) -> bool {
        view.scaffold_verified
    }

    fn at_deposit(&mut self, _view: &PhaseView) -> bool {
        true
    }

    /// Publish this player's share of `x̂` (hashlocked deposits).
    fn at_mpc_reveal(&mut self, view: &PhaseView) -> bool {
        view.deposits_on_chain == view.n
    }

    fn at_commit(&mut self, view: &PhaseView) -> CommitAction {
        match view.my_secret {
            Some(s) => CommitAction::Commit(commitment_for(Address::of_party(view.me), &s.0)),
            None => CommitAction::Silent,
        }
    }

    fn at_open(&mut self, view: &PhaseView) -> OpenAction {
        view.my_secret.map_or(OpenAction::Silent, OpenAction::Open)
    }

    /// Indices of `candidates` to submit.
    fn at_broadcast(&mut self, view: &PhaseView, candidates: &[Candidate]) -> Vec<usize> {
        honest_broadcast(view.me, candidates)
    }

    /// Claim a refund or the pot.
    fn at_withdraw(&mut self, _view: &PhaseView) -> bool {
        true
    }

    /// Secret behind `commitment`, if this player has learned it off-chain.
    fn knows(&self, _commitment: &Hash256) -> Option<Secret> {
        None
    }
}

/// Submit everything available, one spender per output: first what pays me,
/// then my own reveals, then anything else in enumeration order.
pub fn honest_broadcast(me: PartyId, candidates: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| {
        let c = &candidates[i];
        (c.payee != Some(me), !c.reveals_own, i)
    });
    let mut taken: BTreeSet<OutputRef> = BTreeSet::new();
    let mut picked = Vec::new();
    for i in order {
        let c = &candidates[i];
        if c.consumes.iter().any(|r| taken.contains(r)) {
            continue;
        }
        taken.extend(c.consumes.iter().copied());
        picked.push(i);
    }
    picked.sort_unstable();
    picked
}

pub struct Honest;

impl Strategy for Honest {
    fn name(&self) -> String {
        "honest".into()
    }

    fn is_honest(&self) -> bool {
        true
    }
}

/// Refuses to sign the scaffold. On the contract backend there is nothing to
/// sign, so it withholds the deposit instead.
pub struct AbortAtSigning;

impl Strategy for AbortAtSigning {
    fn name(&self) -> String {
        "abort-signing".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        false
    }

    fn at_deposit(&mut self, view: &PhaseView) -> bool {
        view.backend != BackendKind::Ethereum
    }
}

pub struct AbortAtDeposit;

impl Strategy for AbortAtDeposit {
    fn name(&self) -> String {
        "abort-deposit".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        true
    }

    fn at_deposit(&mut self, _view: &PhaseView) -> bool {
        false
    }
}

/// Silent in the commit window. Scaffold seats cannot be left empty, so it
/// places a digest nobody can open.
pub struct AbortAtCommit;

impl Strategy for AbortAtCommit {
    fn name(&self) -> String {
        "abort-commit".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        true
    }

    fn override_commitment(&mut self, _view: &PhaseView, honest: Hash256) -> Hash256 {
        sha256(&honest.0)
    }

    fn at_commit(&mut self, _view: &PhaseView) -> CommitAction {
        CommitAction::Silent
    }

    fn at_open(&mut self, _view: &PhaseView) -> OpenAction {
        OpenAction::Silent
    }
}

pub struct AbortAtOpen;

impl Strategy for AbortAtOpen {
    fn name(&self) -> String {
        "abort-open".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        true
    }

    fn at_open(&mut self, _view: &PhaseView) -> OpenAction {
        OpenAction::Silent
    }
}

/// Waits for the opponent's opening and opens only if it wins; opens blind at
/// the last moment when the opponent has not opened.
pub struct SelectiveAbortAtOpen;

impl Strategy for SelectiveAbortAtOpen {
    fn name(&self) -> String {
        "selective-abort-open".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        true
    }

    fn at_open(&mut self, view: &PhaseView) -> OpenAction {
        let (Some(mine), Some(side)) = (view.my_secret, view.side) else {
            return OpenAction::Silent;
        };
        match view.opponent_opening {
            Some(theirs) if opening_wins(side, &mine, &theirs) => OpenAction::Open(mine),
            Some(_) => OpenAction::Silent,
            None if view.last_chance() => OpenAction::Open(mine),
            None => OpenAction::Silent,
        }
    }
}

/// Copies the opponent's commitment value.
pub struct ReplayCommit;

impl Strategy for ReplayCommit {
    fn name(&self) -> String {
        "replay-commit".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        true
    }

    fn override_commitment(&mut self, view: &PhaseView, honest: Hash256) -> Hash256 {
        view.opponent_commitment.unwrap_or(honest)
    }

    fn at_commit(&mut self, view: &PhaseView) -> CommitAction {
        match view.opponent_commitment {
            Some(c) => CommitAction::Commit(c),
            None if view.last_chance() => Honest.at_commit(view),
            None => CommitAction::Silent,
        }
    }
}

/// Never submits a transaction that pays itself.
pub struct WithholdBroadcast;

impl Strategy for WithholdBroadcast {
    fn name(&self) -> String {
        "withhold-broadcast".into()
    }

    fn at_signing(&mut self, _view: &PhaseView) -> bool {
        true
    }

    fn at_broadcast(&mut self, view: &PhaseView, candidates: &[Candidate]) -> Vec<usize> {
        let allowed: Vec<usize> = (0..candidates.len())
            .filter(|&i| candidates[i].payee != Some(view.me))
            .collect();
        let sub: Vec<Candidate> = allowed.iter().map(|&i| candidates[i].clone()).collect();
        honest_broadcast(view.me, &sub)
            .into_iter()
            .map(|k| allowed[k])
            .collect()
    }

    fn at_withdraw(&mut self, _view: &PhaseView) -> bool {
        false
    }
}

/// State shared by every member of a coalition.
#[derive(Debug, Default)]
pub struct CoalitionShared {
    pub members: BTreeSet<PartyId>,
    secrets: HashMap<Hash256, Secret>,
}

/// Wraps an inner strategy; members pool their secrets and let the
/// lowest-numbered member win matches among themselves.
pub struct Coalition {
    me: PartyId,
    inner: Box<dyn Strategy>,
    shared: Rc<RefCell<CoalitionShared>>,
}

impl Coalition {
    pub fn new(
        me: PartyId,
        inner: Box<dyn Strategy>,
        shared: Rc<RefCell<CoalitionShared>>,
    ) -> Self {
        shared.borrow_mut().members.insert(me);
        Coalition { me, inner, shared }
    }

    fn is_member(&self, p: Option<PartyId>) -> bool {
        p.is_some_and(|p| self.shared.borrow().members.contains(&p))
    }
}

impl Strategy for Coalition {
    fn name(&self) -> String {
        format!("coalition:{}", self.inner.name())
    }

    fn choose_secret(&mut self, rng: &mut dyn RngCore) -> Secret {
        let s = self.inner.choose_secret(rng);
        let mut shared = self.shared.borrow_mut();
        shared.secrets.insert(s.commitment(), s);
        shared
            .secrets
            .insert(commitment_for(Address::of_party(self.me), &s.0), s);
        s
    }

    fn override_commitment(&mut self, view: &PhaseView, honest: Hash256) -> Hash256 {
        self.inner.override_commitment(view, honest)
    }

    fn needs_verification(&self) -> bool {
        self.inner.needs_verification()
    }

    fn at_signing(&mut self, view: &PhaseView) -> bool {
        self.inner.at_signing(view)
    }

    fn at_deposit(&mut self, view: &PhaseView) -> bool {
        self.inner.at_deposit(view)
    }

    fn at_mpc_reveal(&mut self, view: &PhaseView) -> bool {
        self.inner.at_mpc_reveal(view)
    }

    fn at_commit(&mut self, view: &PhaseView) -> CommitAction {
        self.inner.at_commit(view)
    }

    fn at_open(&mut self, view: &PhaseView) -> OpenAction {
        if self.is_member(view.opponent) {
            return match (view.opponent, view.my_secret) {
                (Some(o), Some(s)) if self.me < o => OpenAction::Open(s),
                _ => OpenAction::Silent,
            };
        }
        let mut v = view.clone();
        if v.opponent_opening.is_none() {
            v.opponent_opening = v.opponent_commitment.and_then(|c| self.knows(&c));
        }
        self.inner.at_open(&v)
    }

    fn at_broadcast(&mut self, view: &PhaseView, candidates: &[Candidate]) -> Vec<usize> {
        self.inner.at_broadcast(view, candidates)
    }

    fn at_withdraw(&mut self, view: &PhaseView) -> bool {
        self.inner.at_withdraw(view)
    }

    fn knows(&self, commitment: &Hash256) -> Option<Secret> {
        self.shared.borrow().secrets.get(commitment).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("UnknownStrategy: {0}")]
    Unknown(String),
}

/// Names of the built-in adversaries.
pub fn adversary_library() -> Vec<&'static str> {
    vec![
        "abort-signing",
        "abort-deposit",
        "abort-commit",
        "abort-open",
        "selective-abort-open",
        "replay-commit",
        "withhold-broadcast",
    ]
}

/// Every name accepted by [`build_strategies`], coalition forms included.
pub fn known_names() -> Vec<String> {
    let mut v = vec!["honest".to_string()];
    for a in adversary_library() {
        v.push(a.to_string());
    }
    for a in std::iter::once("honest").chain(adversary_library()) {
        v.push(format!("coalition:{a}"));
    }
    v
}

fn simple(name: &str) -> Option<Box<dyn Strategy>> {
    Some(match name {
        "honest" => Box::new(Honest),
        "abort-signing" => Box::new(AbortAtSigning),
        "abort-deposit" => Box::new(AbortAtDeposit),
        "abort-commit" => Box::new(AbortAtCommit),
        "abort-open" => Box::new(AbortAtOpen),
        "selective-abort-open" => Box::new(SelectiveAbortAtOpen),
        "replay-commit" => Box::new(ReplayCommit),
        "withhold-broadcast" => Box::new(WithholdBroadcast),
        _ => return None,
    })
}

/// Checks a name without building anything.
pub fn validate_name(name: &str) -> Result<(), StrategyError> {
    let base = name.strip_prefix("coalition:").unwrap_or(name);
    simple(base)
        .map(|_| ())
        .ok_or_else(|| StrategyError::Unknown(name.to_string()))
}

/// One strategy per seat. All `coalition:` seats share a single coalition.
pub fn build_strategies(names: &[String]) -> Result<Vec<Box<dyn Strategy>>, StrategyError> {
    let shared = Rc::new(RefCell::new(CoalitionShared::default()));
    names
        .iter()
        .enumerate()
        .map(|(p, name)| {
            let unknown = || StrategyError::Unknown(name.clone());
            match name.strip_prefix("coalition:") {
                Some(inner) => {
                    let inner = simple(inner).ok_or_else(unknown)?;
                    Ok(Box::new(Coalition::new(p, inner, shared.clone())) as Box<dyn Strategy>)
                }
                None => simple(name).ok_or_else(unknown),
            }
        })
        .collect()
}
