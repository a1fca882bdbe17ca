//! Trials on the UTXO backend: scaffold, ceremony, then a discrete-event loop
//! over the heights at which some window opens or closes.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    player_seed, ConfigError, HarnessError, Ledger, ScenarioConfig, TrialArtifacts, TrialResult,
};
use crate::chain::{ChainParams, EntryKind, InputSpec, OutputRef, SimChain, TransactionBody};
use crate::primitives::{sha256, Amount, Hash256, Height, PartyId, PublicKey, Secret};
use crate::scaffold::{
    build_tournament, refund_body, signing_ceremony, span, verify_as_honest, BodyLoc, BuildConfig,
    CeremonyOutcome, CommitmentSource, Deposit, DepositOption, DepositPlan, IdealMpcOracle,
    KernelId, Mode, Side, SignatureStore, SigningStage, Tournament,
};
use crate::script::{InputWitness, Predicate, Preimage, SignatureOracle, Witness};
use crate::strategies::{
    build_strategies, BackendKind, Candidate, MatchContext, OpenAction, PhaseView, Strategy,
};

/// Draws each seat's secret from its player and lets the strategy replace the commitment.
struct Seats<'a> {
    strategies: &'a mut [Box<dyn Strategy>],
    rngs: &'a mut [ChaCha8Rng],
    n: usize,
    secrets: HashMap<Hash256, (PartyId, Secret)>,
    last_left: Option<(KernelId, Hash256)>,
}

impl CommitmentSource for Seats<'_> {
    fn commitment(&mut self, kernel: KernelId, side: Side, player: PartyId) -> Hash256 {
        let s = self.strategies[player].choose_secret(&mut self.rngs[player]);
        let honest = s.commitment();
        self.secrets.insert(honest, (player, s));
        let opponent_commitment = match side {
            Side::Right => self.last_left.filter(|(k, _)| *k == kernel).map(|(_, c)| c),
            Side::Left => None,
        };
        let view = PhaseView {
            backend: BackendKind::Bitcoin,
            me: player,
            n: self.n,
            context: MatchContext::Kernel(kernel),
            side: Some(side),
            my_secret: Some(s),
            opponent_commitment,
            ..PhaseView::default()
        };
        let c = self.strategies[player].override_commitment(&view, honest);
        if side == Side::Left {
            self.last_left = Some((kernel, c));
        }
        c
    }
}

/// One way to satisfy a predicate.
#[derive(Clone, Default)]
struct Route {
    branch: Vec<u32>,
    keys: Vec<PublicKey>,
    slots: Vec<(String, Hash256)>,
    after: Vec<Height>,
}

fn routes(p: &Predicate) -> Vec<Route> {
    match p {
        Predicate::AllSign { keys } => vec![Route {
            keys: keys.clone(),
            ..Route::default()
        }],
        Predicate::KeySign { key } => vec![Route {
            keys: vec![*key],
            ..Route::default()
        }],
        Predicate::HashPreimage { digest, slot } => vec![Route {
            slots: vec![(slot.clone(), *digest)],
            ..Route::default()
        }],
        Predicate::AfterHeight { height } => vec![Route {
            after: vec![*height],
            ..Route::default()
        }],
        Predicate::XorParityOdd { .. } => vec![Route::default()],
        Predicate::AllOf { terms } => terms.iter().fold(vec![Route::default()], |acc, term| {
            let next = routes(term);
            let mut out = Vec::new();
            for a in &acc {
                for b in &next {
                    let mut r = a.clone();
                    r.branch.extend(&b.branch);
                    r.keys.extend(&b.keys);
                    r.slots.extend(b.slots.iter().cloned());
                    r.after.extend(&b.after);
                    out.push(r);
                }
            }
            out
        }),
        Predicate::AnyOf { branches } => {
            let mut out = Vec::new();
            for (k, b) in branches.iter().enumerate() {
                for mut r in routes(b) {
                    r.branch.insert(0, k as u32);
                    out.push(r);
                }
            }
            out
        }
    }
}

/// A scaffold body ready to broadcast.
struct Ready {
    loc: BodyLoc,
    witness: Witness,
    /// Player whose unopened secret the witness publishes.
    owner: Option<PartyId>,
    candidate: Candidate,
}

struct Sim {
    n: usize,
    bet: Amount,
    t_commit: Height,
    chain: SimChain,
    oracle: SignatureOracle,
    t: Tournament,
    store: SignatureStore,
    keys: Vec<PublicKey>,
    ids: HashMap<BodyLoc, Hash256>,
    locs: HashMap<Hash256, BodyLoc>,
    spenders: HashMap<OutputRef, Vec<BodyLoc>>,
    public: HashMap<Hash256, Vec<u8>>,
    private: HashMap<Hash256, (PartyId, Secret)>,
    hashlocked: Option<Hashlocked>,
    conservation_held: bool,
    cache: Option<((Height, usize, usize), Rc<Vec<Ready>>)>,
}

struct Hashlocked {
    refund_time: Height,
    mpc: IdealMpcOracle,
    posted: Vec<bool>,
    published: Vec<bool>,
    xhat_height: Option<Height>,
    refund_heights: Vec<Height>,
}

impl Sim {
    fn height(&self) -> Height {
        self.chain.height()
    }

    fn view(&self, p: PartyId) -> PhaseView {
        PhaseView {
            backend: BackendKind::Bitcoin,
            height: self.height(),
            me: p,
            n: self.n,
            deposits_on_chain: self
                .hashlocked
                .as_ref()
                .map_or(self.n, |h| h.posted.iter().filter(|x| **x).count()),
            ..PhaseView::default()
        }
    }

    fn scaffold_live(&self) -> bool {
        self.hashlocked
            .as_ref()
            .map_or(true, |h| h.xhat_height.is_some())
    }

    fn solve(
        &self,
        pred: &Predicate,
        digest: &Hash256,
        locktime: Height,
    ) -> Option<(InputWitness, Option<PartyId>)> {
        let h = self.height();
        let options = routes(pred);
        let sigs = self.store.get(digest);
        for allow_private in [false, true] {
            'route: for r in &options {
                if r.after.iter().any(|&a| a > h || a > locktime) {
                    continue;
                }
                let mut w = InputWitness {
                    branch: r.branch.clone(),
                    ..InputWitness::default()
                };
                for key in &r.keys {
                    match sigs.iter().find(|(k, _)| k == key) {
                        Some(s) => w.signatures.push(*s),
                        None => continue 'route,
                    }
                }
                let mut owner = None;
                for (slot, d) in &r.slots {
                    let bytes = if let Some(b) = self.public.get(d) {
                        b.clone()
                    } else if let (true, Some((q, s))) = (allow_private, self.private.get(d)) {
                        if owner.is_some_and(|o| o != *q) {
                            continue 'route;
                        }
                        owner = Some(*q);
                        s.bytes().to_vec()
                    } else {
                        continue 'route;
                    };
                    w.preimages.insert(slot.clone(), Preimage(bytes));
                }
                return Some((w, owner));
            }
        }
        None
    }

    /// Every scaffold body that is valid right now, with the witness that makes it so.
    fn ready(&mut self) -> Rc<Vec<Ready>> {
        let key = (self.height(), self.chain.log().len(), self.public.len());
        if let Some((k, v)) = &self.cache {
            if *k == key {
                return v.clone();
            }
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in self.chain.utxo().keys() {
            let Some(locs) = self.spenders.get(r) else {
                continue;
            };
            for &loc in locs {
                if !seen.insert(loc) {
                    continue;
                }
                if let Some(ready) = self.prepare(loc) {
                    out.push(ready);
                }
            }
        }
        let v = Rc::new(out);
        self.cache = Some((key, v.clone()));
        v
    }

    fn prepare(&self, loc: BodyLoc) -> Option<Ready> {
        let body = self.t.body(loc)?;
        if body.locktime > self.height() {
            return None;
        }
        let digest = self.ids[&loc];
        let mut witness = Vec::with_capacity(body.inputs.len());
        let mut owner: Option<PartyId> = None;
        let mut consumes = Vec::new();
        for input in &body.inputs {
            let (r, chosen) = match input {
                InputSpec::Fixed(r) => (*r, None),
                InputSpec::MultiInput(set) => {
                    let live = set.iter().find(|m| self.chain.get_utxo(m).is_some())?;
                    (*live, Some(*live))
                }
            };
            let out = self.chain.get_utxo(&r)?;
            let (mut w, o) = self.solve(&out.predicate, &digest, body.locktime)?;
            w.chosen_ref = chosen;
            match (owner, o) {
                (Some(a), Some(b)) if a != b => return None,
                (None, Some(b)) => owner = Some(b),
                _ => {}
            }
            consumes.push(r);
            witness.push(w);
        }
        self.chain.check(body, &witness, &self.oracle).ok()?;
        Some(Ready {
            loc,
            witness,
            owner,
            candidate: Candidate {
                label: loc.to_string(),
                payee: self.t.payee(loc),
                reveals_own: owner.is_some(),
                consumes,
            },
        })
    }

    fn accept(&mut self, body: &TransactionBody, witness: &Witness) -> bool {
        match self.chain.submit(body, witness, &self.oracle) {
            Ok(_) => {
                for w in witness {
                    for p in w.preimages.values() {
                        self.public.insert(sha256(&p.0), p.0.clone());
                    }
                }
                if self.chain.utxo_total() != self.chain.minted_total() {
                    self.conservation_held = false;
                }
                true
            }
            Err(e) => {
                log::debug!("rejected at {}: {e:?}", self.height());
                false
            }
        }
    }

    fn submit_loc(&mut self, loc: BodyLoc, witness: &Witness) -> bool {
        let Some(body) = self.t.body(loc).cloned() else {
            return false;
        };
        self.accept(&body, witness)
    }

    /// Signs `body` with `p`'s key alone and submits it.
    fn submit_owned(
        &mut self,
        p: PartyId,
        body: TransactionBody,
        branch: Vec<u32>,
    ) -> Result<bool, HarnessError> {
        let digest = body.ntxid();
        let tag = self.oracle.sign(p, &self.keys[p], &digest)?;
        let w = InputWitness {
            branch,
            ..InputWitness::default()
        }
        .with_signatures([(self.keys[p], tag)]);
        Ok(self.accept(&body, &vec![w]))
    }

    /// View for deciding whether to publish `p`'s secret in kernel `id`.
    fn open_view(&self, p: PartyId, id: KernelId) -> Option<PhaseView> {
        let k = self.t.kernel(id)?;
        let side = if k.left_player == p {
            Side::Left
        } else {
            Side::Right
        };
        let other = match side {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        };
        let mine = self.private.get(&k.commit(side)).map(|(_, s)| *s);
        let opp_commit = k.commit(other);
        let opening = self
            .public
            .get(&opp_commit)
            .and_then(|b| <[u8; 32]>::try_from(b.as_slice()).ok())
            .map(|b| Secret(Hash256(b)));
        Some(PhaseView {
            context: MatchContext::Kernel(id),
            side: Some(side),
            opponent: Some(k.player(other)),
            my_secret: mine,
            opponent_commitment: Some(opp_commit),
            opponent_opening: opening,
            deadline: if side == Side::Left { k.t1 } else { k.t2 },
            ..self.view(p)
        })
    }

    fn act(&mut self, p: PartyId, strategy: &mut dyn Strategy) -> Result<bool, HarnessError> {
        let h = self.height();
        let mut progress = false;
        if self.hashlocked.is_some() {
            progress |= self.act_hashlocked(p, strategy)?;
        }
        if !self.scaffold_live() {
            return Ok(progress);
        }
        let ready = self.ready();
        let mut offered: Vec<&Ready> = Vec::new();
        for r in ready.iter() {
            match r.owner {
                None => offered.push(r),
                Some(q) if q == p => {
                    let BodyLoc::Kernel { id, .. } = r.loc else {
                        continue;
                    };
                    let Some(view) = self.open_view(p, id) else {
                        continue;
                    };
                    if let (OpenAction::Open(s), Some(mine)) =
                        (strategy.at_open(&view), view.my_secret)
                    {
                        if s == mine {
                            offered.push(r);
                        }
                    }
                }
                Some(_) => {}
            }
        }
        if offered.is_empty() {
            return Ok(progress);
        }
        let cands: Vec<Candidate> = offered.iter().map(|r| r.candidate.clone()).collect();
        let view = PhaseView {
            height: h,
            ..self.view(p)
        };
        for i in strategy.at_broadcast(&view, &cands) {
            if let Some(r) = offered.get(i) {
                progress |= self.submit_loc(r.loc, &r.witness);
            }
        }
        Ok(progress)
    }

    fn act_hashlocked(
        &mut self,
        p: PartyId,
        strategy: &mut dyn Strategy,
    ) -> Result<bool, HarnessError> {
        let h = self.height();
        let mut progress = false;
        let (posted, published, refund_time) = {
            let hl = self.hashlocked.as_ref().expect("hashlocked");
            (hl.posted[p], hl.published[p], hl.refund_time)
        };
        if !posted && h <= self.t_commit && strategy.at_deposit(&self.view(p)) {
            let body = self.t.deposit.bodies()[p].clone();
            if self.submit_owned(p, body, vec![])? {
                self.hashlocked.as_mut().expect("hashlocked").posted[p] = true;
                progress = true;
            }
        }
        if !published && strategy.at_mpc_reveal(&self.view(p)) {
            let hl = self.hashlocked.as_mut().expect("hashlocked");
            hl.published[p] = true;
            progress = true;
            if hl.published.iter().all(|x| *x) {
                let xhat = hl.mpc.xhat()?;
                hl.xhat_height = Some(h);
                self.public.insert(sha256(&xhat), xhat.to_vec());
            }
        }
        let leaf = self.t.deposit.leaf(p);
        if h >= refund_time
            && self.chain.get_utxo(&leaf).is_some()
            && strategy.at_withdraw(&self.view(p))
        {
            let body = refund_body(leaf, self.bet, self.keys[p], refund_time);
            if self.submit_owned(p, body, vec![1])? {
                self.hashlocked
                    .as_mut()
                    .expect("hashlocked")
                    .refund_heights
                    .push(h);
                progress = true;
            }
        }
        Ok(progress)
    }

    /// Value each player can spend alone.
    fn holdings(&self) -> Vec<Amount> {
        let owner: HashMap<PublicKey, PartyId> =
            self.keys.iter().enumerate().map(|(p, k)| (*k, p)).collect();
        let mut held = vec![0; self.n];
        for out in self.chain.utxo().values() {
            if let Predicate::KeySign { key } = &out.predicate {
                if let Some(&p) = owner.get(key) {
                    held[p] += out.value;
                }
            }
        }
        if let Some(hl) = &self.hashlocked {
            if hl.xhat_height.is_none() && self.height() >= hl.refund_time {
                for (p, v) in held.iter_mut().enumerate() {
                    if let Some(out) = self.chain.get_utxo(&self.t.deposit.leaf(p)) {
                        *v += out.value;
                    }
                }
            }
        }
        held
    }
}

/// Heights at which some locktime matures or some window opens or closes.
fn event_heights(t: &Tournament, extra: &[Height], end: Height) -> Vec<Height> {
    let mut hs: BTreeSet<Height> = extra.iter().copied().collect();
    hs.insert(0);
    for level in 0..t.level_count() {
        let s = t.schedule(level);
        for h in [
            s.t0,
            s.t0 + 1,
            s.t1.saturating_sub(1),
            s.t1,
            s.t1 + 1,
            s.t2.saturating_sub(1),
            s.t2,
            s.t2 + 1,
        ] {
            hs.insert(h);
        }
    }
    hs.insert(end);
    hs.into_iter().filter(|&h| h <= end).collect()
}

pub(super) fn run(
    cfg: &ScenarioConfig,
    mode: Mode,
    seed: u64,
) -> Result<(TrialResult, TrialArtifacts), HarnessError> {
    let n = cfg.n;
    let bet = cfg.bet;
    let t_commit = cfg.t_commit();
    let params = ChainParams::new(cfg.tau, 0, bet)?;
    let mut strategies = build_strategies(&cfg.strategy_by_player).map_err(ConfigError::from)?;
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|p| ChaCha8Rng::from_seed(player_seed(seed, p)))
        .collect();
    let keys: Vec<PublicKey> = (0..n).map(|p| PublicKey::derive(seed, p)).collect();
    let mut oracle = SignatureOracle::new();
    for (p, k) in keys.iter().enumerate() {
        oracle.register_key(p, *k);
    }
    let mut chain = SimChain::new(params);
    let mut coins = Vec::with_capacity(n);
    for k in &keys {
        coins.push((chain.mint(Predicate::key(*k), bet)?, bet));
        // the rest of the wallet, which the protocol must never touch
        chain.mint(Predicate::key(*k), bet * (n as Amount - 1))?;
    }
    let mut ledger = Ledger::new(n, bet);

    let hashlocked = cfg.deposit_option == DepositOption::Hashlocked;
    let mut mpc = IdealMpcOracle::new(n);
    if hashlocked {
        for (p, rng) in rngs.iter_mut().enumerate() {
            let mut x = [0u8; 32];
            rng.fill_bytes(&mut x);
            mpc.submit(p, x);
        }
    }

    let build_cfg = BuildConfig {
        n,
        mode,
        t_commit,
        params,
        master_keys: keys.clone(),
    };
    let (t, private) = {
        let mut seats = Seats {
            strategies: &mut strategies,
            rngs: &mut rngs,
            n,
            secrets: HashMap::new(),
            last_left: None,
        };
        let plan = if hashlocked {
            DepositPlan::Hashlocked {
                coins: &coins,
                mpc: &mpc,
            }
        } else {
            DepositPlan::Atomic { coins: &coins }
        };
        let t = build_tournament(&build_cfg, plan, &mut seats)?;
        (t, seats.secrets)
    };

    let outcome = signing_ceremony(&t, &mut oracle, &mut |p, stage| {
        let mut view = PhaseView {
            backend: BackendKind::Bitcoin,
            me: p,
            n,
            ..PhaseView::default()
        };
        match stage {
            SigningStage::Scaffold => {
                if strategies[p].needs_verification() {
                    view.scaffold_verified = verify_as_honest(&t, p).is_ok();
                }
                strategies[p].at_signing(&view)
            }
            SigningStage::Deposit => strategies[p].at_deposit(&view),
        }
    })?;
    let store = match outcome {
        CeremonyOutcome::AllSigned(store) => store,
        CeremonyOutcome::AbortedBy(p) => {
            log::debug!("ceremony aborted by {p}");
            let sim_holdings: Vec<Amount> = vec![bet * n as Amount; n];
            ledger.observe(&sim_holdings);
            let result = TrialResult {
                seed,
                per_player: ledger.outcomes(&sim_holdings, &vec![false; n]),
                committed: false,
                winner: None,
                final_height: None,
                abort_height: Some(0),
                on_chain_tx_count: 0,
                on_chain_bytes: 0,
                rounds_to_commit: 0,
            };
            let artifacts = TrialArtifacts::Bitcoin {
                chain,
                tournament: Some(Box::new(t)),
                conservation_held: true,
            };
            return Ok((result, artifacts));
        }
    };

    let mut ids = HashMap::new();
    let mut locs = HashMap::new();
    let mut spenders: HashMap<OutputRef, Vec<BodyLoc>> = HashMap::new();
    for (loc, body) in t.all_bodies() {
        let id = body.ntxid();
        ids.insert(loc, id);
        locs.insert(id, loc);
        if hashlocked && matches!(loc, BodyLoc::Deposit { .. }) {
            continue;
        }
        for input in &body.inputs {
            match input {
                InputSpec::Fixed(r) => spenders.entry(*r).or_default().push(loc),
                InputSpec::MultiInput(set) => {
                    for r in set {
                        spenders.entry(*r).or_default().push(loc);
                    }
                }
            }
        }
    }

    let refund_time = match &t.deposit {
        Deposit::Hashlocked { refund_time, .. } => Some(*refund_time),
        Deposit::Atomic { .. } => None,
    };
    let mut sim = Sim {
        n,
        bet,
        t_commit,
        chain,
        oracle,
        t,
        store,
        keys,
        ids,
        locs,
        spenders,
        public: HashMap::new(),
        private,
        hashlocked: refund_time.map(|refund_time| Hashlocked {
            refund_time,
            mpc,
            posted: vec![false; n],
            published: vec![false; n],
            xhat_height: None,
            refund_heights: Vec::new(),
        }),
        conservation_held: true,
        cache: None,
    };

    let end = sim.t.completion_bound() + span(mode, cfg.tau);
    let mut extra = vec![t_commit];
    if let Some(r) = refund_time {
        extra.extend([r, r + 1]);
    }
    for h in event_heights(&sim.t, &extra, end) {
        sim.chain.advance_to(h);
        loop {
            let mut progress = false;
            for (p, s) in strategies.iter_mut().enumerate() {
                progress |= sim.act(p, s.as_mut())?;
            }
            if !progress {
                break;
            }
        }
        ledger.observe(&sim.holdings());
    }

    let final_entry = sim.chain.log().iter().find(|e| {
        sim.locs
            .get(&e.ntxid)
            .is_some_and(|l| sim.t.is_final_payout(*l))
    });
    let committed = final_entry.is_some();
    let winner = final_entry.and_then(|e| sim.t.payee(sim.locs[&e.ntxid]));
    let final_height = final_entry.map(|e| e.height);
    let deposit_height = match &sim.t.deposit {
        Deposit::Atomic { body } => sim.chain.entry(&body.ntxid()).map(|e| e.height),
        Deposit::Hashlocked { .. } => sim.hashlocked.as_ref().and_then(|h| h.xhat_height),
    };
    let deposited: Vec<bool> = match &sim.hashlocked {
        Some(hl) => hl.posted.clone(),
        None => vec![deposit_height.is_some(); n],
    };
    let abort_height = if committed {
        None
    } else {
        Some(
            sim.hashlocked
                .as_ref()
                .and_then(|h| h.refund_heights.iter().max().copied())
                .unwrap_or(0),
        )
    };
    let transfers = sim
        .chain
        .log()
        .iter()
        .filter(|e| matches!(e.kind, EntryKind::Transfer));
    let on_chain_bytes = transfers
        .clone()
        .map(|e| e.body.size_with_witness(&e.witness, cfg.sig_model))
        .sum();
    let holdings = sim.holdings();
    let result = TrialResult {
        seed,
        per_player: ledger.outcomes(&holdings, &deposited),
        committed,
        winner,
        final_height,
        abort_height,
        on_chain_tx_count: transfers.count() as u64,
        on_chain_bytes,
        rounds_to_commit: deposit_height.or(refund_time).unwrap_or(0),
    };
    let Sim {
        chain,
        t,
        conservation_held,
        ..
    } = sim;
    Ok((
        result,
        TrialArtifacts::Bitcoin {
            chain,
            tournament: Some(Box::new(t)),
            conservation_held,
        },
    ))
}
