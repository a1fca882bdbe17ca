//! One match played out on chain under every pair of simple behaviours.

use lottery_core::chain::{ChainParams, OutputRef, SimChain, TransactionBody};
use lottery_core::primitives::{Hash256, PartyId, PublicKey, Secret};
use lottery_core::scaffold::{
    make_kernel, schedule, Kernel, KernelId, KernelSpec, Mode, LEFT_SLOT, RIGHT_SLOT, TX_A, TX_B,
    TX_B_PRIME,
};
use lottery_core::script::{InputWitness, Predicate, SignatureOracle, Witness};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Play {
    Honest,
    Abort,
    /// Opens, but only after the window has closed.
    Late,
}

const PLAYS: [Play; 3] = [Play::Honest, Play::Abort, Play::Late];

fn secret(parity: u8) -> Secret {
    let mut b = [7u8; 32];
    b[31] = 0x40 | parity;
    Secret(Hash256(b))
}

struct Table {
    chain: SimChain,
    oracle: SignatureOracle,
    keys: Vec<PublicKey>,
    kernel: Kernel,
    secrets: [Secret; 2],
}

impl Table {
    fn new(left_parity: u8, right_parity: u8) -> Self {
        let keys: Vec<_> = (0..2).map(|p| PublicKey::derive(9, p)).collect();
        let mut oracle = SignatureOracle::new();
        for (p, k) in keys.iter().enumerate() {
            oracle.register_key(p, *k);
        }
        let mut chain = SimChain::new(ChainParams::default());
        let a = chain.mint(Predicate::all_sign(&keys), 1).unwrap();
        let b = chain.mint(Predicate::all_sign(&keys), 1).unwrap();
        let secrets = [secret(left_parity), secret(right_parity)];
        let kernel = make_kernel(&KernelSpec {
            id: KernelId::new(0, 0, 0),
            players: (0, 1),
            commits: (secrets[0].commitment(), secrets[1].commitment()),
            inputs: (a, b),
            schedule: schedule(Mode::Plain, 6, 6, 0),
            stake: 1,
            master: &keys,
            pay_winner: true,
        });
        Table {
            chain,
            oracle,
            keys,
            kernel,
            secrets,
        }
    }

    fn signed(
        &mut self,
        body: &TransactionBody,
        branch: Option<u32>,
        left: bool,
        right: bool,
    ) -> Witness {
        let digest = body.ntxid();
        let sigs: Vec<_> = (0..2)
            .map(|p| {
                (
                    self.keys[p],
                    self.oracle.sign(p, &self.keys[p], &digest).unwrap(),
                )
            })
            .collect();
        let mut w = InputWitness::default().with_signatures(sigs.clone());
        if let Some(b) = branch {
            w = w.with_branch(b);
        }
        if left {
            w = w.with_preimage(LEFT_SLOT, self.secrets[0].bytes());
        }
        if right {
            w = w.with_preimage(RIGHT_SLOT, self.secrets[1].bytes());
        }
        let n = body.inputs.len();
        let mut out = vec![w];
        for _ in 1..n {
            out.push(InputWitness::default().with_signatures(sigs.clone()));
        }
        out
    }

    fn try_submit(
        &mut self,
        body: TransactionBody,
        branch: Option<u32>,
        left: bool,
        right: bool,
    ) -> bool {
        let w = self.signed(&body, branch, left, right);
        self.chain.submit(&body, &w, &self.oracle).is_ok()
    }

    fn entry(&mut self) -> bool {
        let b = self.kernel.entry.clone();
        self.try_submit(b, None, false, false)
    }
    fn reveal(&mut self) -> bool {
        let b = self.kernel.reveal.clone();
        self.try_submit(b, Some(0), true, false)
    }
    fn outcome(&mut self, tx: usize) -> bool {
        let b = self.kernel.outcomes[tx].clone();
        match tx {
            TX_A => self.try_submit(b, Some(0), false, false),
            TX_B => self.try_submit(b, Some(1), false, false),
            _ => self.try_submit(b, Some(1), true, true),
        }
    }

    fn outcomes_on_chain(&self) -> Vec<usize> {
        (0..3)
            .filter(|&t| self.chain.contains(&self.kernel.outcomes[t].ntxid()))
            .collect()
    }

    fn winner(&self) -> Option<PartyId> {
        let ids: Vec<PartyId> = self
            .outcomes_on_chain()
            .into_iter()
            .map(|t| self.kernel.winner(t))
            .collect();
        assert!(ids.len() <= 1, "more than one outcome on chain");
        ids.first().copied()
    }
}

/// Left opens in its window or right takes the pot; after that, right wins
/// only by opening in its window with odd combined parity.
fn prose_winner(left: Play, right: Play, odd: bool) -> PartyId {
    if left != Play::Honest {
        return 1;
    }
    if right == Play::Honest && odd {
        1
    } else {
        0
    }
}

fn play(left: Play, right: Play, lp: u8, rp: u8) -> Table {
    let mut t = Table::new(lp, rp);
    let k = t.kernel.clone();
    let odd = (lp ^ rp) == 1;
    t.chain.advance_to(k.t0);
    assert!(t.entry());
    t.chain.advance_to(k.t0 + 1);
    if left == Play::Honest {
        assert!(t.reveal());
    }
    t.chain.advance_to(k.t1 - 1);
    if right == Play::Honest && odd && t.chain.contains(&k.reveal.ntxid()) {
        assert!(t.outcome(TX_B_PRIME));
    }
    t.chain.advance_to(k.t1);
    // whoever is owed the timeout claims it
    t.outcome(TX_B);
    t.chain.advance_to(k.t1 + 1);
    if left == Play::Late {
        t.reveal();
    }
    t.chain.advance_to(k.t2);
    t.outcome(TX_A);
    t.chain.advance_to(k.t2 + 1);
    if right == Play::Late {
        t.outcome(TX_B_PRIME);
    }
    // late attempts at every body change nothing
    for tx in 0..3 {
        t.outcome(tx);
    }
    t.reveal();
    t
}

#[test]
fn every_behaviour_pair_reaches_the_prose_winner() {
    for left in PLAYS {
        for right in PLAYS {
            for (lp, rp) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let t = play(left, right, lp, rp);
                let expected = prose_winner(left, right, lp ^ rp == 1);
                assert_eq!(
                    t.winner(),
                    Some(expected),
                    "{left:?}/{right:?} parities {lp}{rp}"
                );
                assert_eq!(t.outcomes_on_chain().len(), 1);
                assert_eq!(t.chain.utxo_total(), t.chain.minted_total());
                let paid = t.kernel.outcomes[t.outcomes_on_chain()[0]].output_ref(0);
                assert_eq!(
                    t.chain.get_utxo(&paid).map(|o| o.predicate.clone()),
                    Some(Predicate::key(t.keys[expected]))
                );
            }
        }
    }
}

#[test]
fn right_cannot_claim_with_even_parity() {
    let mut t = Table::new(1, 1);
    let k = t.kernel.clone();
    t.chain.advance_to(k.t0);
    assert!(t.entry());
    assert!(t.reveal());
    assert!(!t.outcome(TX_B_PRIME));
    assert!(!t.outcome(TX_A), "left must wait for the deadline");
    t.chain.advance_to(k.t2);
    assert!(t.outcome(TX_A));
}

#[test]
fn timeout_claim_needs_both_height_and_locktime() {
    let mut t = Table::new(0, 1);
    let k = t.kernel.clone();
    t.chain.advance_to(k.t0);
    assert!(t.entry());
    t.chain.advance_to(k.t1 - 1);
    assert!(!t.outcome(TX_B));
    t.chain.advance_to(k.t1);
    assert!(t.outcome(TX_B));
    assert!(!t.reveal(), "entry output already spent");
    let unused: OutputRef = k.reveal.output_ref(0);
    assert!(t.chain.get_utxo(&unused).is_none());
}
