use std::collections::{BTreeSet, HashSet};

use lottery_core::chain::{ChainParams, InputSpec, OutputRef, SimChain, TransactionBody, TxOut};
use lottery_core::primitives::{Hash256, PublicKey};
use lottery_core::script::{InputWitness, Predicate, SignatureOracle, Witness};
use proptest::prelude::*;

const PARTIES: usize = 3;

#[derive(Clone, Debug)]
enum Op {
    Mint {
        owner: usize,
        value: u64,
    },
    Spend {
        picks: Vec<usize>,
        split: Vec<u64>,
        owner: usize,
        locktime: u64,
        skew: i64,
    },
    Advance(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..PARTIES, 1u64..50).prop_map(|(owner, value)| Op::Mint { owner, value }),
        (
            prop::collection::vec(0usize..64, 1..4),
            prop::collection::vec(1u64..10, 1..3),
            0..PARTIES,
            0u64..12,
            -1i64..2,
        )
            .prop_map(|(picks, split, owner, locktime, skew)| Op::Spend {
                picks,
                split,
                owner,
                locktime,
                skew
            }),
        (1u64..4).prop_map(Op::Advance),
    ]
}

struct World {
    chain: SimChain,
    oracle: SignatureOracle,
    keys: Vec<PublicKey>,
    /// Every output ever created, spent or not, so picks can hit spent ones.
    seen: Vec<(OutputRef, usize)>,
}

impl World {
    fn new() -> Self {
        let mut oracle = SignatureOracle::new();
        let keys: Vec<_> = (0..PARTIES).map(|p| PublicKey::derive(1, p)).collect();
        for (p, k) in keys.iter().enumerate() {
            oracle.register_key(p, *k);
        }
        World {
            chain: SimChain::new(ChainParams::default()),
            oracle,
            keys,
            seen: Vec::new(),
        }
    }

    fn apply(&mut self, op: &Op) -> Option<Hash256> {
        match op {
            Op::Mint { owner, value } => {
                let r = self
                    .chain
                    .mint(Predicate::key(self.keys[*owner]), *value)
                    .unwrap();
                self.seen.push((r, *owner));
                Some(r.txid)
            }
            Op::Advance(k) => {
                self.chain.advance(*k).unwrap();
                None
            }
            Op::Spend {
                picks,
                split,
                owner,
                locktime,
                skew,
            } => {
                if self.seen.is_empty() {
                    return None;
                }
                let chosen: Vec<(OutputRef, usize)> = picks
                    .iter()
                    .map(|i| self.seen[i % self.seen.len()])
                    .collect();
                let input_value: u64 = chosen
                    .iter()
                    .map(|(r, _)| self.chain.get_utxo(r).map_or(1, |o| o.value))
                    .sum();
                // spread the input value over the outputs, then perturb the total
                let parts = split.len() as u64;
                let mut values: Vec<u64> = split.iter().map(|_| input_value / parts).collect();
                values[0] += input_value % parts;
                values[0] = (values[0] as i64 + skew).max(1) as u64;
                let body = TransactionBody {
                    inputs: chosen.iter().map(|(r, _)| InputSpec::Fixed(*r)).collect(),
                    outputs: values
                        .iter()
                        .map(|v| TxOut {
                            value: *v,
                            predicate: Predicate::key(self.keys[*owner]),
                        })
                        .collect(),
                    locktime: *locktime,
                };
                let digest = body.ntxid();
                let witness: Witness = chosen
                    .iter()
                    .map(|(_, o)| {
                        let tag = self.oracle.sign(*o, &self.keys[*o], &digest).unwrap();
                        InputWitness::default().with_signatures([(self.keys[*o], tag)])
                    })
                    .collect();
                let id = self.chain.submit(&body, &witness, &self.oracle).ok()?;
                for i in 0..body.outputs.len() {
                    self.seen.push((OutputRef::new(id, i as u32), *owner));
                }
                Some(id)
            }
        }
    }
}

fn consumed_refs(chain: &SimChain) -> Vec<OutputRef> {
    chain.log().iter().flat_map(|e| e.consumed()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn no_double_spends_and_value_is_conserved(ops in prop::collection::vec(op(), 1..60)) {
        let mut w = World::new();
        for op in &ops {
            w.apply(op);
            prop_assert_eq!(w.chain.utxo_total(), w.chain.minted_total());
            let refs = consumed_refs(&w.chain);
            let unique: HashSet<_> = refs.iter().collect();
            prop_assert_eq!(unique.len(), refs.len());
            for r in &refs {
                prop_assert!(w.chain.get_utxo(r).is_none());
            }
        }
    }

    #[test]
    fn replay_is_deterministic(ops in prop::collection::vec(op(), 1..40)) {
        let mut a = World::new();
        let mut b = World::new();
        for op in &ops {
            prop_assert_eq!(a.apply(op), b.apply(op));
        }
        let ids_a: Vec<_> = a.chain.log().iter().map(|e| (e.ntxid, e.height)).collect();
        let ids_b: Vec<_> = b.chain.log().iter().map(|e| (e.ntxid, e.height)).collect();
        prop_assert_eq!(ids_a, ids_b);
        prop_assert_eq!(a.chain.utxo(), b.chain.utxo());
    }

    #[test]
    fn ntxid_ignores_the_witness(value in 1u64..1000, locktime in 0u64..5, extra in any::<[u8; 32]>()) {
        let mut w = World::new();
        let coin = w.chain.mint(Predicate::key(w.keys[0]), value).unwrap();
        w.chain.advance(5).unwrap();
        let body = TransactionBody {
            inputs: vec![InputSpec::Fixed(coin)],
            outputs: vec![TxOut { value, predicate: Predicate::key(w.keys[1]) }],
            locktime,
        };
        let digest = body.ntxid();
        let tag = w.oracle.sign(0, &w.keys[0], &digest).unwrap();
        let plain = vec![InputWitness::default().with_signatures([(w.keys[0], tag)])];
        let padded = vec![plain[0].clone().with_preimage("unused", &extra)];
        let mut other = World::new();
        other.chain.mint(Predicate::key(other.keys[0]), value).unwrap();
        other.chain.advance(5).unwrap();
        let id_plain = w.chain.check(&body, &plain, &w.oracle).unwrap();
        let id_padded = other.chain.check(&body, &padded, &w.oracle).unwrap();
        prop_assert_eq!(id_plain, digest);
        prop_assert_eq!(id_padded, digest);
        prop_assert_eq!(w.chain.submit(&body, &plain, &w.oracle).unwrap(), digest);
    }
}

/// Every set of up to four outputs, every choice inside it and one outside it.
#[test]
fn multi_input_exhaustive_small_sets() {
    for size in 1..=4usize {
        for chosen in 0..=size {
            let mut w = World::new();
            let members: Vec<OutputRef> = (0..size)
                .map(|_| w.chain.mint(Predicate::key(w.keys[0]), 5).unwrap())
                .collect();
            let outsider = w.chain.mint(Predicate::key(w.keys[0]), 5).unwrap();
            let set: BTreeSet<OutputRef> = members.iter().copied().collect();
            let body = TransactionBody {
                inputs: vec![InputSpec::MultiInput(set)],
                outputs: vec![TxOut {
                    value: 5,
                    predicate: Predicate::key(w.keys[1]),
                }],
                locktime: 0,
            };
            // one signature, made before the choice is known
            let tag = w.oracle.sign(0, &w.keys[0], &body.ntxid()).unwrap();
            let pick = if chosen < size {
                members[chosen]
            } else {
                outsider
            };
            let witness = vec![InputWitness::default()
                .with_signatures([(w.keys[0], tag)])
                .with_chosen(pick)];
            let accepted = w.chain.submit(&body, &witness, &w.oracle).is_ok();
            assert_eq!(accepted, chosen < size, "size {size} choice {chosen}");
            if accepted {
                assert!(w.chain.is_spent(&pick));
                // the same body cannot fire twice, whichever member it names
                for other in &members {
                    let again = vec![InputWitness::default()
                        .with_signatures([(w.keys[0], tag)])
                        .with_chosen(*other)];
                    assert!(w.chain.submit(&body, &again, &w.oracle).is_err());
                }
                assert_eq!(w.chain.utxo_total(), w.chain.minted_total());
            }
            let missing = vec![InputWitness::default().with_signatures([(w.keys[0], tag)])];
            assert!(w.chain.check(&body, &missing, &w.oracle).is_err());
        }
    }
}
