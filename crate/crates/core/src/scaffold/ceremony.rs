//! Off-chain signing of the scaffold.

use std::collections::HashMap;

use super::{Deposit, Tournament};
use crate::primitives::{Hash256, PartyId, PublicKey};
use crate::script::{OracleError, SigTag, SignatureOracle};

/// Signatures collected per body digest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SignatureStore {
    sigs: HashMap<Hash256, Vec<(PublicKey, SigTag)>>,
}

impl SignatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, digest: Hash256, key: PublicKey, tag: SigTag) {
        self.sigs.entry(digest).or_default().push((key, tag));
    }

    pub fn get(&self, digest: &Hash256) -> &[(PublicKey, SigTag)] {
        self.sigs.get(digest).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Total number of stored signatures.
    pub fn len(&self) -> usize {
        self.sigs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sigs.is_empty()
    }
}

/// What a player is asked to approve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigningStage {
    /// Every kernel and compression body.
    Scaffold,
    /// The atomic deposit, signed only after the whole scaffold.
    Deposit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CeremonyOutcome {
    AllSigned(SignatureStore),
    AbortedBy(PartyId),
}

/// Collects N-of-N signatures on every scaffold body, then on the atomic
/// deposit. `approve` is asked once per player per stage; a refusal stops the
/// ceremony before anything reaches the chain. Hashlocked deposits are signed
/// by their owners when broadcast, not here.
pub fn signing_ceremony(
    t: &Tournament,
    oracle: &mut SignatureOracle,
    approve: &mut dyn FnMut(PartyId, SigningStage) -> bool,
) -> Result<CeremonyOutcome, OracleError> {
    let mut store = SignatureStore::new();
    let digests: Vec<Hash256> = t.scaffold_bodies().iter().map(|(_, b)| b.ntxid()).collect();
    for p in 0..t.n {
        if !approve(p, SigningStage::Scaffold) {
            return Ok(CeremonyOutcome::AbortedBy(p));
        }
    }
    for (p, key) in t.master_keys.iter().enumerate() {
        for d in &digests {
            store.add(*d, *key, oracle.sign(p, key, d)?);
        }
    }
    if let Deposit::Atomic { body } = &t.deposit {
        let d = body.ntxid();
        for p in 0..t.n {
            if !approve(p, SigningStage::Deposit) {
                return Ok(CeremonyOutcome::AbortedBy(p));
            }
        }
        for (p, key) in t.master_keys.iter().enumerate() {
            store.add(d, *key, oracle.sign(p, key, &d)?);
        }
    }
    Ok(CeremonyOutcome::AllSigned(store))
}

#[cfg(test)]
mod tests {
    use super::super::tests::build;
    use super::super::Mode;
    use super::*;

    fn oracle_for(t: &Tournament) -> SignatureOracle {
        let mut o = SignatureOracle::new();
        for (p, k) in t.master_keys.iter().enumerate() {
            o.register_key(p, *k);
        }
        o
    }

    #[test]
    fn all_honest_four_players() {
        let t = build(4, Mode::Plain);
        let mut o = oracle_for(&t);
        match signing_ceremony(&t, &mut o, &mut |_, _| true).unwrap() {
            CeremonyOutcome::AllSigned(s) => assert_eq!(s.len(), 224),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(o.len(), 224);
    }

    #[test]
    fn refusal_aborts() {
        let t = build(4, Mode::Plain);
        let mut o = oracle_for(&t);
        let out = signing_ceremony(&t, &mut o, &mut |p, s| {
            !(p == 2 && s == SigningStage::Deposit)
        })
        .unwrap();
        assert_eq!(out, CeremonyOutcome::AbortedBy(2));
        // scaffold signed, deposit never signed, so the bets cannot move
        assert_eq!(o.len(), 220);
    }
}
