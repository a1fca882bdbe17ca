//! The two ways of moving the players' bets into the tournament leaves.
//!
//! Option 1 is a single N-input atomic transaction signed only after the whole
//! scaffold. Option 2 has every player deposit separately into an output that
//! is either spent by the scaffold (which needs the preimage of a jointly
//! generated hash) or refunded to its owner after a timeout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScaffoldError;
use crate::chain::{InputSpec, OutputRef, TransactionBody, TxOut};
use crate::primitives::{sha256, Amount, Hash256, Height, PartyId, PublicKey};
use crate::script::Predicate;

/// Witness slot for the joint secret `x̂`.
pub const XHAT_SLOT: &str = "xhat";

/// How the bets enter the scaffold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "option", rename_all = "camelCase")]
pub enum Deposit {
    Atomic {
        body: TransactionBody,
    },
    #[serde(rename_all = "camelCase")]
    Hashlocked {
        bodies: Vec<TransactionBody>,
        xhat_digest: Hash256,
        refund_time: Height,
    },
}

impl Deposit {
    /// Output that funds player `p`'s first-round seat.
    pub fn leaf(&self, p: PartyId) -> OutputRef {
        match self {
            Deposit::Atomic { body } => OutputRef::new(body.ntxid(), p as u32),
            Deposit::Hashlocked { bodies, .. } => OutputRef::new(bodies[p].ntxid(), 0),
        }
    }

    pub fn leaves(&self, n: usize) -> Vec<OutputRef> {
        match self {
            Deposit::Atomic { body } => {
                let id = body.ntxid();
                (0..n as u32).map(|i| OutputRef::new(id, i)).collect()
            }
            Deposit::Hashlocked { bodies, .. } => bodies
                .iter()
                .map(|b| OutputRef::new(b.ntxid(), 0))
                .collect(),
        }
    }

    pub fn bodies(&self) -> Vec<&TransactionBody> {
        match self {
            Deposit::Atomic { body } => vec![body],
            Deposit::Hashlocked { bodies, .. } => bodies.iter().collect(),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Deposit::Atomic { .. } => 1,
            Deposit::Hashlocked { bodies, .. } => bodies.len(),
        }
    }

    pub fn option(&self) -> DepositOption {
        match self {
            Deposit::Atomic { .. } => DepositOption::Atomic,
            Deposit::Hashlocked { .. } => DepositOption::Hashlocked,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DepositOption {
    #[default]
    Atomic,
    Hashlocked,
}

/// Stand-in for the secure computation of `X̂ = hash(x1 ⊕ … ⊕ xN)`.
///
/// Each player hands in `x_i`; the oracle publishes only the digest. The
/// preimage becomes computable once every `x_i` has been published.
#[derive(Clone, Debug, Default)]
pub struct IdealMpcOracle {
    n: usize,
    inputs: BTreeMap<PartyId, [u8; 32]>,
}

impl IdealMpcOracle {
    pub fn new(n: usize) -> Self {
        IdealMpcOracle {
            n,
            inputs: BTreeMap::new(),
        }
    }

    pub fn submit(&mut self, party: PartyId, x: [u8; 32]) {
        self.inputs.insert(party, x);
    }

    pub fn is_complete(&self) -> bool {
        (0..self.n).all(|p| self.inputs.contains_key(&p))
    }

    /// `x1 ⊕ … ⊕ xN` from the collected inputs.
    pub fn xhat(&self) -> Result<[u8; 32], ScaffoldError> {
        if !self.is_complete() {
            return Err(ScaffoldError::MpcIncomplete {
                missing: (0..self.n)
                    .filter(|p| !self.inputs.contains_key(p))
                    .collect(),
            });
        }
        Ok(xor_all(self.inputs.values()))
    }

    pub fn xhat_digest(&self) -> Result<Hash256, ScaffoldError> {
        self.xhat().map(|x| sha256(&x))
    }
}

/// XOR of 32-byte strings.
pub fn xor_all<'a>(xs: impl IntoIterator<Item = &'a [u8; 32]>) -> [u8; 32] {
    let mut out = [0u8; 32];
    for x in xs {
        for (o, b) in out.iter_mut().zip(x) {
            *o ^= b;
        }
    }
    out
}

/// Option 1: one body spending every player's coin into N master-key leaves.
pub fn build_deposit_atomic(
    coins: &[(OutputRef, Amount)],
    bet: Amount,
    master: &[PublicKey],
) -> Result<TransactionBody, ScaffoldError> {
    for &(_, v) in coins {
        if v != bet {
            return Err(ScaffoldError::ValueMismatch {
                expected: bet,
                found: v,
            });
        }
    }
    Ok(TransactionBody {
        inputs: coins.iter().map(|(r, _)| InputSpec::Fixed(*r)).collect(),
        outputs: (0..coins.len())
            .map(|_| TxOut {
                value: bet,
                predicate: Predicate::all_sign(master),
            })
            .collect(),
        locktime: 0,
    })
}

/// Option 2 deposit output: scaffold path with `x̂`, or owner refund after `refund_time`.
pub fn hashlocked_predicate(
    master: &[PublicKey],
    xhat_digest: Hash256,
    refund_time: Height,
    owner: PublicKey,
) -> Predicate {
    Predicate::any_of(vec![
        Predicate::all_of(vec![
            Predicate::all_sign(master),
            Predicate::hash_preimage(xhat_digest, XHAT_SLOT),
        ]),
        Predicate::all_of(vec![Predicate::after(refund_time), Predicate::key(owner)]),
    ])
}

/// Option 2: one body per player, all locked to the same `X̂`.
pub fn build_deposit_hashlocked(
    coins: &[(OutputRef, Amount)],
    bet: Amount,
    master: &[PublicKey],
    mpc: &IdealMpcOracle,
    refund_time: Height,
) -> Result<(Vec<TransactionBody>, Hash256), ScaffoldError> {
    let digest = mpc.xhat_digest()?;
    let mut bodies = Vec::with_capacity(coins.len());
    for (p, &(r, v)) in coins.iter().enumerate() {
        if v != bet {
            return Err(ScaffoldError::ValueMismatch {
                expected: bet,
                found: v,
            });
        }
        bodies.push(TransactionBody {
            inputs: vec![InputSpec::Fixed(r)],
            outputs: vec![TxOut {
                value: bet,
                predicate: hashlocked_predicate(master, digest, refund_time, master[p]),
            }],
            locktime: 0,
        });
    }
    Ok((bodies, digest))
}

/// Owner-signed refund of a hashlocked deposit, valid from `refund_time`.
pub fn refund_body(
    deposit: OutputRef,
    value: Amount,
    owner: PublicKey,
    refund_time: Height,
) -> TransactionBody {
    TransactionBody {
        inputs: vec![InputSpec::Fixed(deposit)],
        outputs: vec![TxOut {
            value,
            predicate: Predicate::key(owner),
        }],
        locktime: refund_time,
    }
}
