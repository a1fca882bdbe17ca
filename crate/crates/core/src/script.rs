//! Spending predicates and their evaluation.
//!
//! Instead of a byte-code interpreter, outputs are locked by a small semantic
//! predicate tree: N-of-N multisig, single-key signatures, hash locks,
//! absolute timelocks, a two-preimage parity test and `AllOf` / `AnyOf`
//! combinators. Signatures come from an ideal oracle that only records what
//! key owners actually signed.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chain::{OutputRef, TransactionBody};
use crate::primitives::{
    sha256, tagged_hash, Encoder, Hash256, Height, PartyId, PublicKey, SigModel, SIG_BYTES,
};

/// A spending condition attached to a transaction output.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Predicate {
    /// Every listed key must sign the spending transaction (N-of-N).
    AllSign {
        keys: Vec<PublicKey>,
    },
    /// The witness must carry a preimage of `digest` under `slot`.
    HashPreimage {
        digest: Hash256,
        slot: String,
    },
    /// Spendable only once the chain height reaches `height`.
    AfterHeight {
        height: Height,
    },
    /// Low bits of the two slot preimages must differ.
    #[serde(rename_all = "camelCase")]
    XorParityOdd {
        slot_a: String,
        slot_b: String,
    },
    AllOf {
        terms: Vec<Predicate>,
    },
    /// Exactly one branch, chosen by the witness, is evaluated.
    AnyOf {
        branches: Vec<Predicate>,
    },
    KeySign {
        key: PublicKey,
    },
}

/// Ill-formed predicate trees.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("slot `{0}` is bound more than once")]
    DuplicateSlot(String),
    #[error("parity slot `{0}` is not bound by a hash preimage in the same AllOf")]
    UnboundParitySlot(String),
    #[error("empty combinator")]
    Empty,
}

impl Predicate {
    pub fn all_sign(keys: &[PublicKey]) -> Self {
        Predicate::AllSign {
            keys: keys.to_vec(),
        }
    }

    pub fn hash_preimage(digest: Hash256, slot: &str) -> Self {
        Predicate::HashPreimage {
            digest,
            slot: slot.to_string(),
        }
    }

    pub fn after(height: Height) -> Self {
        Predicate::AfterHeight { height }
    }

    pub fn xor_parity_odd(a: &str, b: &str) -> Self {
        Predicate::XorParityOdd {
            slot_a: a.to_string(),
            slot_b: b.to_string(),
        }
    }

    pub fn all_of(terms: Vec<Predicate>) -> Self {
        Predicate::AllOf { terms }
    }

    pub fn any_of(branches: Vec<Predicate>) -> Self {
        Predicate::AnyOf { branches }
    }

    pub fn key(key: PublicKey) -> Self {
        Predicate::KeySign { key }
    }

    /// Checks slot uniqueness and that parity slots are bound next to them.
    pub fn validate(&self) -> Result<(), PredicateError> {
        let mut seen = HashSet::new();
        self.validate_inner(&mut seen, &[])
    }

    fn validate_inner<'a>(
        &'a self,
        seen: &mut HashSet<&'a str>,
        siblings: &[&'a str],
    ) -> Result<(), PredicateError> {
        match self {
            Predicate::HashPreimage { slot, .. } => {
                if !seen.insert(slot.as_str()) {
                    return Err(PredicateError::DuplicateSlot(slot.clone()));
                }
                Ok(())
            }
            Predicate::XorParityOdd { slot_a, slot_b } => {
                for s in [slot_a, slot_b] {
                    if !siblings.contains(&s.as_str()) {
                        return Err(PredicateError::UnboundParitySlot(s.clone()));
                    }
                }
                Ok(())
            }
            Predicate::AllOf { terms } => {
                if terms.is_empty() {
                    return Err(PredicateError::Empty);
                }
                let bound: Vec<&str> = terms
                    .iter()
                    .filter_map(|t| match t {
                        Predicate::HashPreimage { slot, .. } => Some(slot.as_str()),
                        _ => None,
                    })
                    .collect();
                for t in terms {
                    t.validate_inner(seen, &bound)?;
                }
                Ok(())
            }
            Predicate::AnyOf { branches } => {
                if branches.is_empty() {
                    return Err(PredicateError::Empty);
                }
                for b in branches {
                    b.validate_inner(seen, &[])?;
                }
                Ok(())
            }
            Predicate::AllSign { .. }
            | Predicate::AfterHeight { .. }
            | Predicate::KeySign { .. } => Ok(()),
        }
    }

    /// True if every way of satisfying this predicate needs all of `keys` to sign.
    pub fn requires_all_sign(&self, keys: &[PublicKey]) -> bool {
        match self {
            Predicate::AllSign { keys: k } => {
                let want: BTreeSet<_> = keys.iter().collect();
                let have: BTreeSet<_> = k.iter().collect();
                want.is_subset(&have)
            }
            Predicate::AllOf { terms } => terms.iter().any(|t| t.requires_all_sign(keys)),
            Predicate::AnyOf { branches } => branches.iter().all(|b| b.requires_all_sign(keys)),
            _ => false,
        }
    }

    pub fn encode(&self, e: &mut Encoder) {
        match self {
            Predicate::AllSign { keys } => {
                e.u8(0).len_prefix(keys.len());
                for k in keys {
                    e.hash(&k.0);
                }
            }
            Predicate::HashPreimage { digest, slot } => {
                e.u8(1).hash(digest).bytes(slot.as_bytes());
            }
            Predicate::AfterHeight { height } => {
                e.u8(2).u64(*height);
            }
            Predicate::XorParityOdd { slot_a, slot_b } => {
                e.u8(3).bytes(slot_a.as_bytes()).bytes(slot_b.as_bytes());
            }
            Predicate::AllOf { terms } => {
                e.u8(4).len_prefix(terms.len());
                for t in terms {
                    t.encode(e);
                }
            }
            Predicate::AnyOf { branches } => {
                e.u8(5).len_prefix(branches.len());
                for b in branches {
                    b.encode(e);
                }
            }
            Predicate::KeySign { key } => {
                e.u8(6).hash(&key.0);
            }
        }
    }

    /// Short tag for logs and DOT labels.
    pub fn kind(&self) -> &'static str {
        match self {
            Predicate::AllSign { .. } => "all-sign",
            Predicate::HashPreimage { .. } => "hash-preimage",
            Predicate::AfterHeight { .. } => "after-height",
            Predicate::XorParityOdd { .. } => "xor-parity-odd",
            Predicate::AllOf { .. } => "all-of",
            Predicate::AnyOf { .. } => "any-of",
            Predicate::KeySign { .. } => "key-sign",
        }
    }
}

/// Opaque signature produced by the oracle.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SigTag(pub Hash256);

impl fmt::Debug for SigTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig:{:?}", self.0)
    }
}

/// A witness byte string (hex in JSON).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Preimage(pub Vec<u8>);

impl fmt::Debug for Preimage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0))
    }
}

impl Serialize for Preimage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Preimage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s)
            .map(Preimage)
            .map_err(serde::de::Error::custom)
    }
}

impl Preimage {
    /// Low bit of the last byte; `None` for the empty string.
    pub fn parity(&self) -> Option<u8> {
        self.0.last().map(|b| b & 1)
    }
}

/// Witness material for one input.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InputWitness {
    pub signatures: Vec<(PublicKey, SigTag)>,
    pub preimages: BTreeMap<String, Preimage>,
    /// One selector per `AnyOf` met during evaluation, in evaluation order.
    pub branch: Vec<u32>,
    /// The spent output, required for multi-input spends.
    pub chosen_ref: Option<OutputRef>,
}

impl InputWitness {
    pub fn with_branch(mut self, b: u32) -> Self {
        self.branch.push(b);
        self
    }

    pub fn with_preimage(mut self, slot: &str, bytes: &[u8]) -> Self {
        self.preimages
            .insert(slot.to_string(), Preimage(bytes.to_vec()));
        self
    }

    pub fn with_signatures(mut self, sigs: impl IntoIterator<Item = (PublicKey, SigTag)>) -> Self {
        self.signatures.extend(sigs);
        self
    }

    pub fn with_chosen(mut self, r: OutputRef) -> Self {
        self.chosen_ref = Some(r);
        self
    }

    /// On-chain size of this witness under the given signature model.
    pub fn size_bytes(&self, model: SigModel) -> u64 {
        let sigs = match self.signatures.len() {
            0 => 0,
            1 => SIG_BYTES,
            n => model.authorization_bytes(n),
        };
        let pre: u64 = self.preimages.values().map(|p| 4 + p.0.len() as u64).sum();
        let chosen = if self.chosen_ref.is_some() { 36 } else { 0 };
        sigs + pre + 4 * self.branch.len() as u64 + chosen
    }
}

/// Per-input witnesses for a transaction.
pub type Witness = Vec<InputWitness>;

/// Data a predicate is evaluated against.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext<'a> {
    pub height: Height,
    pub sig_digest: Hash256,
    /// Locktime of the spending body. When present, a timelock branch also
    /// needs `locktime >= t`, so a body signed without a timelock can never
    /// take a timeout path (check-locktime-verify semantics).
    pub locktime: Option<Height>,
    /// `(S, chosen)` for multi-input spends.
    pub multi_input: Option<(&'a BTreeSet<OutputRef>, OutputRef)>,
}

/// Why evaluation returned false.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("malformed witness: {0}")]
    MalformedWitness(Malformed),
    #[error("unsatisfied: {0}")]
    Unsatisfied(Unsatisfied),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Malformed {
    #[error("missing signature for {0:?}")]
    MissingSignature(PublicKey),
    #[error("missing preimage for slot `{0}`")]
    MissingPreimage(String),
    #[error("missing branch selector")]
    MissingBranch,
    #[error("branch selector {0} out of range")]
    BranchOutOfRange(u32),
    #[error("unused branch selectors")]
    ExtraBranch,
    #[error("empty preimage for parity slot `{0}`")]
    EmptyPreimage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Unsatisfied {
    #[error("signature by {0:?} does not verify")]
    BadSignature(PublicKey),
    #[error("preimage for slot `{0}` does not match")]
    PreimageMismatch(String),
    #[error("height {height} below {needed}")]
    TooEarly { height: Height, needed: Height },
    #[error("parity xor is even")]
    ParityEven,
    #[error("chosen output is not in the multi-input set")]
    NotInSet,
}

/// Verifies signatures against a digest. The ideal oracle implements this; a real
/// scheme can be dropped in behind the same trait.
pub trait SignatureVerifier {
    fn verify(&self, key: &PublicKey, digest: &Hash256, tag: &SigTag) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("party {party} does not own key {key:?}")]
    NotKeyOwner { party: PartyId, key: PublicKey },
}

/// Ideal signature functionality: a signature verifies iff the key's owner asked
/// the oracle to sign that exact digest.
#[derive(Clone, Debug, Default)]
pub struct SignatureOracle {
    registry: HashSet<(PublicKey, Hash256)>,
    key_owners: HashMap<PublicKey, PartyId>,
}

impl SignatureOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_key(&mut self, party: PartyId, key: PublicKey) {
        self.key_owners.insert(key, party);
    }

    pub fn owner_of(&self, key: &PublicKey) -> Option<PartyId> {
        self.key_owners.get(key).copied()
    }

    fn tag(key: &PublicKey, digest: &Hash256) -> SigTag {
        SigTag(tagged_hash(b"lottery/sig", &[&key.0 .0, &digest.0]))
    }

    pub fn sign(
        &mut self,
        party: PartyId,
        key: &PublicKey,
        digest: &Hash256,
    ) -> Result<SigTag, OracleError> {
        if self.key_owners.get(key) != Some(&party) {
            return Err(OracleError::NotKeyOwner { party, key: *key });
        }
        self.registry.insert((*key, *digest));
        Ok(Self::tag(key, digest))
    }

    /// Number of distinct `(key, digest)` pairs ever signed.
    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }
}

impl SignatureVerifier for SignatureOracle {
    fn verify(&self, key: &PublicKey, digest: &Hash256, tag: &SigTag) -> bool {
        self.registry.contains(&(*key, *digest)) && *tag == Self::tag(key, digest)
    }
}

/// Message authorized by signatures on input `input_index`.
///
/// Fixed inputs sign the whole canonical body. A multi-input body carries the
/// set `S` in place of a concrete reference, so its digest commits to `S` and a
/// single signature covers spending any member of the set.
pub fn sig_digest_for(body: &TransactionBody, input_index: usize) -> Hash256 {
    debug_assert!(input_index < body.inputs.len().max(1));
    sha256(&body.canonical_bytes())
}

/// Evaluates `p` under witness `w`, returning the first reason for failure.
pub fn check(
    p: &Predicate,
    w: &InputWitness,
    ctx: &EvalContext<'_>,
    verifier: &dyn SignatureVerifier,
) -> Result<(), ScriptError> {
    if let Some((set, chosen)) = ctx.multi_input {
        if !set.contains(&chosen) {
            return Err(ScriptError::Unsatisfied(Unsatisfied::NotInSet));
        }
    }
    let mut cursor = 0usize;
    eval(p, w, ctx, verifier, &mut cursor)?;
    if cursor != w.branch.len() {
        return Err(ScriptError::MalformedWitness(Malformed::ExtraBranch));
    }
    Ok(())
}

/// Boolean form of [`check`].
pub fn evaluate(
    p: &Predicate,
    w: &InputWitness,
    ctx: &EvalContext<'_>,
    verifier: &dyn SignatureVerifier,
) -> bool {
    check(p, w, ctx, verifier).is_ok()
}

fn find_sig<'w>(w: &'w InputWitness, key: &PublicKey) -> Option<&'w SigTag> {
    w.signatures.iter().find(|(k, _)| k == key).map(|(_, t)| t)
}

fn check_sig(
    key: &PublicKey,
    w: &InputWitness,
    ctx: &EvalContext<'_>,
    verifier: &dyn SignatureVerifier,
) -> Result<(), ScriptError> {
    let tag = find_sig(w, key).ok_or(ScriptError::MalformedWitness(
        Malformed::MissingSignature(*key),
    ))?;
    if verifier.verify(key, &ctx.sig_digest, tag) {
        Ok(())
    } else {
        Err(ScriptError::Unsatisfied(Unsatisfied::BadSignature(*key)))
    }
}

fn preimage<'w>(w: &'w InputWitness, slot: &str) -> Result<&'w Preimage, ScriptError> {
    w.preimages
        .get(slot)
        .ok_or_else(|| ScriptError::MalformedWitness(Malformed::MissingPreimage(slot.to_string())))
}

fn eval(
    p: &Predicate,
    w: &InputWitness,
    ctx: &EvalContext<'_>,
    verifier: &dyn SignatureVerifier,
    cursor: &mut usize,
) -> Result<(), ScriptError> {
    match p {
        Predicate::AllSign { keys } => keys.iter().try_for_each(|k| check_sig(k, w, ctx, verifier)),
        Predicate::KeySign { key } => check_sig(key, w, ctx, verifier),
        Predicate::HashPreimage { digest, slot } => {
            let pre = preimage(w, slot)?;
            if sha256(&pre.0) == *digest {
                Ok(())
            } else {
                Err(ScriptError::Unsatisfied(Unsatisfied::PreimageMismatch(
                    slot.clone(),
                )))
            }
        }
        Predicate::AfterHeight { height } => {
            if ctx.height >= *height && ctx.locktime.map_or(true, |lt| lt >= *height) {
                Ok(())
            } else {
                Err(ScriptError::Unsatisfied(Unsatisfied::TooEarly {
                    height: ctx.height,
                    needed: *height,
                }))
            }
        }
        Predicate::XorParityOdd { slot_a, slot_b } => {
            let a = preimage(w, slot_a)?.parity().ok_or_else(|| {
                ScriptError::MalformedWitness(Malformed::EmptyPreimage(slot_a.clone()))
            })?;
            let b = preimage(w, slot_b)?.parity().ok_or_else(|| {
                ScriptError::MalformedWitness(Malformed::EmptyPreimage(slot_b.clone()))
            })?;
            if a ^ b == 1 {
                Ok(())
            } else {
                Err(ScriptError::Unsatisfied(Unsatisfied::ParityEven))
            }
        }
        Predicate::AllOf { terms } => terms
            .iter()
            .try_for_each(|t| eval(t, w, ctx, verifier, cursor)),
        Predicate::AnyOf { branches } => {
            let sel = *w
                .branch
                .get(*cursor)
                .ok_or(ScriptError::MalformedWitness(Malformed::MissingBranch))?;
            *cursor += 1;
            let chosen = branches
                .get(sel as usize)
                .ok_or(ScriptError::MalformedWitness(Malformed::BranchOutOfRange(
                    sel,
                )))?;
            eval(chosen, w, ctx, verifier, cursor)
        }
    }
}
