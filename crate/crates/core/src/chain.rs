//! A deterministic simulated UTXO chain.
//!
//! Transactions are identified by their NTXID, a digest over the body alone, so
//! a scaffold of unsigned bodies can reference each other before any witness
//! exists. Submission is atomic at the current height: there is no mempool and
//! no reorg; confirmation depth is modelled through locktimes instead.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::primitives::{sha256, tagged_hash, Amount, Encoder, Hash256, Height, SigModel};
use crate::script::{self, EvalContext, Predicate, ScriptError, SignatureVerifier, Witness};

/// Chain-wide constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainParams {
    /// Confirmation parameter τ, in blocks.
    pub tau: u64,
    pub genesis_height: Height,
    /// Value of one bet.
    pub bet_value: Amount,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            tau: 6,
            genesis_height: 0,
            bet_value: 1,
        }
    }
}

impl ChainParams {
    pub fn new(tau: u64, genesis_height: Height, bet_value: Amount) -> Result<Self, ChainError> {
        let p = ChainParams {
            tau,
            genesis_height,
            bet_value,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.tau == 0 {
            return Err(ChainError::InvalidParams("tau must be at least 1"));
        }
        if self.bet_value == 0 {
            return Err(ChainError::InvalidParams("bet value must be positive"));
        }
        Ok(())
    }
}

/// Reference to output `index` of transaction `txid`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutputRef {
    pub txid: Hash256,
    pub index: u32,
}

impl OutputRef {
    pub fn new(txid: Hash256, index: u32) -> Self {
        OutputRef { txid, index }
    }

    fn encode(&self, e: &mut Encoder) {
        e.hash(&self.txid).u32(self.index);
    }
}

/// How an input names the output it spends.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InputSpec {
    Fixed(OutputRef),
    /// Any one member of the set; the witness names which.
    MultiInput(BTreeSet<OutputRef>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxOut {
    pub value: Amount,
    pub predicate: Predicate,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransactionBody {
    pub inputs: Vec<InputSpec>,
    pub outputs: Vec<TxOut>,
    /// Earliest height at which the body may be accepted (0 = none).
    pub locktime: Height,
}

impl TransactionBody {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.len_prefix(self.inputs.len());
        for input in &self.inputs {
            match input {
                InputSpec::Fixed(r) => {
                    e.u8(0);
                    r.encode(&mut e);
                }
                InputSpec::MultiInput(set) => {
                    e.u8(1).len_prefix(set.len());
                    for r in set {
                        r.encode(&mut e);
                    }
                }
            }
        }
        e.len_prefix(self.outputs.len());
        for out in &self.outputs {
            e.u64(out.value);
            out.predicate.encode(&mut e);
        }
        e.u64(self.locktime);
        e.finish()
    }

    /// Witness-independent transaction id.
    pub fn ntxid(&self) -> Hash256 {
        compute_ntxid(self)
    }

    pub fn output_total(&self) -> u128 {
        self.outputs.iter().map(|o| o.value as u128).sum()
    }

    pub fn output_ref(&self, index: u32) -> OutputRef {
        OutputRef::new(self.ntxid(), index)
    }

    /// Serialized size on chain, counting witness bytes under `model`.
    pub fn size_with_witness(&self, witness: &Witness, model: SigModel) -> u64 {
        self.canonical_bytes().len() as u64
            + witness.iter().map(|w| w.size_bytes(model)).sum::<u64>()
    }
}

/// Digest over the canonical body; the witness cannot influence it.
pub fn compute_ntxid(body: &TransactionBody) -> Hash256 {
    sha256(&body.canonical_bytes())
}

/// Reasons `submit` refuses a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("output {0:?} already spent")]
    DoubleSpend(OutputRef),
    #[error("locktime {locktime} not reached at height {height}")]
    Locktime { locktime: Height, height: Height },
    #[error("input {input}: {error}")]
    ScriptFail { input: usize, error: ScriptError },
    #[error("unknown output {0:?}")]
    MissingInput(OutputRef),
    #[error("inputs carry {inputs}, outputs carry {outputs}")]
    ValueMismatch { inputs: u128, outputs: u128 },
    #[error("input {input}: chosen output is not in the multi-input set")]
    BadMultiInput { input: usize },
    #[error("malformed transaction: {0}")]
    Malformed(&'static str),
    /// A body with this NTXID is already in the log; a multi-input body would
    /// otherwise fire once per member of its set.
    #[error("transaction {0:?} already accepted")]
    AlreadyAccepted(Hash256),
}

impl Rejection {
    /// Stable short name, e.g. for CSV output and logs.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::DoubleSpend(_) => "DoubleSpend",
            Rejection::Locktime { .. } => "Locktime",
            Rejection::ScriptFail { .. } => "ScriptFail",
            Rejection::MissingInput(_) => "MissingInput",
            Rejection::ValueMismatch { .. } => "ValueMismatch",
            Rejection::BadMultiInput { .. } => "BadMultiInput",
            Rejection::Malformed(_) => "Malformed",
            Rejection::AlreadyAccepted(_) => "AlreadyAccepted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("invalid chain parameters: {0}")]
    InvalidParams(&'static str),
    #[error("minted value must be positive")]
    ZeroValue,
    #[error("advance requires at least one block")]
    ZeroAdvance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum EntryKind {
    /// Faucet output standing in for pre-existing coins.
    Mint {
        seq: u64,
    },
    Transfer,
}

/// One accepted transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub ntxid: Hash256,
    pub kind: EntryKind,
    pub body: TransactionBody,
    pub witness: Witness,
    pub height: Height,
}

impl LogEntry {
    /// Recomputes the id from the body (and mint sequence) alone.
    pub fn recompute_id(&self) -> Hash256 {
        match self.kind {
            EntryKind::Mint { seq } => mint_id(seq, &self.body),
            EntryKind::Transfer => self.body.ntxid(),
        }
    }

    /// Refs consumed by this entry, resolving multi-input choices.
    pub fn consumed(&self) -> Vec<OutputRef> {
        self.body
            .inputs
            .iter()
            .zip(self.witness.iter())
            .filter_map(|(spec, w)| match spec {
                InputSpec::Fixed(r) => Some(*r),
                InputSpec::MultiInput(_) => w.chosen_ref,
            })
            .collect()
    }

    /// One JSON object per entry: `{ntxid, height, inputs, outputs, witnessSummary}`.
    pub fn summary_json(&self) -> serde_json::Value {
        let witness: Vec<_> = self
            .witness
            .iter()
            .map(|w| {
                json!({
                    "signatures": w.signatures.len(),
                    "preimageSlots": w.preimages.keys().collect::<Vec<_>>(),
                    "branch": w.branch,
                    "chosenRef": w.chosen_ref,
                })
            })
            .collect();
        json!({
            "ntxid": self.ntxid.to_hex(),
            "height": self.height,
            "kind": self.kind,
            "inputs": self.body.inputs,
            "outputs": self.body.outputs,
            "locktime": self.body.locktime,
            "witnessSummary": witness,
        })
    }
}

fn mint_id(seq: u64, body: &TransactionBody) -> Hash256 {
    tagged_hash(
        b"lottery/mint",
        &[&seq.to_le_bytes(), &body.canonical_bytes()],
    )
}

/// Full chain state: clock, UTXO set and append-only log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimChain {
    params: ChainParams,
    height: Height,
    utxo: BTreeMap<OutputRef, TxOut>,
    spent: HashMap<OutputRef, Hash256>,
    log: Vec<LogEntry>,
    index: HashMap<Hash256, usize>,
    minted_total: u128,
    mint_seq: u64,
}

impl SimChain {
    pub fn new(params: ChainParams) -> Self {
        SimChain {
            params,
            height: params.genesis_height,
            utxo: BTreeMap::new(),
            spent: HashMap::new(),
            log: Vec::new(),
            index: HashMap::new(),
            minted_total: 0,
            mint_seq: 0,
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn height(&self) -> Height {
        self.height
    }

    pub fn minted_total(&self) -> u128 {
        self.minted_total
    }

    pub fn utxo(&self) -> &BTreeMap<OutputRef, TxOut> {
        &self.utxo
    }

    pub fn utxo_total(&self) -> u128 {
        self.utxo.values().map(|o| o.value as u128).sum()
    }

    pub fn get_utxo(&self, r: &OutputRef) -> Option<&TxOut> {
        self.utxo.get(r)
    }

    pub fn is_spent(&self, r: &OutputRef) -> bool {
        self.spent.contains_key(r)
    }

    /// NTXID of the transaction that spent `r`, if any.
    pub fn spender_of(&self, r: &OutputRef) -> Option<Hash256> {
        self.spent.get(r).copied()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn entry(&self, ntxid: &Hash256) -> Option<&LogEntry> {
        self.index.get(ntxid).map(|&i| &self.log[i])
    }

    pub fn contains(&self, ntxid: &Hash256) -> bool {
        self.index.contains_key(ntxid)
    }

    /// Number of accepted non-mint transactions.
    pub fn transfer_count(&self) -> usize {
        self.log
            .iter()
            .filter(|e| e.kind == EntryKind::Transfer)
            .count()
    }

    /// Test faucet: creates a fresh unspent output.
    pub fn mint(&mut self, predicate: Predicate, value: Amount) -> Result<OutputRef, ChainError> {
        if value == 0 {
            return Err(ChainError::ZeroValue);
        }
        let body = TransactionBody {
            inputs: vec![],
            outputs: vec![TxOut { value, predicate }],
            locktime: 0,
        };
        let seq = self.mint_seq;
        self.mint_seq += 1;
        let id = mint_id(seq, &body);
        let r = OutputRef::new(id, 0);
        self.utxo.insert(r, body.outputs[0].clone());
        self.minted_total += value as u128;
        self.index.insert(id, self.log.len());
        self.log.push(LogEntry {
            ntxid: id,
            kind: EntryKind::Mint { seq },
            body,
            witness: vec![],
            height: self.height,
        });
        Ok(r)
    }

    /// Advances the clock by `k ≥ 1` blocks.
    pub fn advance(&mut self, k: u64) -> Result<Height, ChainError> {
        if k == 0 {
            return Err(ChainError::ZeroAdvance);
        }
        self.height += k;
        Ok(self.height)
    }

    /// Advances to `h` if it lies in the future; no-op otherwise.
    pub fn advance_to(&mut self, h: Height) -> Height {
        if h > self.height {
            self.height = h;
        }
        self.height
    }

    /// Validates without mutating; returns the NTXID the transaction would get.
    pub fn check(
        &self,
        body: &TransactionBody,
        witness: &Witness,
        verifier: &dyn SignatureVerifier,
    ) -> Result<Hash256, Rejection> {
        self.validate(body, witness, verifier).map(|_| body.ntxid())
    }

    /// Accepts the transaction at the current height or rejects it with a reason.
    pub fn submit(
        &mut self,
        body: &TransactionBody,
        witness: &Witness,
        verifier: &dyn SignatureVerifier,
    ) -> Result<Hash256, Rejection> {
        let consumed = self.validate(body, witness, verifier)?;
        let id = body.ntxid();
        for r in &consumed {
            self.utxo.remove(r);
            self.spent.insert(*r, id);
        }
        for (i, out) in body.outputs.iter().enumerate() {
            self.utxo.insert(OutputRef::new(id, i as u32), out.clone());
        }
        self.index.insert(id, self.log.len());
        self.log.push(LogEntry {
            ntxid: id,
            kind: EntryKind::Transfer,
            body: body.clone(),
            witness: witness.clone(),
            height: self.height,
        });
        Ok(id)
    }

    fn validate(
        &self,
        body: &TransactionBody,
        witness: &Witness,
        verifier: &dyn SignatureVerifier,
    ) -> Result<Vec<OutputRef>, Rejection> {
        if body.inputs.is_empty() {
            return Err(Rejection::Malformed("no inputs"));
        }
        if body.outputs.is_empty() {
            return Err(Rejection::Malformed("no outputs"));
        }
        if body.outputs.iter().any(|o| o.value == 0) {
            return Err(Rejection::Malformed("zero-valued output"));
        }
        if witness.len() != body.inputs.len() {
            return Err(Rejection::Malformed(
                "witness count differs from input count",
            ));
        }
        let id = body.ntxid();
        if self.index.contains_key(&id) {
            return Err(Rejection::AlreadyAccepted(id));
        }

        let mut consumed = Vec::with_capacity(body.inputs.len());
        for (i, (spec, w)) in body.inputs.iter().zip(witness).enumerate() {
            let r = match spec {
                InputSpec::Fixed(r) => {
                    if w.chosen_ref.is_some() {
                        return Err(Rejection::Malformed("chosen ref on a fixed input"));
                    }
                    *r
                }
                InputSpec::MultiInput(set) => {
                    if set.is_empty() {
                        return Err(Rejection::Malformed("empty multi-input set"));
                    }
                    match w.chosen_ref {
                        Some(c) if set.contains(&c) => c,
                        _ => return Err(Rejection::BadMultiInput { input: i }),
                    }
                }
            };
            if consumed.contains(&r) || self.spent.contains_key(&r) {
                return Err(Rejection::DoubleSpend(r));
            }
            if !self.utxo.contains_key(&r) {
                return Err(Rejection::MissingInput(r));
            }
            consumed.push(r);
        }

        if body.locktime > self.height {
            return Err(Rejection::Locktime {
                locktime: body.locktime,
                height: self.height,
            });
        }

        let inputs: u128 = consumed.iter().map(|r| self.utxo[r].value as u128).sum();
        let outputs = body.output_total();
        if inputs != outputs {
            return Err(Rejection::ValueMismatch { inputs, outputs });
        }

        for (i, ((spec, w), r)) in body.inputs.iter().zip(witness).zip(&consumed).enumerate() {
            let multi = match spec {
                InputSpec::MultiInput(set) => Some((set, *r)),
                InputSpec::Fixed(_) => None,
            };
            let ctx = EvalContext {
                height: self.height,
                sig_digest: script::sig_digest_for(body, i),
                locktime: Some(body.locktime),
                multi_input: multi,
            };
            script::check(&self.utxo[r].predicate, w, &ctx, verifier)
                .map_err(|error| Rejection::ScriptFail { input: i, error })?;
        }
        Ok(consumed)
    }

    /// Writes the log as JSON lines.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.log {
            serde_json::to_writer(&mut out, &e.summary_json())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::PublicKey;
    use crate::script::{InputWitness, SignatureOracle};

    struct Fixture {
        chain: SimChain,
        oracle: SignatureOracle,
        key: PublicKey,
    }

    fn fixture() -> Fixture {
        let key = PublicKey::derive(0, 0);
        let mut oracle = SignatureOracle::new();
        oracle.register_key(0, key);
        Fixture {
            chain: SimChain::new(ChainParams::default()),
            oracle,
            key,
        }
    }

    fn spend(
        f: &mut Fixture,
        from: OutputRef,
        value: Amount,
        locktime: Height,
    ) -> (TransactionBody, Witness) {
        let body = TransactionBody {
            inputs: vec![InputSpec::Fixed(from)],
            outputs: vec![TxOut {
                value,
                predicate: Predicate::key(f.key),
            }],
            locktime,
        };
        let tag = f.oracle.sign(0, &f.key, &body.ntxid()).unwrap();
        let w = vec![InputWitness::default().with_signatures([(f.key, tag)])];
        (body, w)
    }

    #[test]
    fn ntxid_deterministic_and_locktime_sensitive() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let (b, _) = spend(&mut f, r, 1, 10);
        assert_eq!(compute_ntxid(&b), compute_ntxid(&b));
        let mut b2 = b.clone();
        b2.locktime = 11;
        assert_ne!(b.ntxid(), b2.ntxid());
    }

    #[test]
    fn ntxid_ignores_witness() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let (b, mut w) = spend(&mut f, r, 1, 0);
        let id = f.chain.submit(&b, &w, &f.oracle).unwrap();
        w[0].preimages
            .insert("junk".into(), crate::script::Preimage(vec![1, 2, 3]));
        assert_eq!(b.ntxid(), id);
        assert_eq!(f.chain.entry(&id).unwrap().recompute_id(), id);
    }

    #[test]
    fn mint_and_conservation() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        assert_eq!(f.chain.get_utxo(&r).unwrap().value, 1);
        f.chain.mint(Predicate::key(f.key), 1).unwrap();
        assert_eq!(f.chain.utxo_total(), 2);
        assert_eq!(f.chain.minted_total(), 2);
        assert_eq!(
            f.chain.mint(Predicate::key(f.key), 0),
            Err(ChainError::ZeroValue)
        );
    }

    #[test]
    fn identical_mints_get_distinct_refs() {
        let mut f = fixture();
        let a = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let b = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn valid_spend_then_double_spend() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 2).unwrap();
        let (b, w) = spend(&mut f, r, 2, 0);
        assert!(f.chain.submit(&b, &w, &f.oracle).is_ok());
        let (b2, w2) = spend(&mut f, r, 2, 1);
        assert_eq!(
            f.chain.submit(&b2, &w2, &f.oracle),
            Err(Rejection::DoubleSpend(r))
        );
    }

    #[test]
    fn locktime_gate() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let (b, w) = spend(&mut f, r, 1, 100);
        f.chain.advance(50).unwrap();
        assert_eq!(
            f.chain.submit(&b, &w, &f.oracle),
            Err(Rejection::Locktime {
                locktime: 100,
                height: 50
            })
        );
        f.chain.advance(50).unwrap();
        assert!(f.chain.submit(&b, &w, &f.oracle).is_ok());
    }

    #[test]
    fn locktime_boundary_across_advance() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let (b, w) = spend(&mut f, r, 1, 10);
        f.chain.advance(9).unwrap();
        assert!(matches!(
            f.chain.submit(&b, &w, &f.oracle),
            Err(Rejection::Locktime { .. })
        ));
        assert_eq!(f.chain.advance(1).unwrap(), 10);
        assert!(f.chain.submit(&b, &w, &f.oracle).is_ok());
    }

    #[test]
    fn advance_is_additive() {
        let mut a = SimChain::new(ChainParams::default());
        let mut b = a.clone();
        a.advance(3).unwrap();
        a.advance(3).unwrap();
        assert_eq!(b.advance(6).unwrap(), 6);
        assert_eq!(a, b);
        assert_eq!(a.advance(0), Err(ChainError::ZeroAdvance));
    }

    #[test]
    fn rejection_reasons() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 2).unwrap();
        // value mismatch
        let (b, w) = spend(&mut f, r, 3, 0);
        assert!(matches!(
            f.chain.submit(&b, &w, &f.oracle),
            Err(Rejection::ValueMismatch {
                inputs: 2,
                outputs: 3
            })
        ));
        // unknown input
        let ghost = OutputRef::new(sha256(b"ghost"), 0);
        let (b, w) = spend(&mut f, ghost, 2, 0);
        assert_eq!(
            f.chain.submit(&b, &w, &f.oracle),
            Err(Rejection::MissingInput(ghost))
        );
        // script failure: unsigned
        let (b, _) = spend(&mut f, r, 2, 0);
        let bad = vec![InputWitness::default()];
        assert!(matches!(
            f.chain.submit(&b, &bad, &f.oracle),
            Err(Rejection::ScriptFail { input: 0, .. })
        ));
        // nothing changed
        assert_eq!(f.chain.transfer_count(), 0);
        assert_eq!(f.chain.utxo_total(), 2);
    }

    #[test]
    fn multi_input_membership() {
        let mut f = fixture();
        let a = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let b = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let outsider = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let set: BTreeSet<_> = [a, b].into_iter().collect();
        let body = TransactionBody {
            inputs: vec![InputSpec::MultiInput(set)],
            outputs: vec![TxOut {
                value: 1,
                predicate: Predicate::key(f.key),
            }],
            locktime: 0,
        };
        let tag = f.oracle.sign(0, &f.key, &body.ntxid()).unwrap();
        let w = |c: OutputRef| {
            vec![InputWitness::default()
                .with_signatures([(f.key, tag)])
                .with_chosen(c)]
        };
        assert_eq!(
            f.chain.check(&body, &w(outsider), &f.oracle),
            Err(Rejection::BadMultiInput { input: 0 })
        );
        assert_eq!(
            f.chain
                .check(&body, &vec![InputWitness::default()], &f.oracle),
            Err(Rejection::BadMultiInput { input: 0 })
        );
        assert!(f.chain.check(&body, &w(a), &f.oracle).is_ok());
        assert!(f.chain.submit(&body, &w(b), &f.oracle).is_ok());
        assert!(f.chain.is_spent(&b));
        assert!(!f.chain.is_spent(&a));
    }

    #[test]
    fn jsonl_export_one_line_per_entry() {
        let mut f = fixture();
        let r = f.chain.mint(Predicate::key(f.key), 1).unwrap();
        let (b, w) = spend(&mut f, r, 1, 0);
        f.chain.submit(&b, &w, &f.oracle).unwrap();
        let mut out = Vec::new();
        f.chain.export_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["ntxid"], b.ntxid().to_hex());
        assert_eq!(v["witnessSummary"][0]["signatures"], 1);
    }

    #[test]
    fn params_validation() {
        assert!(ChainParams::new(0, 0, 1).is_err());
        assert!(ChainParams::new(1, 0, 0).is_err());
        assert!(ChainParams::new(6, 0, 1).is_ok());
    }
}
