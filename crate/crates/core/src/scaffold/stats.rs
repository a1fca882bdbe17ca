//! Body counts and on-chain size, by closed form and by enumeration.

use serde::{Deserialize, Serialize};

use super::{
    entry_predicate, hashlocked_predicate, kernel_count, levels_for, matches_at,
    multiinput_kernel_count, reveal_predicate, DepositOption, Mode, ScaffoldError, Tournament,
    LEFT_SLOT, MAX_MULTIINPUT_N, MAX_PLAIN_N, RIGHT_SLOT, XHAT_SLOT,
};
use crate::chain::{InputSpec, OutputRef, TransactionBody, TxOut};
use crate::primitives::{Hash256, PublicKey, SigModel};
use crate::script::{InputWitness, Predicate, SigTag, Witness};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionStats {
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    pub deposit_option: DepositOption,
    pub sig_model: SigModel,
    /// Every body signed off-chain, deposits included.
    pub total_offchain: u128,
    /// Bodies per level (kernels × 5 plus compressions).
    pub per_level: Vec<u128>,
    pub kernels_per_match: Vec<u128>,
    pub compression_count: u128,
    pub deposit_count: u128,
    /// Most transactions any run can put on chain.
    pub on_chain_worst_case: u64,
    /// Bytes of that worst-case run under `sig_model`.
    pub bytes_on_chain: u64,
    /// Whether the counts were enumerated from a built scaffold.
    pub materialized: bool,
}

/// Stats computed without building the scaffold.
pub fn closed_form_stats(
    n: usize,
    mode: Mode,
    deposit: DepositOption,
    sig_model: SigModel,
) -> Result<TransactionStats, ScaffoldError> {
    let levels = levels_for(n)?;
    let mut per_level = Vec::new();
    let mut kernels_per_match = Vec::new();
    let mut compression_count = 0u128;
    for level in 0..levels {
        let k = match mode {
            Mode::Plain => kernel_count(level)?,
            Mode::Multiinput => multiinput_kernel_count(level),
        };
        let m = matches_at(n, level) as u128;
        let comps = match mode {
            Mode::Plain => 0,
            Mode::Multiinput => m << (level + 1),
        };
        compression_count += comps;
        kernels_per_match.push(k);
        per_level.push(
            m.checked_mul(k)
                .and_then(|x| x.checked_mul(5))
                .and_then(|x| x.checked_add(comps))
                .ok_or(ScaffoldError::Overflow { level })?,
        );
    }
    let deposit_count = match deposit {
        DepositOption::Atomic => 1,
        DepositOption::Hashlocked => n as u128,
    };
    let total_offchain = per_level
        .iter()
        .try_fold(deposit_count, |acc, x| acc.checked_add(*x))
        .ok_or(ScaffoldError::Overflow { level: levels })?;
    let per_match = match mode {
        Mode::Plain => 3,
        Mode::Multiinput => 4,
    };
    Ok(TransactionStats {
        mode,
        n,
        deposit_option: deposit,
        sig_model,
        total_offchain,
        per_level,
        kernels_per_match,
        compression_count,
        deposit_count,
        on_chain_worst_case: per_match * (n as u64 - 1) + deposit_count as u64,
        bytes_on_chain: worst_case_bytes(n, levels, mode, deposit, sig_model),
        materialized: false,
    })
}

impl Tournament {
    /// Stats enumerated from this scaffold.
    pub fn stats(&self, sig_model: SigModel) -> TransactionStats {
        let mut per_level = Vec::new();
        let mut kernels_per_match = Vec::new();
        for (level, matches) in self.levels.iter().enumerate() {
            let comps: usize = self
                .compressions
                .get(level)
                .map(|l| l.iter().map(Vec::len).sum())
                .unwrap_or(0);
            let kernels: usize = matches.iter().map(Vec::len).sum();
            per_level.push((kernels * 5 + comps) as u128);
            kernels_per_match.push(matches.first().map_or(0, Vec::len) as u128);
        }
        let deposit_count = self.deposit.count() as u128;
        let per_match = match self.mode {
            Mode::Plain => 3,
            Mode::Multiinput => 4,
        };
        TransactionStats {
            mode: self.mode,
            n: self.n,
            deposit_option: self.deposit.option(),
            sig_model,
            total_offchain: self.body_count() as u128,
            per_level,
            kernels_per_match,
            compression_count: self.all_compressions().count() as u128,
            deposit_count,
            on_chain_worst_case: per_match * (self.n as u64 - 1) + deposit_count as u64,
            bytes_on_chain: worst_case_bytes(
                self.n,
                self.level_count(),
                self.mode,
                self.deposit.option(),
                sig_model,
            ),
            materialized: true,
        }
    }
}

/// Largest player count built (rather than counted) for `mode`.
pub fn materialization_limit(mode: Mode) -> usize {
    match mode {
        Mode::Plain => MAX_PLAIN_N,
        Mode::Multiinput => MAX_MULTIINPUT_N,
    }
}

fn sigs(n: usize) -> Vec<(PublicKey, SigTag)> {
    (0..n)
        .map(|p| (PublicKey::derive(0, p), SigTag(Hash256::ZERO)))
        .collect()
}

fn placeholder(i: u32) -> OutputRef {
    OutputRef::new(Hash256::ZERO, i)
}

/// Bytes of the longest on-chain path: per match the entry, the reveal and the
/// reveal-based outcome (plus the compression), and the deposits. Sizes do not
/// depend on digest values, so placeholder references stand in for real ones.
fn worst_case_bytes(
    n: usize,
    levels: u32,
    mode: Mode,
    deposit: DepositOption,
    model: SigModel,
) -> u64 {
    let keys: Vec<PublicKey> = (0..n).map(|p| PublicKey::derive(0, p)).collect();
    let master = InputWitness::default().with_signatures(sigs(n));
    let size = |b: &TransactionBody, w: Witness| b.size_with_witness(&w, model);
    let out = |predicate: Predicate| TxOut {
        value: 1,
        predicate,
    };
    let one_in = |r: OutputRef| vec![InputSpec::Fixed(r)];

    let mut total = match deposit {
        DepositOption::Atomic => {
            let body = TransactionBody {
                inputs: (0..n as u32)
                    .map(|i| InputSpec::Fixed(placeholder(i)))
                    .collect(),
                outputs: (0..n).map(|_| out(Predicate::all_sign(&keys))).collect(),
                locktime: 0,
            };
            let w = (0..n)
                .map(|_| InputWitness::default().with_signatures(sigs(1)))
                .collect();
            size(&body, w)
        }
        DepositOption::Hashlocked => {
            let body = TransactionBody {
                inputs: one_in(placeholder(0)),
                outputs: vec![out(hashlocked_predicate(&keys, Hash256::ZERO, 0, keys[0]))],
                locktime: 0,
            };
            n as u64
                * size(
                    &body,
                    vec![InputWitness::default().with_signatures(sigs(1))],
                )
        }
    };

    for level in 0..levels {
        let is_final = level + 1 == levels;
        let entry = TransactionBody {
            inputs: vec![
                InputSpec::Fixed(placeholder(0)),
                InputSpec::Fixed(placeholder(1)),
            ],
            outputs: vec![out(entry_predicate(&keys, Hash256::ZERO, 0))],
            locktime: 0,
        };
        let entry_input = if level == 0 && deposit == DepositOption::Hashlocked {
            master
                .clone()
                .with_branch(0)
                .with_preimage(XHAT_SLOT, &[0; 32])
        } else {
            master.clone()
        };
        let reveal = TransactionBody {
            inputs: one_in(placeholder(0)),
            outputs: vec![out(reveal_predicate(
                &keys,
                Hash256::ZERO,
                Hash256::ZERO,
                0,
            ))],
            locktime: 0,
        };
        let payout = if is_final && mode == Mode::Plain {
            Predicate::key(keys[0])
        } else {
            Predicate::all_sign(&keys)
        };
        let outcome = TransactionBody {
            inputs: one_in(placeholder(0)),
            outputs: vec![out(payout)],
            locktime: 0,
        };
        let mut per_match = size(&entry, vec![entry_input.clone(), entry_input])
            + size(
                &reveal,
                vec![master
                    .clone()
                    .with_branch(0)
                    .with_preimage(LEFT_SLOT, &[0; 32])],
            )
            + size(
                &outcome,
                vec![master
                    .clone()
                    .with_branch(1)
                    .with_preimage(LEFT_SLOT, &[0; 32])
                    .with_preimage(RIGHT_SLOT, &[0; 32])],
            );
        if mode == Mode::Multiinput {
            // largest set: a right-side candidate, 2 · 2^level members
            let set = (0..(2u32 << level)).map(placeholder).collect();
            let comp = TransactionBody {
                inputs: vec![InputSpec::MultiInput(set)],
                outputs: vec![out(if is_final {
                    Predicate::key(keys[0])
                } else {
                    Predicate::all_sign(&keys)
                })],
                locktime: 0,
            };
            per_match += size(&comp, vec![master.clone().with_chosen(placeholder(0))]);
        }
        total += matches_at(n, level) as u64 * per_match;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::super::tests::build;
    use super::*;

    #[test]
    fn closed_form_totals() {
        let t = |n, m| {
            closed_form_stats(n, m, DepositOption::Atomic, SigModel::Multisig)
                .unwrap()
                .total_offchain
        };
        assert_eq!(t(2, Mode::Plain), 6);
        assert_eq!(t(4, Mode::Plain), 56);
        assert_eq!(t(8, Mode::Plain), 3756);
        assert_eq!(t(16, Mode::Plain), 23_922_356);
        assert_eq!(t(4, Mode::Multiinput), 39);
        assert_eq!(t(32, Mode::Multiinput), 2641);
    }

    #[test]
    fn enumeration_agrees_with_closed_form() {
        for (n, mode) in [
            (2, Mode::Plain),
            (4, Mode::Plain),
            (4, Mode::Multiinput),
            (8, Mode::Multiinput),
        ] {
            let mut built = build(n, mode).stats(SigModel::Multisig);
            assert!(built.materialized);
            built.materialized = false;
            assert_eq!(
                built,
                closed_form_stats(n, mode, DepositOption::Atomic, SigModel::Multisig).unwrap()
            );
        }
    }

    #[test]
    fn aggregate_is_smaller() {
        let m =
            closed_form_stats(8, Mode::Plain, DepositOption::Atomic, SigModel::Multisig).unwrap();
        let a =
            closed_form_stats(8, Mode::Plain, DepositOption::Atomic, SigModel::Aggregate).unwrap();
        assert!(a.bytes_on_chain < m.bytes_on_chain);
        assert_eq!(a.total_offchain, m.total_offchain);
    }

    #[test]
    fn stats_json_field_names() {
        let s =
            closed_form_stats(4, Mode::Plain, DepositOption::Atomic, SigModel::Multisig).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        for f in [
            "mode",
            "N",
            "totalOffchain",
            "perLevel",
            "onChainWorstCase",
            "bytesOnChain",
            "materialized",
        ] {
            assert!(v.get(f).is_some(), "missing {f}");
        }
    }
}
