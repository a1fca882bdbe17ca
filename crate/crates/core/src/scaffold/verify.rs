//! What an honest player checks before signing anything.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    build_compression, candidates, hashlocked_predicate, kernel_count, levels_for, make_kernel,
    matches_at, multiinput_kernel_count, refund_time, BodyLoc, Deposit, KernelId, KernelSpec, Mode,
    Role, Tournament,
};
use crate::primitives::{Hash256, PartyId};
use crate::script::Predicate;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum Violation {
    /// The same commitment digest appears in two seats.
    DuplicateCommitment {
        kernel: KernelId,
        first: KernelId,
        digest: Hash256,
    },
    /// A body spends something other than what the bracket prescribes.
    BadWiring { at: BodyLoc, detail: String },
    /// A locktime or timeout differs from the level schedule.
    BadTimeout { at: BodyLoc, detail: String },
    /// An output that feeds the scaffold is not guarded by the master key.
    MissingMasterKey { at: BodyLoc },
    /// Any other departure from the deterministic construction.
    BadBody { at: Option<BodyLoc>, detail: String },
    /// A value I could win has no pre-signed way to reach me.
    NoPathForMe { at: BodyLoc },
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::DuplicateCommitment { .. } => "DuplicateCommitment",
            Violation::BadWiring { .. } => "BadWiring",
            Violation::BadTimeout { .. } => "BadTimeout",
            Violation::MissingMasterKey { .. } => "MissingMasterKey",
            Violation::BadBody { .. } => "BadBody",
            Violation::NoPathForMe { .. } => "NoPathForMe",
        }
    }

    /// Kernel the violation points at, if any.
    pub fn kernel(&self) -> Option<KernelId> {
        let at = match self {
            Violation::DuplicateCommitment { kernel, .. } => return Some(*kernel),
            Violation::BadWiring { at, .. }
            | Violation::BadTimeout { at, .. }
            | Violation::MissingMasterKey { at }
            | Violation::NoPathForMe { at } => Some(*at),
            Violation::BadBody { at, .. } => *at,
        };
        match at {
            Some(BodyLoc::Kernel { id, .. }) => Some(id),
            _ => None,
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateCommitment { kernel, first, .. } => {
                write!(f, "DuplicateCommitment at {kernel} (also in {first})")
            }
            Violation::BadWiring { at, detail } => write!(f, "BadWiring at {at}: {detail}"),
            Violation::BadTimeout { at, detail } => write!(f, "BadTimeout at {at}: {detail}"),
            Violation::MissingMasterKey { at } => write!(f, "MissingMasterKey at {at}"),
            Violation::BadBody {
                at: Some(at),
                detail,
            } => write!(f, "BadBody at {at}: {detail}"),
            Violation::BadBody { at: None, detail } => write!(f, "BadBody: {detail}"),
            Violation::NoPathForMe { at } => write!(f, "NoPathForMe at {at}"),
        }
    }
}

const ROLES: [Role; 5] = [
    Role::Entry,
    Role::Reveal,
    Role::Outcome(0),
    Role::Outcome(1),
    Role::Outcome(2),
];

/// Recomputes the scaffold from its public parameters and reports every
/// departure, from the point of view of player `me`.
pub fn verify_as_honest(t: &Tournament, me: PartyId) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if let Err(detail) = check_shape(t, me) {
        return Err(vec![Violation::BadBody { at: None, detail }]);
    }
    check_deposit(t, &mut v);
    check_kernels(t, &mut v);
    check_compressions(t, &mut v);
    check_commitments(t, &mut v);
    check_paths(t, me, &mut v);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn check_shape(t: &Tournament, me: PartyId) -> Result<(), String> {
    let levels = levels_for(t.n).map_err(|e| e.to_string())?;
    if t.master_keys.len() != t.n {
        return Err(format!(
            "{} master keys for {} players",
            t.master_keys.len(),
            t.n
        ));
    }
    if me >= t.n {
        return Err(format!("player {me} is not in the tournament"));
    }
    if t.levels.len() != levels as usize {
        return Err(format!("{} levels, expected {levels}", t.levels.len()));
    }
    for (level, matches) in t.levels.iter().enumerate() {
        let level = level as u32;
        if matches.len() != matches_at(t.n, level) {
            return Err(format!("level {level} has {} matches", matches.len()));
        }
        let want = match t.mode {
            Mode::Plain => kernel_count(level).map_err(|e| e.to_string())?,
            Mode::Multiinput => multiinput_kernel_count(level),
        };
        for (i, kernels) in matches.iter().enumerate() {
            if kernels.len() as u128 != want {
                return Err(format!(
                    "match ({level},{i}) has {} kernels, expected {want}",
                    kernels.len()
                ));
            }
            for (j, k) in kernels.iter().enumerate() {
                if k.id != KernelId::new(level, i, j as u64) {
                    return Err(format!("kernel {} stored at ({level},{i},{j})", k.id));
                }
            }
        }
    }
    match t.mode {
        Mode::Plain if !t.compressions.is_empty() => Err("compressions in plain mode".into()),
        Mode::Multiinput => {
            if t.compressions.len() != levels as usize {
                return Err("missing compression levels".into());
            }
            for (level, matches) in t.compressions.iter().enumerate() {
                let level = level as u32;
                if matches.len() != matches_at(t.n, level)
                    || matches
                        .iter()
                        .any(|m| m.len() != candidates(level, 0).len())
                {
                    return Err(format!("compression level {level} has the wrong shape"));
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn check_deposit(t: &Tournament, v: &mut Vec<Violation>) {
    let bet = t.params.bet_value;
    match &t.deposit {
        Deposit::Atomic { body } => {
            let at = BodyLoc::Deposit { index: 0 };
            if body.inputs.len() != t.n || body.outputs.len() != t.n {
                v.push(Violation::BadBody {
                    at: Some(at),
                    detail: "deposit must have one input and one output per player".into(),
                });
            }
            for o in &body.outputs {
                if !o.predicate.requires_all_sign(&t.master_keys) {
                    v.push(Violation::MissingMasterKey { at });
                } else if o.value != bet || o.predicate != Predicate::all_sign(&t.master_keys) {
                    v.push(Violation::BadBody {
                        at: Some(at),
                        detail: "deposit output differs from the construction".into(),
                    });
                }
            }
        }
        Deposit::Hashlocked {
            bodies,
            xhat_digest,
            refund_time: rt,
        } => {
            let want_rt = refund_time(t.mode, t.t_commit, t.params.tau);
            if *rt != want_rt {
                v.push(Violation::BadTimeout {
                    at: BodyLoc::Deposit { index: 0 },
                    detail: format!("refund time {rt}, expected {want_rt}"),
                });
            }
            if bodies.len() != t.n {
                v.push(Violation::BadBody {
                    at: None,
                    detail: format!("{} deposits for {} players", bodies.len(), t.n),
                });
                return;
            }
            for (p, b) in bodies.iter().enumerate() {
                let want =
                    hashlocked_predicate(&t.master_keys, *xhat_digest, want_rt, t.master_keys[p]);
                if b.outputs.len() != 1
                    || b.outputs[0].predicate != want
                    || b.outputs[0].value != bet
                {
                    v.push(Violation::BadBody {
                        at: Some(BodyLoc::Deposit { index: p }),
                        detail: "deposit output differs from the construction".into(),
                    });
                }
            }
        }
    }
}

fn check_kernels(t: &Tournament, v: &mut Vec<Violation>) {
    let last = t.final_level();
    for k in t.kernels() {
        let id = k.id;
        let at = |role| BodyLoc::Kernel { id, role };
        let sched = t.schedule(id.level);
        if (k.t0, k.t1, k.t2) != (sched.t0, sched.t1, sched.t2) {
            v.push(Violation::BadTimeout {
                at: at(Role::Entry),
                detail: format!(
                    "timeouts ({}, {}, {}), expected ({}, {}, {})",
                    k.t0, k.t1, k.t2, sched.t0, sched.t1, sched.t2
                ),
            });
        }
        let (players, inputs) = match t.expected_seat(id) {
            Ok(s) => s,
            Err(e) => {
                v.push(Violation::BadWiring {
                    at: at(Role::Entry),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if players != (k.left_player, k.right_player) {
            v.push(Violation::BadWiring {
                at: at(Role::Entry),
                detail: format!(
                    "players ({}, {}), expected ({}, {})",
                    k.left_player, k.right_player, players.0, players.1
                ),
            });
            continue;
        }
        let want = make_kernel(&KernelSpec {
            id,
            players,
            commits: (k.left_commit, k.right_commit),
            inputs,
            schedule: sched,
            stake: t.params.bet_value << id.level,
            master: &t.master_keys,
            pay_winner: id.level == last && t.mode == Mode::Plain,
        });
        if k.entry.inputs != want.entry.inputs {
            v.push(Violation::BadWiring {
                at: at(Role::Entry),
                detail: "entry does not spend the prescribed outputs".into(),
            });
            continue;
        }
        for role in ROLES {
            let (got, exp) = (k.body(role), want.body(role));
            if got == exp {
                continue;
            }
            let loses_master = got.outputs.iter().zip(&exp.outputs).any(|(g, e)| {
                e.predicate.requires_all_sign(&t.master_keys)
                    && !g.predicate.requires_all_sign(&t.master_keys)
            });
            if got.locktime != exp.locktime {
                v.push(Violation::BadTimeout {
                    at: at(role),
                    detail: format!("locktime {}, expected {}", got.locktime, exp.locktime),
                });
            } else if got.inputs != exp.inputs {
                v.push(Violation::BadWiring {
                    at: at(role),
                    detail: "spends the wrong output".into(),
                });
            } else if loses_master {
                v.push(Violation::MissingMasterKey { at: at(role) });
            } else {
                v.push(Violation::BadBody {
                    at: Some(at(role)),
                    detail: "differs from the construction".into(),
                });
            }
        }
    }
}

fn check_compressions(t: &Tournament, v: &mut Vec<Violation>) {
    let last = t.final_level();
    for (level, matches) in t.compressions.iter().enumerate() {
        let level = level as u32;
        for (i, comps) in matches.iter().enumerate() {
            for (offset, (c, candidate)) in comps.iter().zip(candidates(level, i)).enumerate() {
                let at = BodyLoc::Compression {
                    level,
                    match_index: i,
                    offset,
                };
                let payout = if level == last {
                    Predicate::key(t.master_keys[candidate])
                } else {
                    Predicate::all_sign(&t.master_keys)
                };
                match build_compression(level, i, candidate, &t.levels[level as usize][i], payout) {
                    Ok(want) if want == *c => {}
                    Ok(want) if want.body.inputs != c.body.inputs || c.candidate != candidate => v
                        .push(Violation::BadWiring {
                            at,
                            detail: "compression set differs from the winning outcomes".into(),
                        }),
                    Ok(_)
                        if level != last
                            && c.body
                                .outputs
                                .iter()
                                .any(|o| !o.predicate.requires_all_sign(&t.master_keys)) =>
                    {
                        v.push(Violation::MissingMasterKey { at })
                    }
                    Ok(_) => v.push(Violation::BadBody {
                        at: Some(at),
                        detail: "differs from the construction".into(),
                    }),
                    Err(e) => v.push(Violation::BadWiring {
                        at,
                        detail: e.to_string(),
                    }),
                }
            }
        }
    }
}

fn check_commitments(t: &Tournament, v: &mut Vec<Violation>) {
    let mut seen: HashMap<Hash256, KernelId> = HashMap::new();
    for k in t.kernels() {
        for digest in [k.left_commit, k.right_commit] {
            match seen.get(&digest) {
                Some(first) => v.push(Violation::DuplicateCommitment {
                    kernel: k.id,
                    first: *first,
                    digest,
                }),
                None => {
                    seen.insert(digest, k.id);
                }
            }
        }
    }
}

/// Every outcome I can win must lead on to my next seat or to my key.
fn check_paths(t: &Tournament, me: PartyId, v: &mut Vec<Violation>) {
    let spenders = t.spenders();
    let last = t.final_level();
    let mine = Predicate::key(t.master_keys[me]);
    let leads_on = |loc: &BodyLoc| match *loc {
        BodyLoc::Kernel {
            id,
            role: Role::Entry,
        } => t.kernel(id).is_some_and(|k| k.plays(me)),
        BodyLoc::Compression { .. } => t.payee(*loc) == Some(me),
        _ => false,
    };
    let leaf = t.deposit.leaf(me);
    if !spenders.get(&leaf).is_some_and(|s| s.iter().any(leads_on)) {
        v.push(Violation::NoPathForMe {
            at: BodyLoc::Deposit {
                index: if t.deposit.count() == 1 { 0 } else { me },
            },
        });
    }
    for k in t.kernels().filter(|k| k.plays(me)) {
        for tx in (0..3).filter(|&tx| k.winner(tx) == me) {
            let at = BodyLoc::Kernel {
                id: k.id,
                role: Role::Outcome(tx),
            };
            let ok = if k.id.level == last && t.mode == Mode::Plain {
                k.outcomes[tx]
                    .outputs
                    .first()
                    .is_some_and(|o| o.predicate == mine)
            } else {
                spenders
                    .get(&k.outcome_ref(tx))
                    .is_some_and(|s| s.iter().any(leads_on))
            };
            if !ok {
                v.push(Violation::NoPathForMe { at });
            }
        }
    }
    if t.mode == Mode::Multiinput {
        for c in t.compressions[last as usize].iter().flatten() {
            if c.candidate == me && c.body.outputs.first().map(|o| &o.predicate) != Some(&mine) {
                v.push(Violation::NoPathForMe {
                    at: BodyLoc::Compression {
                        level: last,
                        match_index: c.match_index,
                        offset: me - candidates(last, c.match_index).start,
                    },
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::build;
    use super::super::TX_B;
    use super::*;
    use crate::chain::InputSpec;
    use crate::primitives::PublicKey;

    #[test]
    fn fresh_tournaments_verify() {
        for (n, mode) in [
            (2, Mode::Plain),
            (4, Mode::Plain),
            (4, Mode::Multiinput),
            (8, Mode::Multiinput),
        ] {
            let t = build(n, mode);
            for me in 0..n {
                assert_eq!(verify_as_honest(&t, me), Ok(()), "n={n} {mode:?} me={me}");
            }
        }
    }

    #[test]
    fn duplicate_commitment_detected() {
        let mut t = build(4, Mode::Plain);
        let c = t.levels[0][0][0].left_commit;
        let victim = KernelId::new(1, 0, 3);
        t.kernel_mut(victim).unwrap().right_commit = c;
        let v = verify_as_honest(&t, 0).unwrap_err();
        assert!(v.iter().any(
            |x| matches!(x, Violation::DuplicateCommitment { kernel, .. } if *kernel == victim)
        ));
    }

    #[test]
    fn rewired_entry_detected() {
        let mut t = build(4, Mode::Plain);
        let wrong = t.levels[0][0][0].outcome_ref(TX_B);
        let victim = KernelId::new(1, 0, 0);
        t.kernel_mut(victim).unwrap().entry.inputs[0] = InputSpec::Fixed(wrong);
        let v = verify_as_honest(&t, 0).unwrap_err();
        assert!(v
            .iter()
            .any(|x| x.rule() == "BadWiring" && x.kernel() == Some(victim)));
    }

    #[test]
    fn shifted_locktime_detected() {
        let mut t = build(2, Mode::Plain);
        t.levels[0][0][0].outcomes[TX_B].locktime += 1;
        let v = verify_as_honest(&t, 1).unwrap_err();
        assert!(v.iter().any(|x| x.rule() == "BadTimeout"));
    }

    #[test]
    fn master_key_removal_detected() {
        let mut t = build(4, Mode::Plain);
        let k = t.kernel_mut(KernelId::new(0, 1, 0)).unwrap();
        k.outcomes[TX_B].outputs[0].predicate = Predicate::key(PublicKey::derive(5, 5));
        let v = verify_as_honest(&t, 3).unwrap_err();
        assert!(v.iter().any(|x| x.rule() == "MissingMasterKey"));
    }
}
