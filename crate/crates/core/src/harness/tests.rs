use super::*;
use crate::scaffold::DepositOption;

fn check_invariants(cfg: &ScenarioConfig, r: &TrialResult) {
    assert_eq!(r.payoff_sum(), 0, "{r:?}");
    for o in &r.per_player {
        assert_eq!(o.max_locked_beyond_bet, 0, "{r:?}");
    }
    if r.committed {
        let w = r.winner.expect("winner");
        assert_eq!(
            r.per_player[w].net_payoff,
            (cfg.n as i64 - 1) * cfg.bet as i64
        );
        assert!(r.final_height.unwrap() <= cfg.final_bound(), "{r:?}");
    } else {
        assert!(r.abort_height.unwrap() <= cfg.abort_bound(), "{r:?}");
    }
    assert!(r.on_chain_tx_count <= cfg.on_chain_bound(), "{r:?}");
}

#[test]
fn ethereum_all_honest_commits() {
    let cfg = ScenarioConfig::uniform(Backend::Ethereum, 4, "honest");
    let r = run_trial(&cfg, 7).unwrap();
    assert!(r.committed);
    assert!(r.final_height.unwrap() <= cfg.t_commit() + 2 * cfg.tau * 2);
    let winners: Vec<_> = r.per_player.iter().filter(|o| o.net_payoff == 3).collect();
    assert_eq!(winners.len(), 1);
    check_invariants(&cfg, &r);
}

#[test]
fn ethereum_abort_deposit_refunds() {
    let cfg = ScenarioConfig::new(
        Backend::Ethereum,
        &["honest", "abort-deposit", "honest", "honest"],
    );
    let r = run_trial(&cfg, 1).unwrap();
    assert!(!r.committed);
    assert!(r.per_player.iter().all(|o| o.net_payoff == 0));
    assert!(r.abort_height.unwrap() <= cfg.t_commit());
}

#[test]
fn trials_are_deterministic() {
    for backend in [
        Backend::Ethereum,
        Backend::BitcoinPlain,
        Backend::BitcoinMultiinput,
    ] {
        let cfg = ScenarioConfig::new(
            backend,
            &["honest", "abort-open", "honest", "selective-abort-open"],
        );
        assert_eq!(run_trial(&cfg, 99).unwrap(), run_trial(&cfg, 99).unwrap());
    }
}

#[test]
fn bitcoin_honest_runs_commit() {
    for backend in [Backend::BitcoinPlain, Backend::BitcoinMultiinput] {
        for n in [2, 4] {
            let cfg = ScenarioConfig::uniform(backend, n, "honest");
            for seed in 0..4 {
                let (r, art) = run_trial_detailed(&cfg, seed).unwrap();
                assert!(r.committed, "{backend:?} {r:?}");
                assert!(art.conservation_held());
                check_invariants(&cfg, &r);
            }
        }
    }
}

#[test]
fn bitcoin_adversarial_runs_respect_bounds() {
    for backend in [Backend::BitcoinPlain, Backend::BitcoinMultiinput] {
        for name in [
            "abort-open",
            "selective-abort-open",
            "abort-commit",
            "withhold-broadcast",
            "abort-signing",
        ] {
            let cfg = ScenarioConfig::new(backend, &["honest", name, name, name]);
            for seed in 0..3 {
                let (r, art) = run_trial_detailed(&cfg, seed).unwrap();
                assert!(art.conservation_held());
                check_invariants(&cfg, &r);
            }
        }
    }
}

#[test]
fn hashlocked_abort_refunds_everyone() {
    let mut cfg = ScenarioConfig::new(
        Backend::BitcoinPlain,
        &["honest", "abort-deposit", "honest", "honest"],
    );
    cfg.deposit_option = DepositOption::Hashlocked;
    let r = run_trial(&cfg, 3).unwrap();
    assert!(!r.committed);
    assert!(r.per_player.iter().all(|o| o.net_payoff == 0), "{r:?}");
    check_invariants(&cfg, &r);

    let mut cfg = ScenarioConfig::uniform(Backend::BitcoinPlain, 4, "honest");
    cfg.deposit_option = DepositOption::Hashlocked;
    let r = run_trial(&cfg, 3).unwrap();
    assert!(r.committed, "{r:?}");
    check_invariants(&cfg, &r);
}

#[test]
fn replay_never_wins_on_ethereum() {
    let cfg = ScenarioConfig::new(
        Backend::Ethereum,
        &["honest", "replay-commit", "replay-commit", "replay-commit"],
    );
    for seed in 0..20 {
        let r = run_trial(&cfg, seed).unwrap();
        if r.committed {
            assert_eq!(r.winner, Some(0), "{r:?}");
        }
    }
}

#[test]
fn replay_on_bitcoin_is_refused_before_funds_move() {
    let cfg = ScenarioConfig::new(
        Backend::BitcoinPlain,
        &["honest", "replay-commit", "honest", "honest"],
    );
    let r = run_trial(&cfg, 5).unwrap();
    assert!(!r.committed);
    assert_eq!(r.on_chain_tx_count, 0);
    assert!(r.per_player.iter().all(|o| o.net_payoff == 0));
}

#[test]
fn synthetic_low_win_rate_fails_dominance() {
    let cfg = ScenarioConfig::uniform(Backend::Ethereum, 4, "honest");
    let mut s = summarize(&cfg, &[]);
    s.trials = 10_000;
    s.committed = 10_000;
    s.players[0].win_frequency = 0.20;
    s.players[0].min_payoff_committed = Some(-1);
    let d = check_dominance(&s, 4, DEFAULT_EPSILON);
    assert!(!d.pass);
    assert!(!d.vacuous);
}

#[test]
fn abort_only_summary_is_vacuous() {
    let mut cfg = ScenarioConfig::new(
        Backend::Ethereum,
        &["honest", "abort-deposit", "honest", "honest"],
    );
    cfg.trials = 8;
    let s = run_monte_carlo(&cfg).unwrap();
    assert_eq!(s.abort_rate, 1.0);
    let d = check_dominance(&s, 4, DEFAULT_EPSILON);
    assert!(d.pass && d.vacuous);
    assert!(abort_payoffs_zero(&s));
}

#[test]
fn config_validation() {
    let mut cfg = ScenarioConfig::uniform(Backend::Ethereum, 4, "honest");
    cfg.n = 3;
    assert!(matches!(cfg.validate(), Err(ConfigError::NotPowerOfTwo(3))));
    let cfg = ScenarioConfig::new(Backend::Ethereum, &["honest", "bogus"]);
    assert!(cfg
        .validate()
        .unwrap_err()
        .to_string()
        .starts_with("UnknownStrategy"));
    let text =
        r#"{"backend":"bitcoin-plain","N":2,"strategyByPlayer":["honest","honest"],"extra":1}"#;
    assert!(matches!(
        ScenarioConfig::from_json(text),
        Err(ConfigError::Parse(_))
    ));
    let text = r#"{"backend":"bitcoin-multiinput","N":2,"strategyByPlayer":["honest","honest"]}"#;
    let cfg = ScenarioConfig::from_json(text).unwrap();
    assert_eq!((cfg.tau, cfg.bet, cfg.trials), (6, 1, 1));
}

#[test]
fn csv_columns() {
    let cfg = ScenarioConfig::uniform(Backend::Ethereum, 2, "honest");
    let r = run_trial(&cfg, 0).unwrap();
    assert_eq!(csv_header(2).len(), r.csv_record().len());
}

#[test]
fn cost_report_bitcoin_plain() {
    let mut cfg = ScenarioConfig::uniform(Backend::BitcoinPlain, 4, "honest");
    cfg.trials = 2;
    let c = measure_costs(&cfg).unwrap();
    assert_eq!(c.off_chain_signed_per_party, Some(56));
    assert_eq!(c.collateral_beyond_bet, 0);
    assert_eq!(c.on_chain_tx_count, c.on_chain_tx_bound);
}
