use aacgka::aacgka::ReqChange;
use aacgka::abc::{AbcScheme, AttributeMap};
use aacgka_harness::abc_games::AbcUnfEnv;
use aacgka_harness::env::{acme_reqs, GameEnv, OracleCall, OracleError, UserSpec, ISSUERS};
use aacgka_harness::{run_game, GameKind, HarnessError, Outcome};
use proptest::prelude::*;

const FAST: AbcScheme = AbcScheme::SaltedHash;

fn acme() -> AttributeMap {
    [("org", "ACME")].into_iter().collect()
}

#[test]
fn duplicate_user_rejected_at_setup() {
    let users = [UserSpec::new("alice", &[("org", "ACME")], "uni"), UserSpec::new("alice", &[("org", "ACME")], "gov")];
    assert!(matches!(GameEnv::setup(FAST, &ISSUERS, &users, 1), Err(OracleError::Assertion(_))));
}

#[test]
fn unknown_user_is_an_assertion() {
    let mut env = GameEnv::standard(FAST, 1).unwrap();
    assert!(matches!(env.q_create("zoe", &acme_reqs()), Err(OracleError::Assertion(_))));
    assert!(matches!(env.q_init("alice", &acme(), "uni"), Err(OracleError::Assertion(_))));
}

#[test]
fn add_flow_through_oracles() {
    let mut env = GameEnv::standard(FAST, 2).unwrap();
    env.q_create("alice", &acme_reqs()).unwrap();
    let (_, pp) = env.q_propose("alice", "bob", "add").unwrap();
    assert!(pp.is_some());
    assert_eq!(env.pp_list().len(), 1);
    env.q_commit("alice", &[0]).unwrap();
    assert_eq!(env.commits()[0].0, 0);
    assert!(env.q_process("alice", 0).unwrap());
    assert!(env.q_process("bob", 0).unwrap());
    assert_eq!(env.epoch_of("alice"), Some(1));
    assert_eq!(env.epoch_of("bob"), Some(1));
    assert!(env.is_member("bob"));
    // The commit is tagged with epoch 0; alice is now at 1.
    assert!(matches!(env.q_process("alice", 0), Err(OracleError::Assertion(_))));
    assert!(matches!(env.q_process("alice", 9), Err(OracleError::BadIndex(9))));
}

#[test]
fn outsider_without_qualifying_credential_cannot_be_added() {
    let mut env = GameEnv::standard(FAST, 3).unwrap();
    env.q_create("alice", &acme_reqs()).unwrap();
    assert!(matches!(env.q_propose("alice", "mallory", "add"), Err(OracleError::Protocol(_))));
    assert!(env.pp_list().is_empty());
}

#[test]
fn exposed_credentials_are_listed() {
    let mut env = GameEnv::standard(FAST, 4).unwrap();
    let cred = env.q_expose_cred("bob").unwrap();
    assert_eq!(env.q_creds(), &[cred]);
    assert_eq!(env.calls().last(), Some(&OracleCall::ExposeCred { id: "bob".into() }));
}

fn arb_call() -> impl Strategy<Value = OracleCall> {
    let user = prop::sample::select(vec!["alice", "bob", "carol", "mallory"]);
    prop_oneof![
        user.clone().prop_map(|id| OracleCall::Create { id: id.into(), reqs: acme_reqs() }),
        (user.clone(), user.clone(), prop::sample::select(vec!["add", "update", "remove", "join"]))
            .prop_map(|(id, t, p)| OracleCall::Propose { id: id.into(), target: t.into(), prop_type: p.into() }),
        user.clone().prop_map(|id| OracleCall::ProposeReqs { id: id.into(), change: ReqChange::Remove { req_id: "r1".into() } }),
        (user.clone(), prop::collection::vec(0usize..6, 0..3)).prop_map(|(id, indices)| OracleCall::Commit { id: id.into(), indices }),
        (user.clone(), 0usize..6).prop_map(|(id, index)| OracleCall::Process { id: id.into(), index }),
        user.clone().prop_map(|id| OracleCall::PublishInfo { id: id.into() }),
        user.prop_map(|id| OracleCall::ExposeCred { id: id.into() }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn replaying_calls_reproduces_state(seed in any::<u64>(), calls in prop::collection::vec(arb_call(), 0..30)) {
        let mut env = GameEnv::standard(FAST, seed).unwrap();
        for c in &calls {
            let _ = env.call(c);
        }
        let again = env.replay().unwrap();
        prop_assert_eq!(again.state_digest(), env.state_digest());
        prop_assert_eq!(again.log(), env.log());
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    for (game, adv) in [(GameKind::Ri, "fuzz"), (GameKind::Unf, "pp-copy"), (GameKind::KInd, "neighbor-reveal")] {
        let a = run_game(game, adv, 10, 5, FAST).unwrap();
        let b = run_game(game, adv, 10, 5, FAST).unwrap();
        assert_eq!(a, b);
        let c = run_game(game, adv, 10, 6, FAST).unwrap();
        assert_ne!(a.transcript, c.transcript);
    }
}

#[test]
fn null_adversary_is_never_counted() {
    let r = run_game(GameKind::Ri, "null", 10, 1, FAST).unwrap();
    assert_eq!(r.invalid, 10);
    assert_eq!(r.valid(), 0);
    assert!(!r.meets_expectation());
}

#[test]
fn resubmitted_signature_is_excluded() {
    let r = run_game(GameKind::EufCma, "resubmit", 20, 1, FAST).unwrap();
    assert_eq!((r.wins, r.excluded), (0, 20));
}

#[test]
fn exposed_credential_wins_are_excluded() {
    let r = run_game(GameKind::Unf, "exposed-credential", 20, 1, FAST).unwrap();
    assert_eq!((r.wins, r.excluded), (0, 20));
    assert!(r.transcript.iter().any(|l| l.contains("q_expose_cred bob")));
}

#[test]
fn trivial_key_distinguisher_is_blocked_every_trial() {
    let r = run_game(GameKind::KInd, "trivial", 50, 2, FAST).unwrap();
    let blocked = r.transcript.iter().filter(|l| l.ends_with("-> blocked")).count();
    assert_eq!(blocked, 50);
    assert_eq!(r.invalid, 0);
}

#[test]
fn unknown_labels() {
    assert!(matches!(run_game(GameKind::Ri, "nope", 1, 1, FAST), Err(HarnessError::UnknownAdversary { .. })));
    assert!("ri-game".parse::<GameKind>().is_err());
    for g in GameKind::ALL {
        assert_eq!(g.name().parse::<GameKind>().unwrap(), g);
        assert_eq!(g.to_string().to_uppercase().replace('-', "_").parse::<GameKind>().unwrap(), g);
    }
}

#[test]
fn negative_control_is_recognised() {
    let r = run_game(GameKind::Unlink, "bytes", 50, 1, AbcScheme::SaltedHash).unwrap();
    assert!(r.is_negative_control());
    assert!(r.win_rate() > 0.9 && r.meets_expectation());
}

#[test]
fn presentation_judge_rules() {
    for scheme in [AbcScheme::SaltedHash, AbcScheme::RandomizableSig] {
        let mut env = AbcUnfEnv::new(scheme, 2, 9).unwrap();
        let attrs: AttributeMap = [("org", "ACME"), ("role", "dev")].into_iter().collect();
        let j = env.q_issue(0, &attrs).unwrap();
        let p = env.q_present(j, &acme(), b"h").unwrap();
        assert!(matches!(env.judge(0, &p, b"h"), Outcome::Excluded(_)));
        assert_eq!(env.judge(0, &p, b"other"), Outcome::Loss);
        assert_eq!(env.judge(1, &p, b"h"), Outcome::Loss);
        assert!(matches!(env.judge(7, &p, b"h"), Outcome::Invalid(_)));
    }
}
