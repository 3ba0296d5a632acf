use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::*;
use crate::test_oracle::reference_hash;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn attrs(pairs: &[(&str, &str)]) -> AttributeMap {
    pairs.iter().copied().collect()
}

fn acme_reqs() -> RequirementSet {
    [("r1", attrs(&[("org", "ACME")]))].into_iter().collect()
}

struct World {
    pki: PkiDirectory,
    users: Vec<UserState>,
    r: ChaCha20Rng,
}

impl World {
    fn new(seed: u64, scheme: AbcScheme) -> Self {
        let mut r = rng(seed);
        let pki = PkiDirectory::init(scheme, &["uni"], 8, &mut r).unwrap();
        World { pki, users: Vec::new(), r }
    }

    fn user(&mut self, id: &str, a: &[(&str, &str)]) -> usize {
        let u = UserState::init(id, &attrs(a), "uni", &self.pki, &mut self.r).unwrap();
        self.users.push(u);
        self.users.len() - 1
    }

    fn deliver(&mut self, c: &AaCommit) {
        for u in self.users.iter_mut() {
            if u.is_member() || c.w.is_some() || u.self_id == c.id {
                let before = u.is_member();
                let ok = u.process(c, &self.pki);
                if before {
                    assert!(ok, "{} rejected commit", u.self_id);
                }
            }
        }
    }

    fn add(&mut self, committer: usize, joiner: usize) -> AaCommit {
        let gi = self.users[committer].publish_info().unwrap();
        let pp = self.users[joiner].present(&gi, KpType::Add, &mut self.r).unwrap();
        let id = self.users[joiner].self_id.clone();
        let prop = self.users[committer].propose(&id, "add", Some(&pp), &mut self.r).unwrap();
        let c = self.users[committer].commit(&[prop], &self.pki, &mut self.r).unwrap();
        self.deliver(&c);
        assert!(self.users[joiner].is_member());
        c
    }

    fn external(&mut self, joiner: usize, via: usize) -> AaCommit {
        let gi = self.users[via].publish_info().unwrap();
        let pp = self.users[joiner].present(&gi, KpType::Join, &mut self.r).unwrap();
        let id = self.users[joiner].self_id.clone();
        let prop = self.users[joiner].propose(&id, "join", Some(&pp), &mut self.r).unwrap();
        let c = self.users[joiner].commit(&[prop], &self.pki, &mut self.r).unwrap();
        self.deliver(&c);
        assert!(self.users[joiner].is_member());
        c
    }

    fn commit(&mut self, committer: usize, props: &[AaProposal]) -> AaCommit {
        let c = self.users[committer].commit(props, &self.pki, &mut self.r).unwrap();
        self.deliver(&c);
        c
    }

    fn assert_agreement(&self) {
        let live: Vec<&UserState> = self.users.iter().filter(|u| u.is_member()).collect();
        for u in &live {
            assert_eq!(u.state.epoch_secret(), live[0].state.epoch_secret(), "{}", u.self_id);
            assert_eq!(u.chal, live[0].chal, "{}", u.self_id);
            assert_eq!(u.reqs, live[0].reqs, "{}", u.self_id);
            assert_eq!(u.state.context(), live[0].state.context(), "{}", u.self_id);
        }
    }
}

fn founded(seed: u64, scheme: AbcScheme) -> World {
    let mut w = World::new(seed, scheme);
    let a = w.user("alice", &[("org", "ACME"), ("role", "admin")]);
    w.users[a].create(acme_reqs(), &mut w.r.clone()).unwrap();
    w
}

#[test]
fn update_group_chal_known_answer() {
    let sig = Signature(std::array::from_fn(|i| i as u8));
    assert_eq!(hex::encode(update_group_chal(b"chal", &sig)), "b0492fe1fce8d719c286f4b158573d322f44569444fb1bab5e51742abc52118d");
    assert_eq!(hex::encode(update_group_chal(b"", &sig)), "fdeab9acf3710362bd2658cdc9a29e8f9c757fcf9811603a8c447cd1d9151108");
}

#[test]
fn reqs_met_picks_first_contained_requirement() {
    let reqs: RequirementSet = [
        ("b-admin", attrs(&[("role", "admin")])),
        ("a-acme", attrs(&[("org", "ACME"), ("country", "IS")])),
        ("c-open", AttributeMap::new()),
    ]
    .into_iter()
    .collect();
    let full = attrs(&[("org", "ACME"), ("country", "IS"), ("role", "admin")]);
    assert_eq!(reqs_met(&full, &reqs), Some(attrs(&[("org", "ACME"), ("country", "IS")])));
    assert_eq!(reqs_met(&attrs(&[("role", "admin")]), &reqs), Some(attrs(&[("role", "admin")])));
    assert_eq!(reqs_met(&AttributeMap::new(), &reqs), Some(AttributeMap::new()));
    assert_eq!(reqs_met(&full, &RequirementSet::new()), None);
}

const POOL: [(&str, &str); 4] = [("a", "1"), ("b", "2"), ("c", "3"), ("d", "4")];

fn subset(mask: u8) -> AttributeMap {
    POOL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, kv)| *kv).collect()
}

proptest! {
    #[test]
    fn reqs_met_agrees_with_exhaustive_search(masks in prop::collection::vec(0u8..16, 0..4), wrong in prop::collection::vec(any::<bool>(), 4)) {
        let reqs: RequirementSet = masks.iter().enumerate().map(|(i, m)| {
            let mut claims = subset(*m);
            // Some requirements ask for a value no subset can carry.
            if wrong[i] && !claims.is_empty() {
                let k = claims.iter().next().unwrap().0.to_owned();
                claims.insert(k, "x");
            }
            (format!("req{}", 3 - i), claims)
        }).collect();
        for mask in 0u8..16 {
            let held = subset(mask);
            let expected = reqs.iter().find(|(_, claims)| claims.iter().all(|(k, v)| held.get(k) == Some(v))).map(|(_, c)| c.clone());
            prop_assert_eq!(reqs_met(&held, &reqs), expected);
        }
    }
}

#[test]
fn add_then_external_join_reach_agreement() {
    for scheme in [AbcScheme::RandomizableSig, AbcScheme::SaltedHash] {
        let mut w = founded(1, scheme);
        let b = w.user("bob", &[("org", "ACME")]);
        let c = w.user("carol", &[("org", "ACME"), ("country", "IS")]);
        w.add(0, b);
        w.external(c, b);
        w.assert_agreement();
        assert_eq!(w.users[0].state.members().unwrap().len(), 3);
        let e = w.commit(c, &[]);
        assert!(e.w.is_none());
        w.assert_agreement();
        assert_eq!(w.users[0].state.epoch(), 3);
    }
}

#[test]
fn challenge_chain_matches_reference() {
    let mut w = founded(2, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    let c1 = w.add(0, b);
    let c2 = w.commit(b, &[]);
    let c3 = w.commit(0, &[]);
    let mut chal: Vec<u8> = Vec::new();
    for c in [&c1, &c2, &c3] {
        chal = reference_hash(&[&chal, &c.sig.0]).to_vec();
    }
    assert_eq!(w.users[0].chal, chal);
    assert_eq!(w.users[b].chal, chal);
}

#[test]
fn replayed_commit_is_rejected() {
    let mut w = founded(3, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    w.add(0, b);
    let c = w.commit(0, &[]);
    let before = w.users[b].clone();
    assert_eq!(w.users[b].try_process(&c, &w.pki).unwrap_err(), AaError::BadCommitSignature);
    assert_eq!(w.users[b].chal, before.chal);
    assert_eq!(w.users[b].state.epoch_secret(), before.state.epoch_secret());
}

#[test]
fn stale_presentation_is_rejected_with_its_index() {
    let mut w = founded(4, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    let gi = w.users[0].publish_info().unwrap();
    let pp = w.users[b].present(&gi, KpType::Add, &mut w.r).unwrap();
    assert!(w.users[0].validate_pp(&pp, &w.pki));
    let upd = w.users[0].propose("alice", "update", None, &mut w.r).unwrap();
    w.commit(0, &[upd]);
    assert!(!w.users[0].validate_pp(&pp, &w.pki));
    let empty = w.users[0].propose("alice", "update", None, &mut w.r).unwrap();
    let prop = w.users[0].propose("bob", "add", Some(&pp), &mut w.r).unwrap();
    let err = w.users[0].commit(&[empty, prop], &w.pki, &mut w.r).unwrap_err();
    assert!(matches!(err, AaError::InvalidProposal { index: 1, .. }), "{err:?}");
}

#[test]
fn unmet_requirements_stop_presentation_without_side_effects() {
    let mut w = founded(5, AbcScheme::RandomizableSig);
    let e = w.user("eve", &[("org", "Other")]);
    let gi = w.users[0].publish_info().unwrap();
    let before_ctx = w.users[e].state.context();
    assert_eq!(w.users[e].present(&gi, KpType::Join, &mut w.r).unwrap_err(), AaError::RequirementNotMet);
    assert_eq!(w.users[e].state.ctx, None);
    assert_eq!(w.users[e].state.context(), before_ctx);
    assert!(w.users[e].chal.is_empty() && w.users[e].reqs.is_empty());
    assert!(w.users[e].state.sig_public_key().is_none());
}

#[test]
fn admitted_members_disclose_only_the_requirement() {
    let mut w = founded(6, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME"), ("role", "intern"), ("country", "IS")]);
    let c = w.add(0, b);
    let admitted = c.admitted();
    assert_eq!(admitted.len(), 1);
    assert_eq!(admitted[0].0, "bob");
    assert_eq!(admitted[0].1.as_ref().unwrap().disc_attrs, attrs(&[("org", "ACME")]));
    let bytes = c.to_wire();
    for v in ["intern", "country"] {
        assert!(!bytes.windows(v.len()).any(|x| x == v.as_bytes()), "{v} leaked");
    }
}

#[test]
fn mismatched_presentation_package_fails() {
    let mut w = founded(7, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    let c = w.user("carol", &[("org", "ACME")]);
    let gi = w.users[0].publish_info().unwrap();
    let pb = w.users[b].present(&gi, KpType::Add, &mut w.r).unwrap();
    let pc = w.users[c].present(&gi, KpType::Add, &mut w.r).unwrap();
    assert!(w.users[0].validate_pp(&pb, &w.pki) && w.users[0].validate_pp(&pc, &w.pki));
    let spliced = PresentationPackage { p: pb.p.clone(), kp: pc.kp.clone() };
    assert!(!w.users[0].validate_pp(&spliced, &w.pki));
    let mut unknown = pb.clone();
    unknown.p.issuer_id = "nobody".into();
    assert!(!w.users[0].validate_pp(&unknown, &w.pki));
}

#[test]
fn join_proposals_target_only_their_creator() {
    let mut w = founded(8, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    let gi = w.users[0].publish_info().unwrap();
    let pp = w.users[b].present(&gi, KpType::Join, &mut w.r).unwrap();
    assert_eq!(w.users[b].propose("carol", "join", Some(&pp), &mut w.r).unwrap_err(), AaError::JoinForOther);
    assert_eq!(w.users[b].propose("bob", "add", None, &mut w.r).unwrap_err(), AaError::MissingPresentation);
}

#[test]
fn requirement_changes_apply_in_order() {
    let mut w = founded(9, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    w.add(0, b);
    let add = w.users[0].propose_reqs(ReqChange::Add { req_id: "r2".into(), claims: attrs(&[("role", "admin")]) }).unwrap();
    let rm = w.users[b].propose_reqs(ReqChange::Remove { req_id: "r1".into() }).unwrap();
    w.commit(0, &[AaProposal::Reqs(add.clone()), AaProposal::Reqs(rm)]);
    w.assert_agreement();
    assert_eq!(w.users[b].reqs, [("r2", attrs(&[("role", "admin")]))].into_iter().collect());

    // Adding an existing id or updating a missing one aborts the commit.
    let again = w.users[0].propose_reqs(ReqChange::Add { req_id: "r2".into(), claims: AttributeMap::new() }).unwrap();
    assert!(matches!(w.users[0].commit(&[AaProposal::Reqs(again)], &w.pki, &mut w.r), Err(AaError::RequirementUpdate(_))));
    let missing = w.users[0].propose_reqs(ReqChange::Update { req_id: "zz".into(), claims: AttributeMap::new() }).unwrap();
    assert!(matches!(w.users[0].commit(&[AaProposal::Reqs(missing)], &w.pki, &mut w.r), Err(AaError::RequirementUpdate(_))));

    // Bob no longer meets the requirements, so an outsider like him is refused.
    let d = w.user("dave", &[("org", "ACME")]);
    let gi = w.users[0].publish_info().unwrap();
    assert_eq!(w.users[d].present(&gi, KpType::Add, &mut w.r).unwrap_err(), AaError::RequirementNotMet);
}

#[test]
fn forged_requirement_proposal_is_rejected() {
    let mut w = founded(10, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    w.add(0, b);
    let mut p = w.users[b].propose_reqs(ReqChange::Add { req_id: "open".into(), claims: AttributeMap::new() }).unwrap();
    p.proposer = "alice".into();
    let err = w.users[0].commit(&[AaProposal::Reqs(p.clone())], &w.pki, &mut w.r).unwrap_err();
    assert!(matches!(err, AaError::InvalidProposal { index: 0, .. }));
    p.proposer = "mallory".into();
    assert!(w.users[0].commit(&[AaProposal::Reqs(p)], &w.pki, &mut w.r).is_err());
    let outsider = w.user("olive", &[]);
    assert_eq!(w.users[outsider].propose_reqs(ReqChange::Remove { req_id: "r1".into() }).unwrap_err(), AaError::NotMember);
}

#[test]
fn tampered_commit_is_rejected() {
    let mut w = founded(11, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    w.add(0, b);
    let mut c = w.users[0].clone().commit(&[], &w.pki, &mut w.r).unwrap();
    c.sig.0[5] ^= 1;
    assert!(!w.users[b].process(&c, &w.pki));
    let mut c = w.users[0].clone().commit(&[], &w.pki, &mut w.r).unwrap();
    c.id = "bob".into();
    assert!(!w.users[b].process(&c, &w.pki));
}

#[test]
fn removed_member_sees_removal() {
    let mut w = founded(12, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    w.add(0, b);
    let rm = w.users[0].propose("bob", "remove", None, &mut w.r).unwrap();
    let c = w.users[0].commit(&[rm], &w.pki, &mut w.r).unwrap();
    assert_eq!(w.users[b].try_process(&c, &w.pki).unwrap(), ProcessOutcome::Removed);
    assert!(!w.users[b].is_member());
    assert!(w.users[0].process(&c, &w.pki));
    assert_eq!(w.users[0].state.members().unwrap().len(), 1);
}

#[test]
fn outsider_cannot_process_a_commit_without_welcome() {
    let mut w = founded(13, AbcScheme::RandomizableSig);
    let o = w.user("olive", &[("org", "ACME")]);
    let c = w.commit(0, &[]);
    assert!(!w.users[o].process(&c, &w.pki));
    assert!(!w.users[o].is_member());
}

#[test]
fn messages_round_trip() {
    let mut w = founded(14, AbcScheme::RandomizableSig);
    let b = w.user("bob", &[("org", "ACME")]);
    let gi = w.users[0].publish_info().unwrap();
    assert_eq!(GroupInfo::from_wire(&gi.to_wire()).unwrap(), gi);
    let pp = w.users[b].present(&gi, KpType::Add, &mut w.r).unwrap();
    assert_eq!(PresentationPackage::from_wire(&pp.to_wire()).unwrap(), pp);
    let prop = w.users[0].propose("bob", "add", Some(&pp), &mut w.r).unwrap();
    assert_eq!(AaProposal::from_wire(&prop.to_wire()).unwrap(), prop);
    let req = w.users[0].propose_reqs(ReqChange::Update { req_id: "r1".into(), claims: attrs(&[("org", "ACME")]) }).unwrap();
    let req = AaProposal::Reqs(req);
    assert_eq!(AaProposal::from_wire(&req.to_wire()).unwrap(), req);
    let c = w.users[0].commit(&[prop, req], &w.pki, &mut w.r).unwrap();
    assert_eq!(AaCommit::from_wire(&c.to_wire()).unwrap(), c);
    let h = Header { chal: vec![1, 2], spk: SigPublicKey([3; 32]) };
    assert_eq!(Header::from_wire(&h.to_wire()).unwrap(), h);
}
