//! Executes scenario scripts against in-memory parties, a delivery service
//! and a group-info repository.

use std::collections::BTreeMap;

use aacgka::aacgka::{AaCommit, AaProposal, GroupInfo, PkiDirectory, PresentationPackage, RequirementSet, UserState};
use aacgka::abc::{AbcScheme, Credential};
use aacgka::cgka::{roster_hash, KpType};
use aacgka::primitives::hash;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::scenario::{Check, Command, PresentKind, ScenarioScript};

const MAX_ATTRS: usize = 8;
/// Bytes of a hash kept in transcript fingerprints.
const FINGERPRINT_LEN: usize = 8;

/// One published commit. Replays are fresh entries pointing at the original.
#[derive(Clone, Debug)]
pub struct Posted {
    pub group: Vec<u8>,
    pub commit: AaCommit,
    pub replay_of: Option<usize>,
}

/// Per-group total order of commits plus the latest group info per group.
#[derive(Clone, Debug, Default)]
pub struct DeliveryService {
    pub log: Vec<Posted>,
    pub infos: BTreeMap<Vec<u8>, GroupInfo>,
}

/// Public view of one party's state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateDigest {
    pub group: Vec<u8>,
    pub epoch: u64,
    pub chal: Vec<u8>,
    pub reqs: String,
    pub roster: String,
    pub secret: String,
}

impl StateDigest {
    fn of(u: &UserState) -> Option<Self> {
        let s = &u.state;
        let secret = s.epoch_secret()?;
        Some(StateDigest {
            group: s.group_id()?.to_vec(),
            epoch: s.epoch(),
            chal: u.chal.clone(),
            reqs: hex::encode(&u.reqs.digest().0[..FINGERPRINT_LEN]),
            roster: hex::encode(&roster_hash(s.members()?).0[..FINGERPRINT_LEN]),
            secret: hex::encode(&hash(&secret).0[..FINGERPRINT_LEN]),
        })
    }

    /// Everything but the group id, as printed in the transcript.
    pub fn line(&self) -> String {
        format!("epoch={} chal={} reqs={} roster={} secret={}", self.epoch, hex::encode(&self.chal), self.reqs, self.roster, self.secret)
    }
}

pub struct Runner {
    pub pki: PkiDirectory,
    pub users: BTreeMap<String, UserState>,
    pub ds: DeliveryService,
    scheme: AbcScheme,
    rng: ChaCha20Rng,
    /// Next log position each party has yet to see.
    cursor: BTreeMap<String, usize>,
    /// Outstanding packages by presenter.
    packages: BTreeMap<String, PresentationPackage>,
    /// Uncommitted proposals per group, with their proposer.
    pool: BTreeMap<Vec<u8>, Vec<(String, AaProposal)>>,
    pub transcript: Vec<String>,
    pub failed_asserts: usize,
}

pub struct Outcome {
    pub transcript: Vec<String>,
    pub failed_asserts: usize,
}

impl Outcome {
    pub fn text(&self) -> String {
        self.transcript.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn success(&self) -> bool {
        self.failed_asserts == 0
    }
}

/// Runs a script under the default credential scheme.
pub fn run_scenario(script: &ScenarioScript, seed: u64) -> Outcome {
    run_scenario_with(script, seed, AbcScheme::RandomizableSig)
}

pub fn run_scenario_with(script: &ScenarioScript, seed: u64, scheme: AbcScheme) -> Outcome {
    let mut r = Runner::new(seed, scheme);
    r.run(script);
    Outcome { transcript: r.transcript, failed_asserts: r.failed_asserts }
}

/// Group a party belongs to or is joining.
fn target_group(u: &UserState) -> Option<Vec<u8>> {
    match u.state.group_id() {
        Some(g) => Some(g.to_vec()),
        None => u.state.ctx.as_ref().map(|c| c.group_id.clone()),
    }
}

fn gid_text(g: &[u8]) -> String {
    hex::encode(&g[..g.len().min(FINGERPRINT_LEN)])
}

impl Runner {
    pub fn new(seed: u64, scheme: AbcScheme) -> Self {
        Runner {
            pki: PkiDirectory::default(),
            users: BTreeMap::new(),
            ds: DeliveryService::default(),
            scheme,
            rng: ChaCha20Rng::seed_from_u64(seed),
            cursor: BTreeMap::new(),
            packages: BTreeMap::new(),
            pool: BTreeMap::new(),
            transcript: Vec::new(),
            failed_asserts: 0,
        }
    }

    fn emit(&mut self, line: String) {
        self.transcript.push(line);
    }

    pub fn run(&mut self, script: &ScenarioScript) {
        for line in &script.lines {
            self.emit(format!("> {}: {}", line.number, line.command));
            if let Err(e) = self.step(&line.command) {
                self.emit(format!("error {e}"));
            }
        }
    }

    /// Digest of every party currently in a group.
    pub fn digests(&self) -> BTreeMap<String, StateDigest> {
        self.users.iter().filter_map(|(id, u)| StateDigest::of(u).map(|d| (id.clone(), d))).collect()
    }

    fn user(&mut self, id: &str) -> Result<&mut UserState, String> {
        self.users.get_mut(id).ok_or_else(|| format!("unknown actor {id}"))
    }

    fn group_of(&self, id: &str) -> Option<Vec<u8>> {
        let u = self.users.get(id)?;
        u.state.group_id().map(<[u8]>::to_vec)
    }

    fn add_user(&mut self, id: &str, u: UserState) {
        self.users.insert(id.to_owned(), u);
        self.cursor.insert(id.to_owned(), self.ds.log.len());
    }

    fn step(&mut self, cmd: &Command) -> Result<(), String> {
        let mut rng = self.rng.clone();
        let out = self.dispatch(cmd, &mut rng);
        self.rng = rng;
        out
    }

    fn dispatch(&mut self, cmd: &Command, rng: &mut ChaCha20Rng) -> Result<(), String> {
        match cmd {
            Command::Init { actor, issuer, attrs } => {
                self.pki.register(issuer, self.scheme, MAX_ATTRS, rng).map_err(|e| e.to_string())?;
                let u = UserState::init(actor, attrs, issuer, &self.pki, rng).map_err(|e| e.to_string())?;
                self.add_user(actor, u);
                self.emit(format!("init {actor} issuer={issuer} attrs={attrs}"));
            }
            Command::Create { actor, reqs } => {
                let reqs: RequirementSet = reqs.iter().cloned().collect();
                self.user(actor)?.create(reqs, rng).map_err(|e| e.to_string())?;
                let gid = self.group_of(actor).expect("just created");
                self.emit(format!("create {actor} group={}", gid_text(&gid)));
                self.digest_line(actor);
            }
            Command::Publish { actor } => {
                let gi = self.user(actor)?.publish_info().map_err(|e| e.to_string())?;
                self.emit(format!("publish {actor} group={} epoch={} chal={}", gid_text(&gi.ctx.group_id), gi.ctx.epoch, hex::encode(&gi.chal)));
                self.ds.infos.insert(gi.ctx.group_id.clone(), gi);
            }
            Command::Present { actor, publisher, kind } => {
                let gid = self.group_of(publisher).ok_or_else(|| format!("{publisher} is not in a group"))?;
                let gi = self.ds.infos.get(&gid).cloned().ok_or("no published group info")?;
                let kp_type = if *kind == PresentKind::Add { KpType::Add } else { KpType::Join };
                let pp = self.user(actor)?.present(&gi, kp_type, rng).map_err(|e| e.to_string())?;
                self.emit(format!("present {actor} {} disclosed={}", kp_type.label(), pp.p.disc_attrs));
                self.packages.insert(actor.clone(), pp);
            }
            Command::Propose { actor, prop_type, target } => {
                let pp = match prop_type.as_str() {
                    "add" | "join" => Some(self.packages.get(target).cloned().ok_or_else(|| format!("{target} has no package"))?),
                    _ => None,
                };
                let u = self.user(actor)?;
                let prop = u.propose(target, prop_type, pp.as_ref(), rng).map_err(|e| e.to_string())?;
                let gid = target_group(u).ok_or("proposer has no group context")?;
                let pool = self.pool.entry(gid).or_default();
                pool.push((actor.clone(), prop));
                let n = pool.len();
                self.emit(format!("propose {actor} {prop_type} {target} pending={n}"));
            }
            Command::ProposeReqs { actor, change } => {
                let u = self.user(actor)?;
                let prop = u.propose_reqs(change.clone()).map_err(|e| e.to_string())?;
                let gid = u.state.group_id().expect("members have a group").to_vec();
                let pool = self.pool.entry(gid).or_default();
                pool.push((actor.clone(), AaProposal::Reqs(prop)));
                let n = pool.len();
                self.emit(format!("propose_reqs {actor} {} {} pending={n}", change.label(), change.req_id()));
            }
            Command::Commit { actor } => self.commit(actor, rng)?,
            Command::ProcessAll => self.process_all(),
            Command::Replay { index } => {
                let orig = self.ds.log.get(*index).cloned().ok_or_else(|| format!("no commit #{index}"))?;
                let n = self.ds.log.len();
                self.ds.log.push(Posted { replay_of: Some(*index), ..orig });
                self.emit(format!("replay #{index} -> #{n}"));
            }
            Command::Expose { actor, holder } => {
                let u = self.user(actor)?;
                let (ipk, cred): (_, Credential) = (u.ipk.clone(), u.cred.clone());
                let h = UserState::from_credential(holder, ipk, cred, rng).map_err(|e| e.to_string())?;
                self.emit(format!("expose {actor} -> {holder} attrs={}", h.attrs));
                self.add_user(holder, h);
            }
            Command::AssertState { actor, check } => {
                let u = self.user(actor)?;
                let (ok, seen) = match check {
                    Check::Epoch(n) => (u.is_member() && u.state.epoch() == *n, format!("epoch={}", u.state.epoch())),
                    Check::Member(id) => (u.state.member(id).is_some(), format!("member({id})={}", u.state.member(id).is_some())),
                    Check::NotMember(id) => (u.state.member(id).is_none(), format!("member({id})={}", u.state.member(id).is_some())),
                    Check::HasReq(id) => (u.reqs.contains(id), format!("has_req({id})={}", u.reqs.contains(id))),
                    Check::NoReq(id) => (!u.reqs.contains(id), format!("has_req({id})={}", u.reqs.contains(id))),
                    Check::InGroup => (u.is_member(), format!("in_group={}", u.is_member())),
                    Check::Outside => (!u.is_member(), format!("in_group={}", u.is_member())),
                };
                self.assert_line(ok, format!("{actor} {seen}"));
            }
            Command::AssertAgree => {
                let mut by_group: BTreeMap<Vec<u8>, Vec<StateDigest>> = BTreeMap::new();
                for d in self.digests().into_values() {
                    by_group.entry(d.group.clone()).or_default().push(d);
                }
                let ok = by_group.values().all(|ds| ds.windows(2).all(|w| w[0] == w[1]));
                self.assert_line(ok, format!("agree groups={}", by_group.len()));
            }
        }
        Ok(())
    }

    fn assert_line(&mut self, ok: bool, what: String) {
        if !ok {
            self.failed_asserts += 1;
        }
        self.emit(format!("assert {} {what}", if ok { "ok" } else { "FAILED" }));
    }

    fn commit(&mut self, actor: &str, rng: &mut ChaCha20Rng) -> Result<(), String> {
        let u = self.users.get(actor).ok_or_else(|| format!("unknown actor {actor}"))?;
        let gid = target_group(u).ok_or("committer has no group context")?;
        let external = !u.is_member();
        let reqs_before = u.reqs.clone();
        let pending = self.pool.get(&gid).cloned().unwrap_or_default();
        // An outsider commits only its own join.
        let props: Vec<AaProposal> = pending.into_iter().filter(|(who, _)| !external || who == actor).map(|(_, p)| p).collect();
        let c = {
            let pki = &self.pki;
            let u = self.users.get_mut(actor).expect("checked");
            u.commit(&props, pki, rng).map_err(|e| e.to_string())?
        };
        self.pool.remove(&gid);
        let n = self.ds.log.len();
        self.emit(format!(
            "commit {actor} -> #{n} proposals={} reqs_changes={} welcome={}",
            c.c_basic.proposals.len(),
            c.c_reqs.len(),
            c.w.is_some()
        ));
        for (id, p) in c.admitted() {
            let Some(p) = p else { continue };
            let exact = reqs_before.iter().find(|(_, claims)| **claims == p.disc_attrs).map(|(rid, _)| rid.to_owned());
            self.emit(format!("admit #{n} {id} disclosed={} exact={}", p.disc_attrs, exact.as_deref().unwrap_or("none")));
        }
        self.ds.log.push(Posted { group: gid, commit: c, replay_of: None });
        Ok(())
    }

    fn recipient(u: &UserState, posted: &Posted) -> bool {
        if u.is_member() {
            return u.state.group_id() == Some(posted.group.as_slice());
        }
        posted.commit.id == u.self_id || posted.commit.admitted().iter().any(|(id, _)| *id == u.self_id)
    }

    /// Hands every party the commits it has not seen, in log order.
    fn process_all(&mut self) {
        let end = self.ds.log.len();
        let ids: Vec<String> = self.users.keys().cloned().collect();
        for i in 0..end {
            let posted = self.ds.log[i].clone();
            let tag = match posted.replay_of {
                Some(orig) => format!("#{i} (replay of #{orig})"),
                None => format!("#{i}"),
            };
            for id in &ids {
                if self.cursor[id] > i {
                    continue;
                }
                let u = self.users.get_mut(id).expect("known");
                if !Self::recipient(u, &posted) {
                    continue;
                }
                let line = match u.try_process(&posted.commit, &self.pki) {
                    Ok(outcome) => format!("process {id} {tag} ok=true outcome={outcome:?}"),
                    Err(e) => format!("process {id} {tag} ok=false reason={e}"),
                };
                self.emit(line);
            }
        }
        for id in &ids {
            self.cursor.insert(id.clone(), end);
            self.digest_line(id);
        }
    }

    fn digest_line(&mut self, id: &str) {
        if let Some(d) = self.users.get(id).and_then(StateDigest::of) {
            self.emit(format!("digest {id} group={} {}", gid_text(&d.group), d.line()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn run(text: &str) -> Outcome {
        run_scenario(&parse_scenario(text).unwrap(), 1)
    }

    const ADD: &str = "init alice uni org=ACME role=admin\ninit bob uni org=ACME role=dev\n\
                       create alice r1:org=ACME\npublish alice\npresent bob alice add\npropose alice add bob\n\
                       commit alice\nprocess_all\n";

    #[test]
    fn add_flow_agrees() {
        let out = run(&format!("{ADD}assert_state bob in_group\nassert_state bob epoch 1\nassert_state agree\n"));
        assert!(out.success(), "{}", out.text());
        assert!(out.text().contains("admit #0 bob disclosed={org=ACME} exact=r1"));
    }

    #[test]
    fn failed_assert_is_counted() {
        let out = run(&format!("{ADD}assert_state bob epoch 7\n"));
        assert_eq!(out.failed_asserts, 1);
        assert!(out.text().contains("assert FAILED bob epoch=1"));
    }

    #[test]
    fn protocol_errors_are_recorded_not_fatal() {
        let out = run("init alice uni org=ACME\ninit mallory gov org=Other\ncreate alice r1:org=ACME\npublish alice\n\
                       present mallory alice add\nassert_state mallory outside\n");
        assert!(out.success());
        assert!(out.text().contains("error "), "{}", out.text());
    }

    #[test]
    fn replay_rejected_by_every_member() {
        let out = run(&format!("{ADD}replay 0\nprocess_all\n"));
        let replayed: Vec<&String> = out.transcript.iter().filter(|l| l.contains("(replay of #0)")).collect();
        assert_eq!(replayed.len(), 2, "{}", out.text());
        assert!(replayed.iter().all(|l| l.contains("ok=false")));
    }

    #[test]
    fn exposed_credential_holder_can_present() {
        let out = run(&format!("{ADD}expose bob eve\npublish alice\npresent eve alice add\npropose alice add eve\ncommit alice\nprocess_all\nassert_state eve in_group\n"));
        assert!(out.success(), "{}", out.text());
    }

    #[test]
    fn transcript_has_no_raw_secret() {
        let script = parse_scenario(ADD).unwrap();
        let mut r = Runner::new(1, AbcScheme::RandomizableSig);
        r.run(&script);
        let secret = hex::encode(r.users["alice"].state.epoch_secret().unwrap());
        assert!(!r.transcript.iter().any(|l| l.contains(&secret[..16])));
    }
}
