//! The challenger's oracle environment shared by the group-level games.

use std::collections::{BTreeMap, BTreeSet};

use aacgka::aacgka::{AaCommit, AaError, AaProposal, GroupInfo, PkiDirectory, PresentationPackage, ReqChange, RequirementSet, UserState};
use aacgka::abc::{AbcScheme, AttributeMap, Credential};
use aacgka::cgka::KpType;
use aacgka::primitives::{hash, hash_concat, Digest};
use aacgka::wire::Wire;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("no entry at index {0}")]
    BadIndex(usize),
    #[error(transparent)]
    Protocol(#[from] AaError),
}

/// One oracle query, kept so a run can be replayed from scratch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleCall {
    Init { id: String, attrs: AttributeMap, issuer: String },
    Create { id: String, reqs: RequirementSet },
    Propose { id: String, target: String, prop_type: String },
    ProposeReqs { id: String, change: ReqChange },
    Commit { id: String, indices: Vec<usize> },
    Process { id: String, index: usize },
    PublishInfo { id: String },
    ExposeCred { id: String },
}

/// A user handed to the environment at setup.
#[derive(Debug, Clone)]
pub struct UserSpec {
    pub id: String,
    pub attrs: AttributeMap,
    pub issuer: String,
}

impl UserSpec {
    pub fn new(id: &str, attrs: &[(&str, &str)], issuer: &str) -> Self {
        UserSpec { id: id.to_owned(), attrs: attrs.iter().copied().collect(), issuer: issuer.to_owned() }
    }
}

pub const ISSUERS: [&str; 2] = ["uni", "gov"];

/// Users every group-level game starts from: three qualifying members of
/// one organization and an outsider holding a credential from a second
/// issuer.
pub fn standard_users() -> Vec<UserSpec> {
    vec![
        UserSpec::new("alice", &[("org", "ACME"), ("role", "admin")], "uni"),
        UserSpec::new("bob", &[("org", "ACME"), ("role", "dev")], "uni"),
        UserSpec::new("carol", &[("org", "ACME"), ("role", "ops")], "uni"),
        UserSpec::new("mallory", &[("org", "Other"), ("role", "dev")], "gov"),
    ]
}

pub fn acme_reqs() -> RequirementSet {
    [("r1", [("org", "ACME")].into_iter().collect::<AttributeMap>())].into_iter().collect()
}

pub struct GameEnv {
    pub(crate) pki: PkiDirectory,
    pub(crate) state: BTreeMap<String, UserState>,
    epoch: BTreeMap<String, u64>,
    props: Vec<(u64, AaProposal)>,
    comms: Vec<(u64, AaCommit)>,
    pp_list: Vec<PresentationPackage>,
    q_creds: Vec<Credential>,
    published: Option<GroupInfo>,
    pub(crate) rng: ChaCha20Rng,
    calls: Vec<OracleCall>,
    log: Vec<String>,
    setup: (AbcScheme, Vec<String>, Vec<UserSpec>, u64),
}

const MAX_ATTRS: usize = 8;

impl GameEnv {
    /// Registers the issuers and initializes every user.
    pub fn setup(scheme: AbcScheme, issuers: &[&str], users: &[UserSpec], seed: u64) -> Result<Self, OracleError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pki = PkiDirectory::init(scheme, issuers, MAX_ATTRS, &mut rng)?;
        let mut env = GameEnv {
            pki,
            state: BTreeMap::new(),
            epoch: BTreeMap::new(),
            props: Vec::new(),
            comms: Vec::new(),
            pp_list: Vec::new(),
            q_creds: Vec::new(),
            published: None,
            rng,
            calls: Vec::new(),
            log: Vec::new(),
            setup: (scheme, issuers.iter().map(|s| s.to_string()).collect(), users.to_vec(), seed),
        };
        for u in users {
            env.init_user(&u.id, &u.attrs, &u.issuer)?;
        }
        Ok(env)
    }

    pub fn standard(scheme: AbcScheme, seed: u64) -> Result<Self, OracleError> {
        GameEnv::setup(scheme, &ISSUERS, &standard_users(), seed)
    }

    fn init_user(&mut self, id: &str, attrs: &AttributeMap, issuer: &str) -> Result<(), OracleError> {
        if self.state.contains_key(id) {
            return Err(OracleError::Assertion(format!("state[{id}] already exists")));
        }
        let u = UserState::init(id, attrs, issuer, &self.pki, &mut self.rng)?;
        self.state.insert(id.to_owned(), u);
        Ok(())
    }

    fn user(&mut self, id: &str) -> Result<&mut UserState, OracleError> {
        self.state.get_mut(id).ok_or_else(|| OracleError::Assertion(format!("state[{id}] does not exist")))
    }

    fn record<T>(&mut self, call: OracleCall, out: Result<T, OracleError>, show: impl Fn(&T) -> String) -> Result<T, OracleError> {
        let line = match &out {
            Ok(v) => format!("{} -> {}", describe(&call), show(v)),
            Err(e) => format!("{} -> error: {e}", describe(&call)),
        };
        self.log.push(line);
        self.calls.push(call);
        out
    }

    /// Epoch tag for a commit made by `id`: the tracked epoch, or for someone
    /// not yet tracked, the epoch of the group they are committing into.
    fn tag(&self, id: &str) -> u64 {
        if let Some(e) = self.epoch.get(id) {
            return *e;
        }
        self.state.get(id).and_then(|u| u.state.ctx.as_ref().map(|c| c.epoch)).unwrap_or(0)
    }

    // --- oracles -----------------------------------------------------------

    pub fn q_init(&mut self, id: &str, attrs: &AttributeMap, issuer: &str) -> Result<(), OracleError> {
        let out = self.init_user(id, attrs, issuer);
        self.record(OracleCall::Init { id: id.into(), attrs: attrs.clone(), issuer: issuer.into() }, out, |_| "ok".into())
    }

    pub fn q_create(&mut self, id: &str, reqs: &RequirementSet) -> Result<(), OracleError> {
        let out = (|| {
            let mut rng = self.rng.clone();
            let r = self.user(id)?.create(reqs.clone(), &mut rng);
            self.rng = rng;
            r.map_err(OracleError::from)
        })();
        self.record(OracleCall::Create { id: id.into(), reqs: reqs.clone() }, out, |_| "ok".into())
    }

    /// For add, the group info comes from `id`; a join is made by the joiner
    /// itself from the most recently published group info.
    pub fn q_propose(&mut self, id: &str, target: &str, prop_type: &str) -> Result<(AaProposal, Option<PresentationPackage>), OracleError> {
        let out = self.propose_inner(id, target, prop_type);
        let n = self.props.len();
        self.record(OracleCall::Propose { id: id.into(), target: target.into(), prop_type: prop_type.into() }, out, |(_, pp)| {
            format!("prop #{} pp={}", n - 1, pp.is_some())
        })
    }

    fn propose_inner(&mut self, id: &str, target: &str, prop_type: &str) -> Result<(AaProposal, Option<PresentationPackage>), OracleError> {
        let mut rng = self.rng.clone();
        let pp = match prop_type {
            "add" | "join" => {
                let (gi, kp_type) = if prop_type == "add" {
                    (self.user(id)?.publish_info()?, KpType::Add)
                } else {
                    let gi = self.published.clone().ok_or_else(|| OracleError::Assertion("no published group info".into()))?;
                    (gi, KpType::Join)
                };
                let pp = self.user(target)?.present(&gi, kp_type, &mut rng)?;
                self.pp_list.push(pp.clone());
                Some(pp)
            }
            _ => None,
        };
        let prop = self.user(id)?.propose(target, prop_type, pp.as_ref(), &mut rng);
        self.rng = rng;
        let prop = prop?;
        let tag = self.tag(id);
        self.props.push((tag, prop.clone()));
        Ok((prop, pp))
    }

    pub fn q_propose_reqs(&mut self, id: &str, change: &ReqChange) -> Result<AaProposal, OracleError> {
        let out = (|| {
            let prop = AaProposal::Reqs(self.user(id)?.propose_reqs(change.clone())?);
            let tag = self.tag(id);
            self.props.push((tag, prop.clone()));
            Ok(prop)
        })();
        let n = self.props.len();
        self.record(OracleCall::ProposeReqs { id: id.into(), change: change.clone() }, out, |_| format!("prop #{}", n - 1))
    }

    pub fn q_commit(&mut self, id: &str, indices: &[usize]) -> Result<AaCommit, OracleError> {
        let out = (|| {
            let list = indices
                .iter()
                .map(|i| self.props.get(*i).map(|(_, p)| p.clone()).ok_or(OracleError::BadIndex(*i)))
                .collect::<Result<Vec<_>, _>>()?;
            let tag = self.tag(id);
            let mut rng = self.rng.clone();
            let pki = self.pki.clone();
            let c = self.user(id)?.commit(&list, &pki, &mut rng);
            self.rng = rng;
            let c = c?;
            self.comms.push((tag, c.clone()));
            Ok(c)
        })();
        let n = self.comms.len();
        self.record(OracleCall::Commit { id: id.into(), indices: indices.to_vec() }, out, |c| {
            format!("commit #{} sig={}", n - 1, hex::encode(&c.sig.0[..8]))
        })
    }

    /// Returns whether the commit was accepted.
    pub fn q_process(&mut self, id: &str, index: usize) -> Result<bool, OracleError> {
        let out = (|| {
            let (ep, c) = self.comms.get(index).cloned().ok_or(OracleError::BadIndex(index))?;
            match self.epoch.get(id) {
                Some(e) if *e != ep => return Err(OracleError::Assertion(format!("epoch[{id}] = {e} but commit is for {ep}"))),
                _ => {}
            }
            let pki = self.pki.clone();
            let ok = self.user(id)?.process(&c, &pki);
            if ok {
                self.epoch.insert(id.to_owned(), ep + 1);
            }
            Ok(ok)
        })();
        self.record(OracleCall::Process { id: id.into(), index }, out, |ok| format!("ok={ok}"))
    }

    pub fn q_publish_info(&mut self, id: &str) -> Result<GroupInfo, OracleError> {
        let out = (|| {
            let gi = self.user(id)?.publish_info()?;
            self.published = Some(gi.clone());
            Ok(gi)
        })();
        self.record(OracleCall::PublishInfo { id: id.into() }, out, |gi| format!("epoch={}", gi.ctx.epoch))
    }

    pub fn q_expose_cred(&mut self, id: &str) -> Result<Credential, OracleError> {
        let out = (|| {
            let cred = self.user(id)?.cred.clone();
            self.q_creds.push(cred.clone());
            Ok(cred)
        })();
        self.record(OracleCall::ExposeCred { id: id.into() }, out, |_| "revealed".into())
    }

    // --- public bookkeeping ------------------------------------------------

    pub fn commits(&self) -> &[(u64, AaCommit)] {
        &self.comms
    }

    pub fn proposals(&self) -> &[(u64, AaProposal)] {
        &self.props
    }

    pub fn pp_list(&self) -> &[PresentationPackage] {
        &self.pp_list
    }

    pub fn q_creds(&self) -> &[Credential] {
        &self.q_creds
    }

    pub fn epoch_of(&self, id: &str) -> Option<u64> {
        self.epoch.get(id).copied()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.state.keys().cloned().collect()
    }

    pub fn pki(&self) -> &PkiDirectory {
        &self.pki
    }

    pub fn calls(&self) -> &[OracleCall] {
        &self.calls
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    pub fn is_member(&self, id: &str) -> bool {
        self.state.get(id).is_some_and(UserState::is_member)
    }

    /// The epoch `id` is in, as commits made by it would be tagged.
    pub fn current_epoch(&self, id: &str) -> u64 {
        self.tag(id)
    }

    /// Challenger-side processing of an adversary's commit at `id`. Returns
    /// the requirements before and after, and whether it was accepted.
    pub(crate) fn challenger_process(&mut self, id: &str, c: &AaCommit) -> (RequirementSet, RequirementSet, bool) {
        let pki = self.pki.clone();
        let Some(u) = self.state.get_mut(id) else {
            return (RequirementSet::new(), RequirementSet::new(), false);
        };
        let before = u.reqs.clone();
        let ok = u.process(c, &pki);
        (before, u.reqs.clone(), ok)
    }

    /// Challenger-side propose and commit of an adversary-supplied package.
    /// Nothing is logged in the proposal or commit lists.
    pub(crate) fn challenger_commit(&mut self, id: &str, target: &str, prop_type: &str, pp: &PresentationPackage) -> Result<AaCommit, OracleError> {
        let mut rng = self.rng.clone();
        let pki = self.pki.clone();
        let u = self.user(id)?;
        let out = u.propose(target, prop_type, Some(pp), &mut rng).and_then(|prop| u.commit(&[prop], &pki, &mut rng));
        self.rng = rng;
        Ok(out?)
    }

    /// Processes at `id`; returns the member sets before and after.
    pub(crate) fn challenger_process_members(&mut self, id: &str, c: &AaCommit) -> (BTreeSet<String>, BTreeSet<String>, bool) {
        let pki = self.pki.clone();
        let Some(u) = self.state.get_mut(id) else {
            return (BTreeSet::new(), BTreeSet::new(), false);
        };
        let roster = |u: &UserState| u.state.members().map(|m| m.keys().cloned().collect()).unwrap_or_default();
        let before = roster(u);
        let ok = u.process(c, &pki);
        (before, roster(u), ok)
    }

    pub(crate) fn challenger_bit(&mut self) -> usize {
        (self.rng.next_u32() & 1) as usize
    }

    pub(crate) fn challenger_present(&mut self, id: &str, gi: &GroupInfo) -> Result<PresentationPackage, OracleError> {
        let mut rng = self.rng.clone();
        let out = self.user(id)?.present(gi, KpType::Add, &mut rng);
        self.rng = rng;
        Ok(out?)
    }

    pub(crate) fn note(&mut self, line: String) {
        self.log.push(line);
    }

    /// Digest over every user's observable state and the challenger's lists.
    pub fn state_digest(&self) -> Digest {
        let mut parts: Vec<Vec<u8>> = Vec::new();
        for (id, u) in &self.state {
            parts.push(id.as_bytes().to_vec());
            parts.push(self.epoch.get(id).map_or(vec![0xff], |e| e.to_be_bytes().to_vec()));
            parts.push(u.chal.clone());
            parts.push(u.reqs.to_wire());
            parts.push(u.state.epoch().to_be_bytes().to_vec());
            parts.push(u.state.epoch_secret().map_or(vec![], |s| hash(&s).0.to_vec()));
            parts.push(u.state.context().map_or(vec![], |c| c.roster_hash.0.to_vec()));
        }
        for (e, p) in &self.props {
            parts.push(e.to_be_bytes().to_vec());
            parts.push(p.to_wire());
        }
        for (e, c) in &self.comms {
            parts.push(e.to_be_bytes().to_vec());
            parts.push(c.to_wire());
        }
        parts.push((self.pp_list.len() as u64).to_be_bytes().to_vec());
        parts.push((self.q_creds.len() as u64).to_be_bytes().to_vec());
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        hash_concat(&refs)
    }

    /// Re-executes the recorded oracle calls in a fresh environment with the
    /// same setup and seed.
    pub fn replay(&self) -> Result<GameEnv, OracleError> {
        let (scheme, issuers, users, seed) = &self.setup;
        let issuers: Vec<&str> = issuers.iter().map(String::as_str).collect();
        let mut env = GameEnv::setup(*scheme, &issuers, users, *seed)?;
        for call in &self.calls {
            let _ = env.call(call);
        }
        Ok(env)
    }

    /// Dispatches a recorded call; the result payload is dropped.
    pub fn call(&mut self, call: &OracleCall) -> Result<(), OracleError> {
        match call {
            OracleCall::Init { id, attrs, issuer } => self.q_init(id, attrs, issuer),
            OracleCall::Create { id, reqs } => self.q_create(id, reqs),
            OracleCall::Propose { id, target, prop_type } => self.q_propose(id, target, prop_type).map(drop),
            OracleCall::ProposeReqs { id, change } => self.q_propose_reqs(id, change).map(drop),
            OracleCall::Commit { id, indices } => self.q_commit(id, indices).map(drop),
            OracleCall::Process { id, index } => self.q_process(id, *index).map(drop),
            OracleCall::PublishInfo { id } => self.q_publish_info(id).map(drop),
            OracleCall::ExposeCred { id } => self.q_expose_cred(id).map(drop),
        }
    }
}

fn describe(call: &OracleCall) -> String {
    match call {
        OracleCall::Init { id, attrs, issuer } => format!("q_init {id} {attrs} {issuer}"),
        OracleCall::Create { id, reqs } => format!("q_create {id} reqs={}", reqs.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(",")),
        OracleCall::Propose { id, target, prop_type } => format!("q_propose {id} {target} {prop_type}"),
        OracleCall::ProposeReqs { id, change } => format!("q_propose_reqs {id} {} {}", change.label(), change.req_id()),
        OracleCall::Commit { id, indices } => format!("q_commit {id} {indices:?}"),
        OracleCall::Process { id, index } => format!("q_process {id} #{index}"),
        OracleCall::PublishInfo { id } => format!("q_publish_info {id}"),
        OracleCall::ExposeCred { id } => format!("q_expose_cred {id}"),
    }
}
