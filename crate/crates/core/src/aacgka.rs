//! Requirement-gated group membership.
//!
//! A group publishes requirements (claim sets). An outsider joins by showing
//! a presentation that discloses exactly one requirement's claims, bound to
//! the group's current challenge and to a fresh signature key that also signs
//! the outsider's key package. Every processed commit folds its signature into
//! the challenge, so presentations and commits from earlier epochs stop
//! verifying.

use std::collections::BTreeMap;

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::abc::{
    abc_prove, abc_verify_proof, AbcError, AbcScheme, AttributeMap, Credential, IssuerKeyPair, IssuerPublicKey, Presentation,
};
use crate::cgka::{
    CgkaCommit, CgkaError, CgkaState, GroupContext, KeyPackage, KpType, ProcessOutcome, Proposal, ProposalBody, Welcome,
};
use crate::primitives::{hash_concat, sig_keygen, sig_verify, SigKeyPair, SigPublicKey, Signature};
use crate::wire::{list_of, Node, Wire, WireError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AaError {
    #[error("unknown issuer {0}")]
    UnknownIssuer(String),
    #[error("credential error: {0}")]
    Credential(#[from] AbcError),
    #[error("group key agreement error: {0}")]
    Cgka(#[from] CgkaError),
    #[error("attributes meet none of the group's requirements")]
    RequirementNotMet,
    #[error("group info is inconsistent")]
    MalformedGroupInfo,
    #[error("a join proposal can only target its creator")]
    JoinForOther,
    #[error("not a member of a group")]
    NotMember,
    #[error("add and join proposals need a presentation package")]
    MissingPresentation,
    #[error("proposal {index} rejected: {reason}")]
    InvalidProposal { index: usize, reason: String },
    #[error("requirement update rejected: {0}")]
    RequirementUpdate(String),
    #[error("commit signature does not verify")]
    BadCommitSignature,
    #[error("malformed message: {0}")]
    Malformed(String),
}

// ---------------------------------------------------------------------------
// Requirements

/// Requirements keyed by id, iterated in lexicographic id order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RequirementSet(BTreeMap<String, AttributeMap>);

impl RequirementSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, req_id: impl Into<String>, claims: AttributeMap) -> Option<AttributeMap> {
        self.0.insert(req_id.into(), claims)
    }

    pub fn get(&self, req_id: &str) -> Option<&AttributeMap> {
        self.0.get(req_id)
    }

    pub fn contains(&self, req_id: &str) -> bool {
        self.0.contains_key(req_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AttributeMap)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn digest(&self) -> crate::primitives::Digest {
        crate::primitives::hash(&self.to_wire())
    }
}

impl<K: Into<String>> FromIterator<(K, AttributeMap)> for RequirementSet {
    fn from_iter<I: IntoIterator<Item = (K, AttributeMap)>>(iter: I) -> Self {
        RequirementSet(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl Wire for RequirementSet {
    fn to_node(&self) -> Node {
        Node::map(self.0.iter().map(|(k, v)| (k.clone(), v.to_node())))
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        node.as_map()?.iter().map(|(k, v)| Ok((k.clone(), AttributeMap::from_node(v)?))).collect()
    }
}

/// First requirement (in set order) whose claims all appear in `attrs`;
/// the returned disclosure is exactly that requirement's claims.
pub fn reqs_met(attrs: &AttributeMap, reqs: &RequirementSet) -> Option<AttributeMap> {
    reqs.iter().find(|(_, claims)| attrs.contains_all(claims)).map(|(_, claims)| claims.clone())
}

// ---------------------------------------------------------------------------
// PKI

/// Issuer directory shared by all parties.
#[derive(Clone, Debug, Default)]
pub struct PkiDirectory {
    issuers: BTreeMap<String, IssuerKeyPair>,
}

impl PkiDirectory {
    pub fn init<R: RngCore + CryptoRng>(
        scheme: AbcScheme,
        issuer_ids: &[&str],
        max_attrs: usize,
        rng: &mut R,
    ) -> Result<Self, AaError> {
        let mut pki = PkiDirectory::default();
        for id in issuer_ids {
            pki.register(id, scheme, max_attrs, rng)?;
        }
        Ok(pki)
    }

    /// Adds an issuer; an already registered id keeps its original keys.
    pub fn register<R: RngCore + CryptoRng>(&mut self, id: &str, scheme: AbcScheme, max_attrs: usize, rng: &mut R) -> Result<(), AaError> {
        if !self.issuers.contains_key(id) {
            self.issuers.insert(id.to_owned(), IssuerKeyPair::generate(scheme, max_attrs, rng)?);
        }
        Ok(())
    }

    pub fn issuer_ids(&self) -> impl Iterator<Item = &str> {
        self.issuers.keys().map(String::as_str)
    }

    pub fn ipk(&self, issuer: &str) -> Result<&IssuerPublicKey, AaError> {
        self.issuers.get(issuer).map(|k| &k.ipk).ok_or_else(|| AaError::UnknownIssuer(issuer.to_owned()))
    }

    pub fn issue<R: RngCore + CryptoRng>(
        &self,
        attrs: &AttributeMap,
        issuer: &str,
        rng: &mut R,
    ) -> Result<(IssuerPublicKey, Credential), AaError> {
        let ik = self.issuers.get(issuer).ok_or_else(|| AaError::UnknownIssuer(issuer.to_owned()))?;
        Ok((ik.ipk.clone(), ik.issue(issuer, attrs, rng)?))
    }

    pub fn get_ipk(&self, p: &Presentation) -> Result<&IssuerPublicKey, AaError> {
        self.ipk(&p.issuer_id)
    }
}

// ---------------------------------------------------------------------------
// Messages

/// Presentation header: the group challenge and the joiner's signature key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub chal: Vec<u8>,
    pub spk: SigPublicKey,
}

impl Wire for Header {
    fn to_node(&self) -> Node {
        Node::List(vec![Node::text("aacgka/header"), Node::bytes(&self.chal), self.spk.to_node()])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("header", 3)?;
        f.label("aacgka/header")?;
        Ok(Header { chal: f.bytes()?, spk: f.decode()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresentationPackage {
    pub p: Presentation,
    pub kp: KeyPackage,
}

impl Wire for PresentationPackage {
    fn to_node(&self) -> Node {
        Node::List(vec![self.p.to_node(), self.kp.to_node()])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("presentation package", 2)?;
        Ok(PresentationPackage { p: f.decode()?, kp: f.decode()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReqChange {
    Add { req_id: String, claims: AttributeMap },
    Update { req_id: String, claims: AttributeMap },
    Remove { req_id: String },
}

impl ReqChange {
    pub fn req_id(&self) -> &str {
        match self {
            ReqChange::Add { req_id, .. } | ReqChange::Update { req_id, .. } | ReqChange::Remove { req_id } => req_id,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ReqChange::Add { .. } => "add",
            ReqChange::Update { .. } => "update",
            ReqChange::Remove { .. } => "remove",
        }
    }

    fn claims(&self) -> Option<&AttributeMap> {
        match self {
            ReqChange::Add { claims, .. } | ReqChange::Update { claims, .. } => Some(claims),
            ReqChange::Remove { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReqProposal {
    pub proposer: String,
    pub change: ReqChange,
    pub sig: Signature,
}

fn req_tbs(proposer: &str, change: &ReqChange) -> Vec<u8> {
    Node::List(vec![
        Node::text("aacgka/req-proposal"),
        Node::text(proposer),
        Node::text(change.label()),
        Node::text(change.req_id()),
        Node::opt(change.claims(), Wire::to_node),
    ])
    .encode()
}

impl ReqProposal {
    pub fn tbs(&self) -> Vec<u8> {
        req_tbs(&self.proposer, &self.change)
    }
}

impl Wire for ReqProposal {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::text(&self.proposer),
            Node::text(self.change.label()),
            Node::text(self.change.req_id()),
            Node::opt(self.change.claims(), Wire::to_node),
            self.sig.to_node(),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("requirement proposal", 5)?;
        let proposer = f.text()?;
        let kind = f.text()?;
        let req_id = f.text()?;
        let claims: Option<AttributeMap> = f.decode_opt()?;
        let change = match (kind.as_str(), claims) {
            ("add", Some(claims)) => ReqChange::Add { req_id, claims },
            ("update", Some(claims)) => ReqChange::Update { req_id, claims },
            ("remove", None) => ReqChange::Remove { req_id },
            _ => return Err(WireError::shape("requirement proposal fields do not match its type")),
        };
        Ok(ReqProposal { proposer, change, sig: f.decode()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AaProposal {
    Basic(Proposal),
    Reqs(ReqProposal),
}

impl Wire for AaProposal {
    fn to_node(&self) -> Node {
        match self {
            AaProposal::Basic(p) => Node::List(vec![Node::text("basic"), p.to_node()]),
            AaProposal::Reqs(p) => Node::List(vec![Node::text("reqs"), p.to_node()]),
        }
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("proposal", 2)?;
        match f.text()?.as_str() {
            "basic" => Ok(AaProposal::Basic(f.decode()?)),
            "reqs" => Ok(AaProposal::Reqs(f.decode()?)),
            other => Err(WireError::shape(format!("unknown proposal kind {other}"))),
        }
    }
}

/// Welcome wrapper carried in a commit that adds members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WelcomeWrapper {
    pub welcome: Welcome,
    pub committer: String,
    /// Requirements after this commit's requirement changes.
    pub reqs: RequirementSet,
    /// Challenge the commit was signed under.
    pub chal: Vec<u8>,
}

impl Wire for WelcomeWrapper {
    fn to_node(&self) -> Node {
        Node::List(vec![self.welcome.to_node(), Node::text(&self.committer), self.reqs.to_node(), Node::bytes(&self.chal)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("welcome wrapper", 4)?;
        Ok(WelcomeWrapper { welcome: f.decode()?, committer: f.text()?, reqs: f.decode()?, chal: f.bytes()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AaCommit {
    pub id: String,
    pub c_basic: CgkaCommit,
    pub c_reqs: Vec<ReqProposal>,
    pub w: Option<WelcomeWrapper>,
    pub sig: Signature,
}

pub fn commit_tbs(id: &str, c_basic: &CgkaCommit, c_reqs: &[ReqProposal], w: Option<&WelcomeWrapper>, chal: &[u8]) -> Vec<u8> {
    Node::List(vec![
        Node::text("aacgka/commit"),
        Node::text(id),
        c_basic.to_node(),
        list_of(c_reqs),
        Node::opt(w, Wire::to_node),
        Node::bytes(chal),
    ])
    .encode()
}

impl AaCommit {
    pub fn tbs(&self, chal: &[u8]) -> Vec<u8> {
        commit_tbs(&self.id, &self.c_basic, &self.c_reqs, self.w.as_ref(), chal)
    }

    /// Members inserted by this commit, with the presentation each one showed.
    pub fn admitted(&self) -> Vec<(String, Option<Presentation>)> {
        self.c_basic
            .proposals
            .iter()
            .filter_map(|p| match &p.body {
                ProposalBody::Add { id, .. } | ProposalBody::Join { id, .. } => {
                    Some((id.clone(), p.attachment.as_deref().and_then(|b| Presentation::from_wire(b).ok())))
                }
                _ => None,
            })
            .collect()
    }
}

impl Wire for AaCommit {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::text(&self.id),
            self.c_basic.to_node(),
            list_of(&self.c_reqs),
            Node::opt(self.w.as_ref(), Wire::to_node),
            self.sig.to_node(),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("commit", 5)?;
        Ok(AaCommit { id: f.text()?, c_basic: f.decode()?, c_reqs: f.decode_list()?, w: f.decode_opt()?, sig: f.decode()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupInfo {
    pub ctx: GroupContext,
    pub chal: Vec<u8>,
    pub reqs: RequirementSet,
}

impl Wire for GroupInfo {
    fn to_node(&self) -> Node {
        Node::List(vec![self.ctx.to_node(), Node::bytes(&self.chal), self.reqs.to_node()])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("group info", 3)?;
        Ok(GroupInfo { ctx: f.decode()?, chal: f.bytes()?, reqs: f.decode()? })
    }
}

pub fn update_group_chal(chal: &[u8], sig: &Signature) -> Vec<u8> {
    hash_concat(&[chal, &sig.0]).0.to_vec()
}

/// Applies requirement changes in order.
pub fn update_reqs(reqs: &RequirementSet, props: &[ReqProposal]) -> Result<RequirementSet, AaError> {
    let mut out = reqs.clone();
    for p in props {
        match &p.change {
            ReqChange::Add { req_id, claims } => {
                if out.contains(req_id) {
                    return Err(AaError::RequirementUpdate(format!("{req_id} already exists")));
                }
                out.insert(req_id.clone(), claims.clone());
            }
            ReqChange::Update { req_id, claims } => {
                if !out.contains(req_id) {
                    return Err(AaError::RequirementUpdate(format!("{req_id} does not exist")));
                }
                out.insert(req_id.clone(), claims.clone());
            }
            ReqChange::Remove { req_id } => {
                out.0.remove(req_id);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// User state

/// One party's protocol state.
#[derive(Clone, Debug)]
pub struct UserState {
    pub self_id: String,
    pub attrs: AttributeMap,
    pub issuer: String,
    pub ipk: IssuerPublicKey,
    pub cred: Credential,
    pub chal: Vec<u8>,
    pub reqs: RequirementSet,
    pub state: CgkaState,
    /// Signature keys of outstanding presentations, by public key.
    presented_keys: BTreeMap<SigPublicKey, SigKeyPair>,
}

fn reject(index: usize, reason: impl Into<String>) -> AaError {
    AaError::InvalidProposal { index, reason: reason.into() }
}

impl UserState {
    pub fn init<R: RngCore + CryptoRng>(
        id: &str,
        attrs: &AttributeMap,
        issuer: &str,
        pki: &PkiDirectory,
        rng: &mut R,
    ) -> Result<Self, AaError> {
        let (ipk, cred) = pki.issue(attrs, issuer, rng)?;
        Ok(UserState {
            self_id: id.to_owned(),
            attrs: attrs.clone(),
            issuer: issuer.to_owned(),
            ipk,
            cred,
            chal: Vec::new(),
            reqs: RequirementSet::new(),
            state: CgkaState::init(id, rng)?,
            presented_keys: BTreeMap::new(),
        })
    }

    /// State around a credential obtained elsewhere.
    pub fn from_credential<R: RngCore + CryptoRng>(id: &str, ipk: IssuerPublicKey, cred: Credential, rng: &mut R) -> Result<Self, AaError> {
        Ok(UserState {
            self_id: id.to_owned(),
            attrs: cred.attrs.clone(),
            issuer: cred.issuer_id.clone(),
            ipk,
            cred,
            chal: Vec::new(),
            reqs: RequirementSet::new(),
            state: CgkaState::init(id, rng)?,
            presented_keys: BTreeMap::new(),
        })
    }

    pub fn is_member(&self) -> bool {
        self.state.in_group()
    }

    pub fn create<R: RngCore + CryptoRng>(&mut self, reqs: RequirementSet, rng: &mut R) -> Result<(), AaError> {
        if self.state.in_group() {
            return Err(CgkaError::AlreadyInGroup.into());
        }
        self.state.set_sig_keypair(sig_keygen(rng));
        self.chal = Vec::new();
        self.reqs = reqs;
        self.state.create(rng)?;
        Ok(())
    }

    pub fn publish_info(&self) -> Result<GroupInfo, AaError> {
        let ctx = self.state.context().ok_or(AaError::NotMember)?;
        Ok(GroupInfo { ctx, chal: self.chal.clone(), reqs: self.reqs.clone() })
    }

    pub fn present<R: RngCore + CryptoRng>(&mut self, gi: &GroupInfo, kp_type: KpType, rng: &mut R) -> Result<PresentationPackage, AaError> {
        if self.state.in_group() {
            return Err(CgkaError::AlreadyInGroup.into());
        }
        if !gi.ctx.is_consistent() {
            return Err(AaError::MalformedGroupInfo);
        }
        let disc = reqs_met(&self.attrs, &gi.reqs).ok_or(AaError::RequirementNotMet)?;
        self.state.ctx = Some(gi.ctx.clone());
        let keys = sig_keygen(rng);
        self.state.set_sig_keypair(keys.clone());
        self.presented_keys.insert(keys.spk, keys.clone());
        let header = Header { chal: gi.chal.clone(), spk: keys.spk };
        let p = abc_prove(&self.ipk, &self.cred, &disc, &header.to_wire(), rng)?;
        let kp = self.state.genkp(kp_type, rng)?;
        if kp_type == KpType::Join {
            self.chal = gi.chal.clone();
            self.reqs = gi.reqs.clone();
        }
        Ok(PresentationPackage { p, kp })
    }

    pub fn validate_pp(&self, pp: &PresentationPackage, pki: &PkiDirectory) -> bool {
        validate_pp(&self.chal, pp, pki)
    }

    pub fn propose<R: RngCore + CryptoRng>(
        &mut self,
        target: &str,
        prop_type: &str,
        pp: Option<&PresentationPackage>,
        rng: &mut R,
    ) -> Result<AaProposal, AaError> {
        match prop_type {
            "add" | "join" => {
                let pp = pp.ok_or(AaError::MissingPresentation)?;
                reqs_met(&pp.p.disc_attrs, &self.reqs).ok_or(AaError::RequirementNotMet)?;
                if pp.kp.kp_type == KpType::Join && target != self.self_id {
                    return Err(AaError::JoinForOther);
                }
                let mut prop = self.state.propose(target, pp.kp.kp_type.label(), Some(pp.kp.clone()), rng)?;
                if prop_type != pp.kp.kp_type.label() {
                    return Err(CgkaError::KpTypeMismatch.into());
                }
                prop.attachment = Some(pp.p.to_wire());
                Ok(AaProposal::Basic(prop))
            }
            other => Ok(AaProposal::Basic(self.state.propose(target, other, None, rng)?)),
        }
    }

    pub fn propose_reqs(&self, change: ReqChange) -> Result<ReqProposal, AaError> {
        if !self.state.in_group() {
            return Err(AaError::NotMember);
        }
        let sig = self.state.sign(&req_tbs(&self.self_id, &change)).ok_or(AaError::NotMember)?;
        Ok(ReqProposal { proposer: self.self_id.clone(), change, sig })
    }

    /// Checks every proposal against the current state. Errors carry the
    /// position in `props`.
    fn validate_props(&self, props: &[(usize, &Proposal)], req_props: &[(usize, &ReqProposal)], pki: &PkiDirectory) -> Result<(), AaError> {
        for (index, bp) in props {
            if let Some(kp) = bp.body.key_package() {
                let bytes = bp.attachment.as_deref().ok_or_else(|| reject(*index, "missing presentation"))?;
                let p = Presentation::from_wire(bytes).map_err(|e| reject(*index, format!("presentation: {e}")))?;
                let pp = PresentationPackage { p, kp: kp.clone() };
                if !self.validate_pp(&pp, pki) {
                    return Err(reject(*index, "presentation package does not validate"));
                }
                if reqs_met(&pp.p.disc_attrs, &self.reqs).is_none() {
                    return Err(reject(*index, "disclosed attributes meet no requirement"));
                }
            }
        }
        for (index, rp) in req_props {
            let spk = self
                .state
                .member(&rp.proposer)
                .map(|m| m.spk)
                .ok_or_else(|| reject(*index, format!("unknown proposer {}", rp.proposer)))?;
            if !sig_verify(&spk, &rp.tbs(), &rp.sig) {
                return Err(reject(*index, "requirement proposal signature invalid"));
            }
        }
        Ok(())
    }

    pub fn commit<R: RngCore + CryptoRng>(
        &mut self,
        proposals: &[AaProposal],
        pki: &PkiDirectory,
        rng: &mut R,
    ) -> Result<AaCommit, AaError> {
        let mut basic = Vec::new();
        let mut reqs = Vec::new();
        for (i, p) in proposals.iter().enumerate() {
            match p {
                AaProposal::Basic(b) => basic.push((i, b)),
                AaProposal::Reqs(r) => reqs.push((i, r)),
            }
        }
        self.validate_props(&basic, &reqs, pki)?;
        let c_reqs: Vec<ReqProposal> = reqs.iter().map(|(_, r)| (*r).clone()).collect();
        let new_reqs = update_reqs(&self.reqs, &c_reqs)?;
        let basic_props: Vec<Proposal> = basic.iter().map(|(_, b)| (*b).clone()).collect();

        let mut next = self.clone();
        if !next.state.in_group() {
            let Some(kp) = basic_props.first().and_then(|p| p.body.key_package()) else {
                return Err(CgkaError::MalformedExternalCommit.into());
            };
            let keys = next.presented_keys.get(&kp.spk).cloned().ok_or(CgkaError::MissingKeyMaterial)?;
            next.state.set_sig_keypair(keys);
        }
        let (c_basic, welcome) = next.state.commit(&basic_props, rng).map_err(|e| match e {
            CgkaError::StaleProposal { index } => CgkaError::StaleProposal { index: basic[index].0 },
            other => other,
        })?;
        let w = welcome.map(|welcome| WelcomeWrapper {
            welcome,
            committer: self.self_id.clone(),
            reqs: new_reqs,
            chal: self.chal.clone(),
        });
        let tbs = commit_tbs(&self.self_id, &c_basic, &c_reqs, w.as_ref(), &self.chal);
        let sig = next.state.sign(&tbs).ok_or(AaError::NotMember)?;
        *self = next;
        Ok(AaCommit { id: self.self_id.clone(), c_basic, c_reqs, w, sig })
    }

    /// Total: returns false and leaves the state untouched on any failure.
    pub fn process(&mut self, c: &AaCommit, pki: &PkiDirectory) -> bool {
        self.try_process(c, pki).is_ok()
    }

    pub fn try_process(&mut self, c: &AaCommit, pki: &PkiDirectory) -> Result<ProcessOutcome, AaError> {
        let mut next = self.clone();
        let outcome = next.apply(c, pki)?;
        *self = next;
        Ok(outcome)
    }

    fn apply(&mut self, c: &AaCommit, pki: &PkiDirectory) -> Result<ProcessOutcome, AaError> {
        if !self.state.in_group() {
            if let Some(w) = &c.w {
                return self.apply_welcome(c, w);
            }
        }
        let pk = match self.state.member(&c.id) {
            Some(m) => m.spk,
            None => match c.c_basic.proposals.first().map(|p| &p.body) {
                Some(ProposalBody::Join { kp, .. }) => kp.spk,
                _ => return Err(AaError::BadCommitSignature),
            },
        };
        if !sig_verify(&pk, &c.tbs(&self.chal), &c.sig) {
            return Err(AaError::BadCommitSignature);
        }
        let basic: Vec<(usize, &Proposal)> = c.c_basic.proposals.iter().enumerate().collect();
        let reqs: Vec<(usize, &ReqProposal)> = c.c_reqs.iter().enumerate().collect();
        self.validate_props(&basic, &reqs, pki)?;
        let new_reqs = update_reqs(&self.reqs, &c.c_reqs)?;
        let joining = !self.state.in_group();
        if joining {
            let keys = self.presented_keys.get(&pk).cloned().ok_or(CgkaError::MissingKeyMaterial)?;
            self.state.set_sig_keypair(keys);
        }
        let outcome = self.state.process_commit(&c.c_basic)?;
        if joining {
            self.presented_keys.clear();
        }
        self.reqs = new_reqs;
        self.chal = update_group_chal(&self.chal, &c.sig);
        Ok(outcome)
    }

    fn apply_welcome(&mut self, c: &AaCommit, w: &WelcomeWrapper) -> Result<ProcessOutcome, AaError> {
        let secrets = self.state.open_welcome(&w.welcome)?;
        let committer = secrets.members.get(&c.id).ok_or(AaError::BadCommitSignature)?;
        if w.committer != c.id || !sig_verify(&committer.spk, &c.tbs(&w.chal), &c.sig) {
            return Err(AaError::BadCommitSignature);
        }
        let my_spk = secrets.members.get(&self.self_id).map(|m| m.spk).ok_or(CgkaError::BadWelcome)?;
        let keys = self.presented_keys.get(&my_spk).cloned().ok_or(CgkaError::MissingKeyMaterial)?;
        self.state.accept_welcome(secrets)?;
        self.state.set_sig_keypair(keys);
        self.presented_keys.clear();
        self.reqs = w.reqs.clone();
        self.chal = update_group_chal(&w.chal, &c.sig);
        Ok(ProcessOutcome::Joined)
    }
}

/// Presentation verifies under its issuer, is bound to `chal`, and its header
/// key signed the key package.
pub fn validate_pp(chal: &[u8], pp: &PresentationPackage, pki: &PkiDirectory) -> bool {
    let Ok(ipk) = pki.get_ipk(&pp.p) else {
        return false;
    };
    if !abc_verify_proof(ipk, &pp.p, &pp.p.header) {
        return false;
    }
    let Ok(header) = Header::from_wire(&pp.p.header) else {
        return false;
    };
    header.chal == chal && header.spk == pp.kp.spk && pp.kp.is_well_formed()
}

#[cfg(test)]
mod tests;
