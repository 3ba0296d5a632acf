//! Propose-and-commit group key agreement with linear fan-out.
//!
//! Every commit draws a fresh commit secret and seals it to each post-commit
//! member individually. New members brought in by an add proposal receive a
//! [`Welcome`]; external joiners contribute a key `k`, sealed to a group key
//! derived from the current epoch secret, and derive the next epoch from it.
//!
//! Key schedule:
//!
//! ```text
//! transcript' = H(transcript ‖ commit)
//! secret'     = kdf(secret, "epoch", commit_secret ‖ transcript')         (member commit)
//! secret'     = kdf(k, "ext-epoch", transcript ‖ group_id ‖ be64(epoch+1)) (external join)
//! group key   = seal keypair from kdf(secret, "group-kem", group_id ‖ be64(epoch))
//! ```

use std::collections::BTreeMap;

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::primitives::{
    hash, hash_concat, kdf32, open, seal, seal_keygen, seal_keypair_from_seed, sig_keygen, sig_sign, sig_verify, Ciphertext,
    Digest, SealKeyPair, SealPublicKey, SealSecretKey, SigKeyPair, SigPublicKey, Signature,
};
use crate::wire::{list_of, Node, Wire, WireError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CgkaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("already a member of a group")]
    AlreadyInGroup,
    #[error("not a member of a group")]
    NotInGroup,
    #[error("a join key package needs the group context")]
    MissingContext,
    #[error("proposal type does not match key package type")]
    KpTypeMismatch,
    #[error("key package signature or contents invalid")]
    InvalidKeyPackage,
    #[error("unknown member {0}")]
    UnknownMember(String),
    #[error("{0} is already a member")]
    DuplicateMember(String),
    #[error("proposal {index} was made for another epoch")]
    StaleProposal { index: usize },
    #[error("a commit cannot remove its committer")]
    RemoveCommitter,
    #[error("join proposals can only be committed by the joiner itself")]
    JoinNotExternal,
    #[error("an external commit must carry exactly the committer's own join")]
    MalformedExternalCommit,
    #[error("message belongs to another group")]
    WrongGroup,
    #[error("expected epoch {expected}, message is for epoch {got}")]
    WrongEpoch { expected: u64, got: u64 },
    #[error("no sealed secret addressed to this member")]
    MissingSlot,
    #[error("decryption failed")]
    OpenFailed,
    #[error("key material for this message is not held locally")]
    MissingKeyMaterial,
    #[error("malformed welcome")]
    BadWelcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KpType {
    Add,
    Join,
}

impl KpType {
    pub fn label(self) -> &'static str {
        match self {
            KpType::Add => "add",
            KpType::Join => "join",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemberEntry {
    pub id: String,
    pub spk: SigPublicKey,
    pub epk: SealPublicKey,
}

impl Wire for MemberEntry {
    fn to_node(&self) -> Node {
        Node::List(vec![Node::text(&self.id), self.spk.to_node(), self.epk.to_node()])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("member", 3)?;
        Ok(MemberEntry { id: f.text()?, spk: f.decode()?, epk: f.decode()? })
    }
}

fn roster_node(members: &BTreeMap<String, MemberEntry>) -> Node {
    Node::List(members.values().map(Wire::to_node).collect())
}

fn roster_from(node: &Node) -> Result<BTreeMap<String, MemberEntry>, WireError> {
    let mut out = BTreeMap::new();
    for n in node.as_list()? {
        let m = MemberEntry::from_node(n)?;
        if out.keys().next_back().is_some_and(|last: &String| last >= &m.id) {
            return Err(WireError::shape("roster not in canonical order"));
        }
        out.insert(m.id.clone(), m);
    }
    Ok(out)
}

pub fn roster_hash(members: &BTreeMap<String, MemberEntry>) -> Digest {
    hash(&roster_node(members).encode())
}

/// Public description of one epoch, enough for an outsider to join.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupContext {
    pub group_id: Vec<u8>,
    pub epoch: u64,
    pub group_pk: SealPublicKey,
    pub transcript_hash: Digest,
    pub roster_hash: Digest,
    pub members: BTreeMap<String, MemberEntry>,
}

impl GroupContext {
    /// True if the roster matches its advertised hash.
    pub fn is_consistent(&self) -> bool {
        roster_hash(&self.members) == self.roster_hash
    }
}

impl Wire for GroupContext {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::bytes(&self.group_id),
            Node::Uint(self.epoch),
            self.group_pk.to_node(),
            self.transcript_hash.to_node(),
            self.roster_hash.to_node(),
            roster_node(&self.members),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("group context", 6)?;
        Ok(GroupContext {
            group_id: f.bytes()?,
            epoch: f.uint()?,
            group_pk: f.decode()?,
            transcript_hash: f.decode()?,
            roster_hash: f.decode()?,
            members: roster_from(f.next()?)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPackage {
    pub kp_type: KpType,
    pub spk: SigPublicKey,
    /// Present for add packages.
    pub epk: Option<SealPublicKey>,
    /// Present for join packages.
    pub sealed_k: Option<Ciphertext>,
    pub sig: Signature,
}

impl KeyPackage {
    pub fn tbs(&self) -> Vec<u8> {
        Node::List(vec![
            Node::text("cgka/key-package"),
            Node::text(self.kp_type.label()),
            self.spk.to_node(),
            Node::opt(self.epk.as_ref(), Wire::to_node),
            Node::opt(self.sealed_k.as_ref(), Wire::to_node),
        ])
        .encode()
    }

    /// Signature valid under the embedded key and fields consistent with the type.
    pub fn is_well_formed(&self) -> bool {
        let shape = match self.kp_type {
            KpType::Add => self.epk.is_some() && self.sealed_k.is_none(),
            KpType::Join => self.epk.is_none() && self.sealed_k.is_some(),
        };
        shape && sig_verify(&self.spk, &self.tbs(), &self.sig)
    }
}

impl Wire for KeyPackage {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::text(self.kp_type.label()),
            self.spk.to_node(),
            Node::opt(self.epk.as_ref(), Wire::to_node),
            Node::opt(self.sealed_k.as_ref(), Wire::to_node),
            self.sig.to_node(),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("key package", 5)?;
        let kp_type = match f.text()?.as_str() {
            "add" => KpType::Add,
            "join" => KpType::Join,
            other => return Err(WireError::shape(format!("unknown key package type {other}"))),
        };
        Ok(KeyPackage { kp_type, spk: f.decode()?, epk: f.decode_opt()?, sealed_k: f.decode_opt()?, sig: f.decode()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProposalBody {
    Add { id: String, kp: KeyPackage },
    Join { id: String, kp: KeyPackage },
    Update { epk: SealPublicKey },
    Remove { id: String },
}

impl ProposalBody {
    pub fn label(&self) -> &'static str {
        match self {
            ProposalBody::Add { .. } => "add",
            ProposalBody::Join { .. } => "join",
            ProposalBody::Update { .. } => "update",
            ProposalBody::Remove { .. } => "remove",
        }
    }

    pub fn key_package(&self) -> Option<&KeyPackage> {
        match self {
            ProposalBody::Add { kp, .. } | ProposalBody::Join { kp, .. } => Some(kp),
            _ => None,
        }
    }
}

impl Wire for ProposalBody {
    fn to_node(&self) -> Node {
        match self {
            ProposalBody::Add { id, kp } => Node::List(vec![Node::text("add"), Node::text(id), kp.to_node()]),
            ProposalBody::Join { id, kp } => Node::List(vec![Node::text("join"), Node::text(id), kp.to_node()]),
            ProposalBody::Update { epk } => Node::List(vec![Node::text("update"), epk.to_node()]),
            ProposalBody::Remove { id } => Node::List(vec![Node::text("remove"), Node::text(id)]),
        }
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let items = node.as_list()?;
        let kind = items.first().ok_or_else(|| WireError::shape("empty proposal body"))?.as_text()?;
        let mut f = node.fields("proposal body", match kind {
            "add" | "join" => 3,
            _ => 2,
        })?;
        f.next()?;
        Ok(match kind {
            "add" => ProposalBody::Add { id: f.text()?, kp: f.decode()? },
            "join" => ProposalBody::Join { id: f.text()?, kp: f.decode()? },
            "update" => ProposalBody::Update { epk: f.decode()? },
            "remove" => ProposalBody::Remove { id: f.text()? },
            other => return Err(WireError::shape(format!("unknown proposal type {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proposal {
    pub proposer: String,
    pub epoch: u64,
    pub body: ProposalBody,
    /// Opaque credential material attached by the layer above.
    pub attachment: Option<Vec<u8>>,
}

impl Wire for Proposal {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::text(&self.proposer),
            Node::Uint(self.epoch),
            self.body.to_node(),
            Node::opt(self.attachment.as_ref(), |b| Node::bytes(b)),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("proposal", 4)?;
        let proposer = f.text()?;
        let epoch = f.uint()?;
        let body = f.decode()?;
        let att = f.next()?;
        let attachment = if att.is_null() { None } else { Some(att.as_bytes()?.to_vec()) };
        Ok(Proposal { proposer, epoch, body, attachment })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub id: String,
    pub epk: SealPublicKey,
    pub ct: Ciphertext,
}

impl Wire for Slot {
    fn to_node(&self) -> Node {
        Node::List(vec![Node::text(&self.id), self.epk.to_node(), self.ct.to_node()])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("slot", 3)?;
        Ok(Slot { id: f.text()?, epk: f.decode()?, ct: f.decode()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CgkaCommit {
    pub committer: String,
    pub group_id: Vec<u8>,
    /// Epoch the commit was made in; processing moves to `epoch + 1`.
    pub epoch: u64,
    pub proposals: Vec<Proposal>,
    /// Fresh leaf key of the committer.
    pub committer_epk: SealPublicKey,
    /// Commit secret sealed per member. Empty for external joins.
    pub slots: Vec<Slot>,
}

impl CgkaCommit {
    pub fn is_external(&self) -> bool {
        matches!(self.proposals.as_slice(), [Proposal { body: ProposalBody::Join { .. }, .. }])
    }
}

impl Wire for CgkaCommit {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::text(&self.committer),
            Node::bytes(&self.group_id),
            Node::Uint(self.epoch),
            list_of(&self.proposals),
            self.committer_epk.to_node(),
            list_of(&self.slots),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("commit", 6)?;
        Ok(CgkaCommit {
            committer: f.text()?,
            group_id: f.bytes()?,
            epoch: f.uint()?,
            proposals: f.decode_list()?,
            committer_epk: f.decode()?,
            slots: f.decode_list()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Welcome {
    pub slots: Vec<Slot>,
}

impl Wire for Welcome {
    fn to_node(&self) -> Node {
        list_of(&self.slots)
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        Ok(Welcome { slots: node.as_list()?.iter().map(Slot::from_node).collect::<Result<_, _>>()? })
    }
}

/// Contents of a welcome slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WelcomeSecrets {
    pub group_id: Vec<u8>,
    pub epoch: u64,
    epoch_secret: [u8; 32],
    pub transcript_hash: Digest,
    pub members: BTreeMap<String, MemberEntry>,
}

impl Wire for WelcomeSecrets {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::bytes(&self.group_id),
            Node::Uint(self.epoch),
            Node::bytes(self.epoch_secret),
            self.transcript_hash.to_node(),
            roster_node(&self.members),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("welcome secrets", 5)?;
        Ok(WelcomeSecrets {
            group_id: f.bytes()?,
            epoch: f.uint()?,
            epoch_secret: f.array()?,
            transcript_hash: f.decode()?,
            members: roster_from(f.next()?)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct GroupState {
    group_id: Vec<u8>,
    epoch: u64,
    members: BTreeMap<String, MemberEntry>,
    epoch_secret: [u8; 32],
    transcript_hash: Digest,
}

/// What a successful process did to the local state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcessOutcome {
    Advanced,
    Joined,
    Removed,
}

/// One party's CGKA state. Single owner; clone to branch.
#[derive(Clone, Debug)]
pub struct CgkaState {
    self_id: String,
    leaf: SealKeyPair,
    pub(crate) sig: Option<SigKeyPair>,
    group: Option<GroupState>,
    /// Context of a group this party wants to join from outside.
    pub ctx: Option<GroupContext>,
    pending_keys: BTreeMap<SealPublicKey, SealSecretKey>,
    pending_joins: BTreeMap<Digest, [u8; 32]>,
}

pub fn group_keypair(epoch_secret: &[u8; 32], group_id: &[u8], epoch: u64) -> SealKeyPair {
    let mut ctx = group_id.to_vec();
    ctx.extend_from_slice(&epoch.to_be_bytes());
    seal_keypair_from_seed(&kdf32(epoch_secret, "group-kem", &ctx))
}

fn external_secret(k: &[u8; 32], transcript: &Digest, group_id: &[u8], next_epoch: u64) -> [u8; 32] {
    let mut ctx = transcript.0.to_vec();
    ctx.extend_from_slice(group_id);
    ctx.extend_from_slice(&next_epoch.to_be_bytes());
    kdf32(k, "ext-epoch", &ctx)
}

fn member_secret(old: &[u8; 32], commit_secret: &[u8; 32], transcript: &Digest) -> [u8; 32] {
    let mut ctx = commit_secret.to_vec();
    ctx.extend_from_slice(&transcript.0);
    kdf32(old, "epoch", &ctx)
}

fn sealed_k_id(ct: &Ciphertext) -> Digest {
    hash(&ct.to_wire())
}

fn random32<R: RngCore + CryptoRng>(rng: &mut R) -> [u8; 32] {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    b
}

impl CgkaState {
    pub fn init<R: RngCore + CryptoRng>(id: &str, rng: &mut R) -> Result<Self, CgkaError> {
        if id.is_empty() {
            return Err(CgkaError::InvalidParameter("id must be nonempty"));
        }
        Ok(CgkaState {
            self_id: id.to_owned(),
            leaf: seal_keygen(rng),
            sig: None,
            group: None,
            ctx: None,
            pending_keys: BTreeMap::new(),
            pending_joins: BTreeMap::new(),
        })
    }

    pub fn self_id(&self) -> &str {
        &self.self_id
    }

    pub fn in_group(&self) -> bool {
        self.group.is_some()
    }

    /// Zero outside a group.
    pub fn epoch(&self) -> u64 {
        self.group.as_ref().map_or(0, |g| g.epoch)
    }

    pub fn group_id(&self) -> Option<&[u8]> {
        self.group.as_ref().map(|g| g.group_id.as_slice())
    }

    pub fn members(&self) -> Option<&BTreeMap<String, MemberEntry>> {
        self.group.as_ref().map(|g| &g.members)
    }

    pub fn member(&self, id: &str) -> Option<&MemberEntry> {
        self.members().and_then(|m| m.get(id))
    }

    pub fn epoch_secret(&self) -> Option<[u8; 32]> {
        self.group.as_ref().map(|g| g.epoch_secret)
    }

    /// Key exported to the application for the current epoch. It is derived
    /// one-way from the epoch secret so that public values computed from the
    /// epoch secret (the group sealing key) give no way to test a guess.
    pub fn group_secret(&self) -> Option<[u8; 32]> {
        let g = self.group.as_ref()?;
        let mut ctx = g.group_id.clone();
        ctx.extend_from_slice(&g.epoch.to_be_bytes());
        Some(kdf32(&g.epoch_secret, "group-secret", &ctx))
    }

    pub fn transcript_hash(&self) -> Option<Digest> {
        self.group.as_ref().map(|g| g.transcript_hash)
    }

    pub fn sig_public_key(&self) -> Option<SigPublicKey> {
        self.sig.as_ref().map(|k| k.spk)
    }

    pub fn leaf_public_key(&self) -> SealPublicKey {
        self.leaf.epk
    }

    pub fn set_sig_keypair(&mut self, kp: SigKeyPair) {
        self.sig = Some(kp);
    }

    pub(crate) fn sign(&self, msg: &[u8]) -> Option<Signature> {
        self.sig.as_ref().map(|k| sig_sign(&k.ssk, msg))
    }

    /// Public context of the current epoch.
    pub fn context(&self) -> Option<GroupContext> {
        let g = self.group.as_ref()?;
        Some(GroupContext {
            group_id: g.group_id.clone(),
            epoch: g.epoch,
            group_pk: group_keypair(&g.epoch_secret, &g.group_id, g.epoch).epk,
            transcript_hash: g.transcript_hash,
            roster_hash: roster_hash(&g.members),
            members: g.members.clone(),
        })
    }

    pub fn create<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> Result<(), CgkaError> {
        if self.group.is_some() {
            return Err(CgkaError::AlreadyInGroup);
        }
        let sig = self.sig.get_or_insert_with(|| sig_keygen(rng)).spk;
        let mut group_id = vec![0u8; 16];
        rng.fill_bytes(&mut group_id);
        let mut members = BTreeMap::new();
        members.insert(self.self_id.clone(), MemberEntry { id: self.self_id.clone(), spk: sig, epk: self.leaf.epk });
        let transcript_hash = hash_concat(&[b"cgka/genesis", &group_id]);
        self.group = Some(GroupState { group_id, epoch: 0, members, epoch_secret: random32(rng), transcript_hash });
        Ok(())
    }

    /// Key package signed with the current signature key (generated if absent).
    pub fn genkp<R: RngCore + CryptoRng>(&mut self, kp_type: KpType, rng: &mut R) -> Result<KeyPackage, CgkaError> {
        let (epk, sealed_k) = match kp_type {
            KpType::Add => {
                let kp = seal_keygen(rng);
                self.pending_keys.insert(kp.epk, kp.esk);
                (Some(kp.epk), None)
            }
            KpType::Join => {
                let ctx = self.ctx.as_ref().ok_or(CgkaError::MissingContext)?;
                let k = random32(rng);
                let ct = seal(&ctx.group_pk, &k, rng);
                self.pending_joins.insert(sealed_k_id(&ct), k);
                (None, Some(ct))
            }
        };
        let spk = self.sig.get_or_insert_with(|| sig_keygen(rng)).spk;
        let mut kp = KeyPackage { kp_type, spk, epk, sealed_k, sig: Signature([0u8; 64]) };
        kp.sig = self.sign(&kp.tbs()).expect("signature key present");
        Ok(kp)
    }

    /// Epoch a proposal from this party refers to: the group's, or the target's for outsiders.
    fn proposal_epoch(&self) -> Option<u64> {
        match (&self.group, &self.ctx) {
            (Some(g), _) => Some(g.epoch),
            (None, Some(c)) => Some(c.epoch),
            (None, None) => None,
        }
    }

    pub fn propose<R: RngCore + CryptoRng>(
        &mut self,
        target: &str,
        prop_type: &str,
        kp: Option<KeyPackage>,
        rng: &mut R,
    ) -> Result<Proposal, CgkaError> {
        let epoch = self.proposal_epoch().ok_or(CgkaError::NotInGroup)?;
        let body = match (prop_type, kp) {
            ("add", Some(kp)) => {
                if kp.kp_type != KpType::Add {
                    return Err(CgkaError::KpTypeMismatch);
                }
                let g = self.group.as_ref().ok_or(CgkaError::NotInGroup)?;
                if g.members.contains_key(target) {
                    return Err(CgkaError::DuplicateMember(target.to_owned()));
                }
                ProposalBody::Add { id: target.to_owned(), kp }
            }
            ("join", Some(kp)) => {
                if kp.kp_type != KpType::Join {
                    return Err(CgkaError::KpTypeMismatch);
                }
                if self.group.is_some() {
                    return Err(CgkaError::AlreadyInGroup);
                }
                ProposalBody::Join { id: target.to_owned(), kp }
            }
            ("add" | "join", None) => return Err(CgkaError::KpTypeMismatch),
            ("update", _) => {
                self.group.as_ref().ok_or(CgkaError::NotInGroup)?;
                let kp = seal_keygen(rng);
                self.pending_keys.insert(kp.epk, kp.esk);
                ProposalBody::Update { epk: kp.epk }
            }
            ("remove", _) => {
                let g = self.group.as_ref().ok_or(CgkaError::NotInGroup)?;
                if !g.members.contains_key(target) {
                    return Err(CgkaError::UnknownMember(target.to_owned()));
                }
                ProposalBody::Remove { id: target.to_owned() }
            }
            _ => return Err(CgkaError::InvalidParameter("unknown proposal type")),
        };
        Ok(Proposal { proposer: self.self_id.clone(), epoch, body, attachment: None })
    }

    /// Returns the commit plus a welcome when the commit adds members.
    pub fn commit<R: RngCore + CryptoRng>(
        &mut self,
        proposals: &[Proposal],
        rng: &mut R,
    ) -> Result<(CgkaCommit, Option<Welcome>), CgkaError> {
        if self.group.is_none() {
            return self.commit_external(proposals, rng).map(|c| (c, None));
        }
        let g = self.group.as_ref().expect("checked");
        for (index, p) in proposals.iter().enumerate() {
            if p.epoch != g.epoch {
                return Err(CgkaError::StaleProposal { index });
            }
        }
        let leaf = seal_keygen(rng);
        let mut members = apply_proposals(g, proposals, &self.self_id)?;
        members.get_mut(&self.self_id).expect("committer kept").epk = leaf.epk;

        let commit_secret = random32(rng);
        let slots = members
            .values()
            .map(|m| Slot { id: m.id.clone(), epk: m.epk, ct: seal(&m.epk, &commit_secret, rng) })
            .collect();
        let commit = CgkaCommit {
            committer: self.self_id.clone(),
            group_id: g.group_id.clone(),
            epoch: g.epoch,
            proposals: proposals.to_vec(),
            committer_epk: leaf.epk,
            slots,
        };

        let transcript_hash = hash_concat(&[&g.transcript_hash.0, &commit.to_wire()]);
        let secrets = WelcomeSecrets {
            group_id: g.group_id.clone(),
            epoch: g.epoch + 1,
            epoch_secret: member_secret(&g.epoch_secret, &commit_secret, &transcript_hash),
            transcript_hash,
            members,
        };
        let welcome_slots: Vec<Slot> = proposals
            .iter()
            .filter_map(|p| match &p.body {
                ProposalBody::Add { id, kp } => kp.epk.map(|epk| (id, epk)),
                _ => None,
            })
            .map(|(id, epk)| Slot { id: id.clone(), epk, ct: seal(&epk, &secrets.to_wire(), rng) })
            .collect();

        self.pending_keys.insert(leaf.epk, leaf.esk);
        let welcome = (!welcome_slots.is_empty()).then_some(Welcome { slots: welcome_slots });
        Ok((commit, welcome))
    }

    fn commit_external<R: RngCore + CryptoRng>(&mut self, proposals: &[Proposal], rng: &mut R) -> Result<CgkaCommit, CgkaError> {
        let ctx = self.ctx.as_ref().ok_or(CgkaError::NotInGroup)?;
        let [p] = proposals else {
            return Err(CgkaError::MalformedExternalCommit);
        };
        let ProposalBody::Join { id, kp } = &p.body else {
            return Err(CgkaError::MalformedExternalCommit);
        };
        if id != &self.self_id || p.proposer != self.self_id {
            return Err(CgkaError::MalformedExternalCommit);
        }
        if p.epoch != ctx.epoch {
            return Err(CgkaError::StaleProposal { index: 0 });
        }
        let sealed = kp.sealed_k.as_ref().ok_or(CgkaError::InvalidKeyPackage)?;
        if !self.pending_joins.contains_key(&sealed_k_id(sealed)) {
            return Err(CgkaError::MissingKeyMaterial);
        }
        let leaf = seal_keygen(rng);
        let commit = CgkaCommit {
            committer: self.self_id.clone(),
            group_id: ctx.group_id.clone(),
            epoch: ctx.epoch,
            proposals: proposals.to_vec(),
            committer_epk: leaf.epk,
            slots: Vec::new(),
        };
        self.pending_keys.insert(leaf.epk, leaf.esk);
        Ok(commit)
    }

    /// Total: on error the state is left untouched.
    pub fn process_commit(&mut self, c: &CgkaCommit) -> Result<ProcessOutcome, CgkaError> {
        let next = match &self.group {
            Some(g) => self.advance(g, c)?,
            None => self.enter_external(c)?,
        };
        let outcome = match (&self.group, &next) {
            (_, None) => ProcessOutcome::Removed,
            (None, Some(_)) => ProcessOutcome::Joined,
            (Some(_), Some(_)) => ProcessOutcome::Advanced,
        };
        self.install(next);
        Ok(outcome)
    }

    fn advance(&self, g: &GroupState, c: &CgkaCommit) -> Result<Option<GroupState>, CgkaError> {
        if c.group_id != g.group_id {
            return Err(CgkaError::WrongGroup);
        }
        if c.epoch != g.epoch {
            return Err(CgkaError::WrongEpoch { expected: g.epoch, got: c.epoch });
        }
        for (index, p) in c.proposals.iter().enumerate() {
            if p.epoch != g.epoch {
                return Err(CgkaError::StaleProposal { index });
            }
        }
        let transcript_hash = hash_concat(&[&g.transcript_hash.0, &c.to_wire()]);

        if c.is_external() {
            let ProposalBody::Join { id, kp } = &c.proposals[0].body else { unreachable!() };
            if id != &c.committer || c.proposals[0].proposer != c.committer || g.members.contains_key(id) {
                return Err(CgkaError::MalformedExternalCommit);
            }
            if !kp.is_well_formed() {
                return Err(CgkaError::InvalidKeyPackage);
            }
            let group_sk = group_keypair(&g.epoch_secret, &g.group_id, g.epoch).esk;
            let k = open(&group_sk, kp.sealed_k.as_ref().expect("well formed")).map_err(|_| CgkaError::OpenFailed)?;
            let k: [u8; 32] = k.try_into().map_err(|_| CgkaError::OpenFailed)?;
            let mut members = g.members.clone();
            members.insert(id.clone(), MemberEntry { id: id.clone(), spk: kp.spk, epk: c.committer_epk });
            return Ok(Some(GroupState {
                group_id: g.group_id.clone(),
                epoch: g.epoch + 1,
                members,
                epoch_secret: external_secret(&k, &g.transcript_hash, &g.group_id, g.epoch + 1),
                transcript_hash,
            }));
        }

        if !g.members.contains_key(&c.committer) {
            return Err(CgkaError::UnknownMember(c.committer.clone()));
        }
        let mut members = apply_proposals(g, &c.proposals, &c.committer)?;
        members.get_mut(&c.committer).expect("committer kept").epk = c.committer_epk;
        let Some(me) = members.get(&self.self_id) else {
            return Ok(None);
        };
        let slot = c.slots.iter().find(|s| s.id == self.self_id && s.epk == me.epk).ok_or(CgkaError::MissingSlot)?;
        let esk = self.secret_for(&slot.epk).ok_or(CgkaError::MissingKeyMaterial)?;
        let cs = open(esk, &slot.ct).map_err(|_| CgkaError::OpenFailed)?;
        let cs: [u8; 32] = cs.try_into().map_err(|_| CgkaError::OpenFailed)?;
        Ok(Some(GroupState {
            group_id: g.group_id.clone(),
            epoch: g.epoch + 1,
            members,
            epoch_secret: member_secret(&g.epoch_secret, &cs, &transcript_hash),
            transcript_hash,
        }))
    }

    fn enter_external(&self, c: &CgkaCommit) -> Result<Option<GroupState>, CgkaError> {
        let ctx = self.ctx.as_ref().ok_or(CgkaError::NotInGroup)?;
        if !c.is_external() || c.committer != self.self_id {
            return Err(CgkaError::MalformedExternalCommit);
        }
        if c.group_id != ctx.group_id {
            return Err(CgkaError::WrongGroup);
        }
        if c.epoch != ctx.epoch {
            return Err(CgkaError::WrongEpoch { expected: ctx.epoch, got: c.epoch });
        }
        if !ctx.is_consistent() {
            return Err(CgkaError::BadWelcome);
        }
        let ProposalBody::Join { kp, .. } = &c.proposals[0].body else { unreachable!() };
        let sealed = kp.sealed_k.as_ref().ok_or(CgkaError::InvalidKeyPackage)?;
        let k = self.pending_joins.get(&sealed_k_id(sealed)).ok_or(CgkaError::MissingKeyMaterial)?;
        if self.secret_for(&c.committer_epk).is_none() {
            return Err(CgkaError::MissingKeyMaterial);
        }
        let mut members = ctx.members.clone();
        members.insert(self.self_id.clone(), MemberEntry { id: self.self_id.clone(), spk: kp.spk, epk: c.committer_epk });
        Ok(Some(GroupState {
            group_id: ctx.group_id.clone(),
            epoch: ctx.epoch + 1,
            members,
            epoch_secret: external_secret(k, &ctx.transcript_hash, &ctx.group_id, ctx.epoch + 1),
            transcript_hash: hash_concat(&[&ctx.transcript_hash.0, &c.to_wire()]),
        }))
    }

    /// Decrypts this party's welcome slot without touching state.
    pub fn open_welcome(&self, w: &Welcome) -> Result<WelcomeSecrets, CgkaError> {
        if self.group.is_some() {
            return Err(CgkaError::AlreadyInGroup);
        }
        let slot = w.slots.iter().find(|s| s.id == self.self_id).ok_or(CgkaError::MissingSlot)?;
        let esk = self.secret_for(&slot.epk).ok_or(CgkaError::MissingKeyMaterial)?;
        let bytes = open(esk, &slot.ct).map_err(|_| CgkaError::OpenFailed)?;
        let secrets = WelcomeSecrets::from_wire(&bytes).map_err(|_| CgkaError::BadWelcome)?;
        match secrets.members.get(&self.self_id) {
            Some(me) if me.epk == slot.epk => Ok(secrets),
            _ => Err(CgkaError::BadWelcome),
        }
    }

    pub fn accept_welcome(&mut self, secrets: WelcomeSecrets) -> Result<(), CgkaError> {
        if self.group.is_some() {
            return Err(CgkaError::AlreadyInGroup);
        }
        if !secrets.members.contains_key(&self.self_id) {
            return Err(CgkaError::BadWelcome);
        }
        self.install(Some(GroupState {
            group_id: secrets.group_id,
            epoch: secrets.epoch,
            members: secrets.members,
            epoch_secret: secrets.epoch_secret,
            transcript_hash: secrets.transcript_hash,
        }));
        Ok(())
    }

    pub fn process_welcome(&mut self, w: &Welcome) -> Result<ProcessOutcome, CgkaError> {
        let secrets = self.open_welcome(w)?;
        self.accept_welcome(secrets)?;
        Ok(ProcessOutcome::Joined)
    }

    fn secret_for(&self, epk: &SealPublicKey) -> Option<&SealSecretKey> {
        if *epk == self.leaf.epk {
            Some(&self.leaf.esk)
        } else {
            self.pending_keys.get(epk)
        }
    }

    fn install(&mut self, next: Option<GroupState>) {
        match &next {
            Some(g) => {
                let mine = g.members.get(&self.self_id).expect("installed group contains self").epk;
                if mine != self.leaf.epk {
                    let esk = self.pending_keys.remove(&mine).expect("leaf key held");
                    self.leaf = SealKeyPair { epk: mine, esk };
                }
                self.pending_joins.clear();
                self.ctx = None;
            }
            None => {
                self.pending_keys.clear();
                self.pending_joins.clear();
            }
        }
        self.group = next;
    }
}

/// Adds, then updates, then removes, each in list order.
fn apply_proposals(g: &GroupState, proposals: &[Proposal], committer: &str) -> Result<BTreeMap<String, MemberEntry>, CgkaError> {
    let mut members = g.members.clone();
    for p in proposals {
        match &p.body {
            ProposalBody::Add { id, kp } => {
                if !kp.is_well_formed() || kp.kp_type != KpType::Add {
                    return Err(CgkaError::InvalidKeyPackage);
                }
                if members.contains_key(id) {
                    return Err(CgkaError::DuplicateMember(id.clone()));
                }
                let epk = kp.epk.expect("well formed");
                members.insert(id.clone(), MemberEntry { id: id.clone(), spk: kp.spk, epk });
            }
            ProposalBody::Join { .. } => return Err(CgkaError::JoinNotExternal),
            _ => {}
        }
    }
    for p in proposals {
        if let ProposalBody::Update { epk } = &p.body {
            let entry = members.get_mut(&p.proposer).ok_or_else(|| CgkaError::UnknownMember(p.proposer.clone()))?;
            entry.epk = *epk;
        }
    }
    for p in proposals {
        if let ProposalBody::Remove { id } = &p.body {
            if id == committer {
                return Err(CgkaError::RemoveCommitter);
            }
            members.remove(id).ok_or_else(|| CgkaError::UnknownMember(id.clone()))?;
        }
    }
    Ok(members)
}
