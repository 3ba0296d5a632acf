//! Salted-hash selective disclosure.
//!
//! Each claim is committed as H(salt || canonical(key, value)); the issuer
//! signs the commitment vector together with a holder key. A presentation
//! reveals the whole vector, the issuer signature, and the salts of the
//! disclosed claims, and is signed by the holder key over the header.
//! Every presentation of one credential repeats the same issuer signature,
//! so presentations are linkable.

use rand_core::{CryptoRng, RngCore};

use super::AttributeMap;
use crate::primitives::{hash_concat, sig_keygen, sig_sign, sig_verify, Digest, SigPublicKey, SigSecretKey, Signature};
use crate::wire::{Node, Wire, WireError};

#[derive(Clone, Debug)]
pub struct SecretKey {
    ssk: SigSecretKey,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    spk: SigPublicKey,
    pub max_attrs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialSig {
    /// One salt per claim, in canonical key order.
    salts: Vec<[u8; 32]>,
    holder_seed: [u8; 32],
    issuer_sig: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    commitments: Vec<Digest>,
    holder_spk: SigPublicKey,
    issuer_sig: Signature,
    /// (commitment index, salt) for each disclosed claim, in canonical key order.
    openings: Vec<(u64, [u8; 32])>,
    holder_sig: Signature,
}

fn commitment(salt: &[u8; 32], key: &str, value: &str) -> Digest {
    let enc = Node::List(vec![Node::text(key), Node::text(value)]).encode();
    hash_concat(&[salt, &enc])
}

fn issuer_tbs(commitments: &[Digest], holder: &SigPublicKey) -> Vec<u8> {
    Node::List(vec![
        Node::text("sd-hash/credential"),
        Node::List(commitments.iter().map(|c| Node::bytes(c.as_bytes())).collect()),
        Node::bytes(holder.0),
    ])
    .encode()
}

fn holder_tbs(header: &[u8], disc: &AttributeMap, openings: &[(u64, [u8; 32])]) -> Vec<u8> {
    Node::List(vec![
        Node::text("sd-hash/presentation"),
        Node::bytes(header),
        disc.to_node(),
        Node::List(openings.iter().map(|(i, s)| Node::List(vec![Node::Uint(*i), Node::bytes(s)])).collect()),
    ])
    .encode()
}

pub(super) fn keygen<R: RngCore + CryptoRng>(max_attrs: usize, rng: &mut R) -> (SecretKey, PublicKey) {
    let kp = sig_keygen(rng);
    (SecretKey { ssk: kp.ssk }, PublicKey { spk: kp.spk, max_attrs })
}

pub(super) fn issue<R: RngCore + CryptoRng>(sk: &SecretKey, attrs: &AttributeMap, rng: &mut R) -> CredentialSig {
    let salts: Vec<[u8; 32]> = attrs
        .iter()
        .map(|_| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        })
        .collect();
    let mut holder_seed = [0u8; 32];
    rng.fill_bytes(&mut holder_seed);
    let holder = SigSecretKey::from_seed(holder_seed).public_key();
    let commitments: Vec<Digest> = attrs.iter().zip(&salts).map(|((k, v), s)| commitment(s, k, v)).collect();
    let issuer_sig = sig_sign(&sk.ssk, &issuer_tbs(&commitments, &holder));
    CredentialSig { salts, holder_seed, issuer_sig }
}

pub(super) fn verify_cred(pk: &PublicKey, attrs: &AttributeMap, sig: &CredentialSig) -> bool {
    if sig.salts.len() != attrs.len() {
        return false;
    }
    let holder = SigSecretKey::from_seed(sig.holder_seed).public_key();
    let commitments: Vec<Digest> = attrs.iter().zip(&sig.salts).map(|((k, v), s)| commitment(s, k, v)).collect();
    sig_verify(&pk.spk, &issuer_tbs(&commitments, &holder), &sig.issuer_sig)
}

pub(super) fn prove(attrs: &AttributeMap, sig: &CredentialSig, disc: &AttributeMap, header: &[u8]) -> Proof {
    let commitments: Vec<Digest> = attrs.iter().zip(&sig.salts).map(|((k, v), s)| commitment(s, k, v)).collect();
    let openings: Vec<(u64, [u8; 32])> = disc
        .iter()
        .map(|(k, _)| {
            let idx = attrs.position(k).expect("disclosure checked by caller");
            (idx as u64, sig.salts[idx])
        })
        .collect();
    let holder = SigSecretKey::from_seed(sig.holder_seed);
    let holder_sig = sig_sign(&holder, &holder_tbs(header, disc, &openings));
    Proof { commitments, holder_spk: holder.public_key(), issuer_sig: sig.issuer_sig, openings, holder_sig }
}

pub(super) fn verify_proof(pk: &PublicKey, disc: &AttributeMap, header: &[u8], proof: &Proof) -> bool {
    if proof.openings.len() != disc.len() || proof.commitments.len() > pk.max_attrs {
        return false;
    }
    let opened = disc.iter().zip(&proof.openings).all(|((k, v), (i, salt))| {
        proof.commitments.get(*i as usize).is_some_and(|c| *c == commitment(salt, k, v))
    });
    opened
        && sig_verify(&pk.spk, &issuer_tbs(&proof.commitments, &proof.holder_spk), &proof.issuer_sig)
        && sig_verify(&proof.holder_spk, &holder_tbs(header, disc, &proof.openings), &proof.holder_sig)
}

impl CredentialSig {
    pub(super) fn fragments(&self) -> Vec<Vec<u8>> {
        let mut out = vec![self.holder_seed.to_vec()];
        out.extend(self.salts.iter().map(|s| s.to_vec()));
        out
    }
}

impl Wire for PublicKey {
    fn to_node(&self) -> Node {
        Node::List(vec![self.spk.to_node(), Node::Uint(self.max_attrs as u64)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("issuer key", 2)?;
        Ok(PublicKey { spk: f.decode()?, max_attrs: f.uint()? as usize })
    }
}

impl Wire for CredentialSig {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::List(self.salts.iter().map(Node::bytes).collect()),
            Node::bytes(self.holder_seed),
            self.issuer_sig.to_node(),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("credential signature", 3)?;
        let salts = f.next()?.as_list()?.iter().map(Node::as_array).collect::<Result<_, _>>()?;
        Ok(CredentialSig { salts, holder_seed: f.array()?, issuer_sig: f.decode()? })
    }
}

impl Wire for Proof {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::List(self.commitments.iter().map(Wire::to_node).collect()),
            self.holder_spk.to_node(),
            self.issuer_sig.to_node(),
            Node::List(self.openings.iter().map(|(i, s)| Node::List(vec![Node::Uint(*i), Node::bytes(s)])).collect()),
            self.holder_sig.to_node(),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("proof", 5)?;
        let commitments = f.decode_list()?;
        let holder_spk = f.decode()?;
        let issuer_sig = f.decode()?;
        let openings = f
            .next()?
            .as_list()?
            .iter()
            .map(|n| {
                let mut g = n.fields("opening", 2)?;
                Ok((g.uint()?, g.array()?))
            })
            .collect::<Result<_, WireError>>()?;
        Ok(Proof { commitments, holder_spk, issuer_sig, openings, holder_sig: f.decode()? })
    }
}
