//! Attribute-based credentials with selective disclosure.
//!
//! Two interchangeable schemes sit behind one interface:
//!
//! * [`AbcScheme::RandomizableSig`]: Pointcheval–Sanders style randomizable
//!   signatures over BLS12-381. Each attribute is signed together with a
//!   holder secret; a presentation rerandomizes the signatures of the
//!   disclosed attributes and proves knowledge of the holder secret with a
//!   Fiat–Shamir transform whose transcript absorbs the header. Presentations
//!   of the same credential cannot be linked to each other or to the
//!   credential.
//! * [`AbcScheme::SaltedHash`]: salted-hash commitments signed by the issuer.
//!   Selective disclosure works, but every presentation carries the same
//!   issuer signature, so it is linkable. It exists as a negative control.

mod ps;
mod sd_hash;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::wire::{Node, Wire, WireError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("credential has {got} attributes, issuer allows at most {max}")]
    TooManyAttributes { got: usize, max: usize },
    #[error("disclosed attributes are not contained in the credential")]
    DisclosureMismatch,
    #[error("credential and issuer key use different schemes")]
    SchemeMismatch,
    #[error("credential does not verify under the issuer key")]
    InvalidCredential,
}

/// Flat claim set, ordered lexicographically by key.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeMap(BTreeMap<String, String>);

impl AttributeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) -> Option<String> {
        self.0.insert(key.into(), value.into())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// True if every (key, value) of `other` appears verbatim in `self`.
    pub fn contains_all(&self, other: &AttributeMap) -> bool {
        other.iter().all(|(k, v)| self.get(k) == Some(v))
    }

    /// Position of `key` in canonical order.
    pub(crate) fn position(&self, key: &str) -> Option<usize> {
        self.0.keys().position(|k| k == key)
    }
}

impl fmt::Debug for AttributeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

impl fmt::Display for AttributeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for AttributeMap {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        AttributeMap(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

impl Wire for AttributeMap {
    fn to_node(&self) -> Node {
        Node::map(self.0.iter().map(|(k, v)| (k.clone(), Node::text(v.clone()))))
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        node.as_map()?
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_text()?.to_owned())))
            .collect()
    }
}

/// Which credential construction backs a key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbcScheme {
    RandomizableSig,
    SaltedHash,
}

impl AbcScheme {
    pub fn label(self) -> &'static str {
        match self {
            AbcScheme::RandomizableSig => "bbs-style",
            AbcScheme::SaltedHash => "sd-hash",
        }
    }
}

impl fmt::Display for AbcScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AbcScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bbs-style" | "ps" | "randomizable" => Ok(AbcScheme::RandomizableSig),
            "sd-hash" => Ok(AbcScheme::SaltedHash),
            other => Err(format!("unknown credential scheme `{other}` (expected bbs-style or sd-hash)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IssuerPublicKey {
    RandomizableSig(ps::PublicKey),
    SaltedHash(sd_hash::PublicKey),
}

impl IssuerPublicKey {
    pub fn scheme(&self) -> AbcScheme {
        match self {
            IssuerPublicKey::RandomizableSig(_) => AbcScheme::RandomizableSig,
            IssuerPublicKey::SaltedHash(_) => AbcScheme::SaltedHash,
        }
    }

    pub fn max_attrs(&self) -> usize {
        match self {
            IssuerPublicKey::RandomizableSig(pk) => pk.max_attrs,
            IssuerPublicKey::SaltedHash(pk) => pk.max_attrs,
        }
    }
}

impl Wire for IssuerPublicKey {
    fn to_node(&self) -> Node {
        match self {
            IssuerPublicKey::RandomizableSig(pk) => Node::List(vec![Node::text("bbs-style"), pk.to_node()]),
            IssuerPublicKey::SaltedHash(pk) => Node::List(vec![Node::text("sd-hash"), pk.to_node()]),
        }
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("issuer public key", 2)?;
        match f.text()?.as_str() {
            "bbs-style" => Ok(IssuerPublicKey::RandomizableSig(f.decode()?)),
            "sd-hash" => Ok(IssuerPublicKey::SaltedHash(f.decode()?)),
            other => Err(WireError::shape(format!("unknown scheme {other}"))),
        }
    }
}

#[derive(Clone, Debug)]
enum IssuerSecretKey {
    RandomizableSig(ps::SecretKey),
    SaltedHash(sd_hash::SecretKey),
}

/// Issuer key material. The secret half never leaves this struct.
#[derive(Clone, Debug)]
pub struct IssuerKeyPair {
    pub ipk: IssuerPublicKey,
    isk: IssuerSecretKey,
}

impl IssuerKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(scheme: AbcScheme, max_attrs: usize, rng: &mut R) -> Result<Self, AbcError> {
        if max_attrs == 0 {
            return Err(AbcError::InvalidParameter("max_attrs must be at least 1"));
        }
        Ok(match scheme {
            AbcScheme::RandomizableSig => {
                let (sk, pk) = ps::keygen(max_attrs, rng);
                IssuerKeyPair { ipk: IssuerPublicKey::RandomizableSig(pk), isk: IssuerSecretKey::RandomizableSig(sk) }
            }
            AbcScheme::SaltedHash => {
                let (sk, pk) = sd_hash::keygen(max_attrs, rng);
                IssuerKeyPair { ipk: IssuerPublicKey::SaltedHash(pk), isk: IssuerSecretKey::SaltedHash(sk) }
            }
        })
    }

    pub fn issue<R: RngCore + CryptoRng>(
        &self,
        issuer_id: &str,
        attrs: &AttributeMap,
        rng: &mut R,
    ) -> Result<Credential, AbcError> {
        let max = self.ipk.max_attrs();
        if attrs.len() > max {
            return Err(AbcError::TooManyAttributes { got: attrs.len(), max });
        }
        let sigma = match &self.isk {
            IssuerSecretKey::RandomizableSig(sk) => CredentialSignature::RandomizableSig(ps::issue(sk, attrs, rng)),
            IssuerSecretKey::SaltedHash(sk) => CredentialSignature::SaltedHash(sd_hash::issue(sk, attrs, rng)),
        };
        Ok(Credential { attrs: attrs.clone(), sigma, issuer_id: issuer_id.to_owned() })
    }
}

/// Issuer signature object. Holds holder secrets; never put it in a group message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CredentialSignature {
    RandomizableSig(ps::CredentialSig),
    SaltedHash(sd_hash::CredentialSig),
}

impl Wire for CredentialSignature {
    fn to_node(&self) -> Node {
        match self {
            CredentialSignature::RandomizableSig(s) => Node::List(vec![Node::text("bbs-style"), s.to_node()]),
            CredentialSignature::SaltedHash(s) => Node::List(vec![Node::text("sd-hash"), s.to_node()]),
        }
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("credential signature", 2)?;
        match f.text()?.as_str() {
            "bbs-style" => Ok(CredentialSignature::RandomizableSig(f.decode()?)),
            "sd-hash" => Ok(CredentialSignature::SaltedHash(f.decode()?)),
            other => Err(WireError::shape(format!("unknown scheme {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credential {
    pub attrs: AttributeMap,
    pub sigma: CredentialSignature,
    pub issuer_id: String,
}

impl Wire for Credential {
    fn to_node(&self) -> Node {
        Node::List(vec![self.attrs.to_node(), self.sigma.to_node(), Node::text(&self.issuer_id)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("credential", 3)?;
        Ok(Credential { attrs: f.decode()?, sigma: f.decode()?, issuer_id: f.text()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PresentationProof {
    RandomizableSig(ps::Proof),
    SaltedHash(sd_hash::Proof),
}

impl Wire for PresentationProof {
    fn to_node(&self) -> Node {
        match self {
            PresentationProof::RandomizableSig(p) => Node::List(vec![Node::text("bbs-style"), p.to_node()]),
            PresentationProof::SaltedHash(p) => Node::List(vec![Node::text("sd-hash"), p.to_node()]),
        }
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("presentation proof", 2)?;
        match f.text()?.as_str() {
            "bbs-style" => Ok(PresentationProof::RandomizableSig(f.decode()?)),
            "sd-hash" => Ok(PresentationProof::SaltedHash(f.decode()?)),
            other => Err(WireError::shape(format!("unknown scheme {other}"))),
        }
    }
}

/// Holder-derived proof of possession of a subset of credential claims.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    pub header: Vec<u8>,
    pub disc_attrs: AttributeMap,
    pub pi: PresentationProof,
    pub issuer_id: String,
}

impl Wire for Presentation {
    fn to_node(&self) -> Node {
        Node::List(vec![
            Node::bytes(&self.header),
            self.disc_attrs.to_node(),
            self.pi.to_node(),
            Node::text(&self.issuer_id),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("presentation", 4)?;
        Ok(Presentation { header: f.bytes()?, disc_attrs: f.decode()?, pi: f.decode()?, issuer_id: f.text()? })
    }
}

pub fn abc_keygen<R: RngCore + CryptoRng>(scheme: AbcScheme, max_attrs: usize, rng: &mut R) -> Result<IssuerKeyPair, AbcError> {
    IssuerKeyPair::generate(scheme, max_attrs, rng)
}

pub fn abc_issue<R: RngCore + CryptoRng>(
    issuer: &IssuerKeyPair,
    issuer_id: &str,
    attrs: &AttributeMap,
    rng: &mut R,
) -> Result<Credential, AbcError> {
    issuer.issue(issuer_id, attrs, rng)
}

/// Total: returns false for any malformed or mismatched input.
pub fn abc_verify_cred(ipk: &IssuerPublicKey, cred: &Credential) -> bool {
    if cred.attrs.len() > ipk.max_attrs() {
        return false;
    }
    match (ipk, &cred.sigma) {
        (IssuerPublicKey::RandomizableSig(pk), CredentialSignature::RandomizableSig(sig)) => ps::verify_cred(pk, &cred.attrs, sig),
        (IssuerPublicKey::SaltedHash(pk), CredentialSignature::SaltedHash(sig)) => sd_hash::verify_cred(pk, &cred.attrs, sig),
        _ => false,
    }
}

pub fn abc_prove<R: RngCore + CryptoRng>(
    ipk: &IssuerPublicKey,
    cred: &Credential,
    disc_attrs: &AttributeMap,
    header: &[u8],
    rng: &mut R,
) -> Result<Presentation, AbcError> {
    if !cred.attrs.contains_all(disc_attrs) {
        return Err(AbcError::DisclosureMismatch);
    }
    let pi = match (ipk, &cred.sigma) {
        (IssuerPublicKey::RandomizableSig(pk), CredentialSignature::RandomizableSig(sig)) => {
            PresentationProof::RandomizableSig(ps::prove(pk, &cred.issuer_id, &cred.attrs, sig, disc_attrs, header, rng))
        }
        (IssuerPublicKey::SaltedHash(_), CredentialSignature::SaltedHash(sig)) => {
            PresentationProof::SaltedHash(sd_hash::prove(&cred.attrs, sig, disc_attrs, header))
        }
        _ => return Err(AbcError::SchemeMismatch),
    };
    Ok(Presentation { header: header.to_vec(), disc_attrs: disc_attrs.clone(), pi, issuer_id: cred.issuer_id.clone() })
}

/// Total: returns false for any malformed or mismatched input.
pub fn abc_verify_proof(ipk: &IssuerPublicKey, p: &Presentation, header: &[u8]) -> bool {
    if p.header != header || p.disc_attrs.len() > ipk.max_attrs() {
        return false;
    }
    match (ipk, &p.pi) {
        (IssuerPublicKey::RandomizableSig(pk), PresentationProof::RandomizableSig(pi)) => {
            ps::verify_proof(pk, &p.issuer_id, &p.disc_attrs, header, pi)
        }
        (IssuerPublicKey::SaltedHash(pk), PresentationProof::SaltedHash(pi)) => sd_hash::verify_proof(pk, &p.disc_attrs, header, pi),
        _ => false,
    }
}

/// Byte strings inside `sigma` that must never appear in a presentation.
pub fn sigma_fragments(sigma: &CredentialSignature) -> Vec<Vec<u8>> {
    let mut out = vec![sigma.to_wire()];
    match sigma {
        CredentialSignature::RandomizableSig(s) => out.extend(s.fragments()),
        CredentialSignature::SaltedHash(s) => out.extend(s.fragments()),
    }
    out
}

#[cfg(test)]
mod tests;
