//! Randomizable signatures over BLS12-381 with a Fiat–Shamir disclosure proof.
//!
//! Issuer key: scalars (x, y_s, y_a), published in G2 as (X, Y_s, Y_a).
//! Every claim j gets its own two-message signature (h_j, h_j^(x + y_s s + y_a m_j))
//! on the holder secret s and the claim digest m_j. A base signature on a fixed
//! message proves possession even when nothing is disclosed. Sharing s across
//! all of them ties the claims to a single credential.

use blstrs::{Bls12, Compress, G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt, Scalar};
use ff::Field;
use group::prime::PrimeCurveAffine;
use group::{Curve, Group};
use pairing::{MillerLoopResult, MultiMillerLoop};
use rand_core::{CryptoRng, RngCore};

use super::AttributeMap;
use crate::primitives::kdf;
use crate::wire::{Node, Wire, WireError};

const BASE_MESSAGE: &[u8] = b"credential base";

#[derive(Clone, Debug)]
pub struct SecretKey {
    x: Scalar,
    y_s: Scalar,
    y_a: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    x: G2Affine,
    y_s: G2Affine,
    y_a: G2Affine,
    pub max_attrs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SigPair {
    h: G1Affine,
    v: G1Affine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialSig {
    holder_secret: Scalar,
    base: SigPair,
    /// One entry per claim, in canonical key order.
    claims: Vec<SigPair>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Component {
    h: G1Affine,
    v: G1Affine,
    z_t: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    c: Scalar,
    z_s: Scalar,
    base: Component,
    /// One entry per disclosed claim, in canonical key order.
    claims: Vec<Component>,
}

fn hash_to_scalar(label: &str, input: &[u8]) -> Scalar {
    let wide = kdf(input, label, b"", 62).expect("nonzero length");
    let mut hi = [0u8; 32];
    let mut lo = [0u8; 32];
    hi[..31].copy_from_slice(&wide[..31]);
    lo[..31].copy_from_slice(&wide[31..]);
    // Both halves are below 2^248 < r, so the conversions cannot fail.
    let hi = Scalar::from_bytes_le(&hi).unwrap();
    let lo = Scalar::from_bytes_le(&lo).unwrap();
    hi * Scalar::from(2u64).pow_vartime([248u64]) + lo
}

fn claim_message(key: &str, value: &str) -> Scalar {
    let enc = Node::List(vec![Node::text(key), Node::text(value)]).encode();
    hash_to_scalar("abc-claim", &enc)
}

fn base_message() -> Scalar {
    hash_to_scalar("abc-base", BASE_MESSAGE)
}

fn nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(&mut *rng);
        if !bool::from(s.is_zero()) {
            return s;
        }
    }
}

pub(super) fn keygen<R: RngCore + CryptoRng>(max_attrs: usize, rng: &mut R) -> (SecretKey, PublicKey) {
    let sk = SecretKey { x: nonzero_scalar(rng), y_s: nonzero_scalar(rng), y_a: nonzero_scalar(rng) };
    let g2 = G2Projective::generator();
    let pk = PublicKey {
        x: (g2 * sk.x).to_affine(),
        y_s: (g2 * sk.y_s).to_affine(),
        y_a: (g2 * sk.y_a).to_affine(),
        max_attrs,
    };
    (sk, pk)
}

fn sign_pair<R: RngCore + CryptoRng>(sk: &SecretKey, s: Scalar, m: Scalar, rng: &mut R) -> SigPair {
    let h = G1Projective::generator() * nonzero_scalar(rng);
    let v = h * (sk.x + sk.y_s * s + sk.y_a * m);
    SigPair { h: h.to_affine(), v: v.to_affine() }
}

pub(super) fn issue<R: RngCore + CryptoRng>(sk: &SecretKey, attrs: &AttributeMap, rng: &mut R) -> CredentialSig {
    let s = nonzero_scalar(rng);
    let base = sign_pair(sk, s, base_message(), rng);
    let claims = attrs.iter().map(|(k, v)| sign_pair(sk, s, claim_message(k, v), rng)).collect();
    CredentialSig { holder_secret: s, base, claims }
}

fn message_key(pk: &PublicKey, m: Scalar) -> G2Affine {
    (G2Projective::from(pk.x) + pk.y_a * m).to_affine()
}

fn check_pair(pk: &PublicKey, s: Scalar, m: Scalar, sig: &SigPair) -> bool {
    if bool::from(sig.h.is_identity()) {
        return false;
    }
    let q = (G2Projective::from(pk.x) + pk.y_s * s + pk.y_a * m).to_affine();
    let q = G2Prepared::from(q);
    let g2 = G2Prepared::from(G2Affine::generator());
    let neg_v = -sig.v;
    bool::from(Bls12::multi_miller_loop(&[(&sig.h, &q), (&neg_v, &g2)]).final_exponentiation().is_identity())
}

pub(super) fn verify_cred(pk: &PublicKey, attrs: &AttributeMap, sig: &CredentialSig) -> bool {
    if sig.claims.len() != attrs.len() {
        return false;
    }
    check_pair(pk, sig.holder_secret, base_message(), &sig.base)
        && attrs
            .iter()
            .zip(&sig.claims)
            .all(|((k, v), pair)| check_pair(pk, sig.holder_secret, claim_message(k, v), pair))
}

fn gt_bytes(t: Gt) -> Vec<u8> {
    let mut out = Vec::with_capacity(288);
    t.write_compressed(&mut out).expect("writing to a Vec cannot fail");
    out
}

fn challenge(pk: &PublicKey, issuer_id: &str, disc: &AttributeMap, header: &[u8], parts: &[(G1Affine, G1Affine, Gt)]) -> Scalar {
    let transcript = Node::List(vec![
        Node::text("abc-presentation"),
        Node::bytes(header),
        Node::text(issuer_id),
        pk.to_node(),
        disc.to_node(),
        Node::List(
            parts
                .iter()
                .map(|(h, v, t)| {
                    Node::List(vec![Node::bytes(h.to_compressed()), Node::bytes(v.to_compressed()), Node::bytes(gt_bytes(*t))])
                })
                .collect(),
        ),
    ]);
    hash_to_scalar("abc-challenge", &transcript.encode())
}

pub(super) fn prove<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    issuer_id: &str,
    attrs: &AttributeMap,
    sig: &CredentialSig,
    disc: &AttributeMap,
    header: &[u8],
    rng: &mut R,
) -> Proof {
    let mut selected = vec![sig.base];
    for (k, _) in disc.iter() {
        let idx = attrs.position(k).expect("disclosure checked by caller");
        selected.push(sig.claims[idx]);
    }

    let k_s = Scalar::random(&mut *rng);
    let y_s = G2Prepared::from(pk.y_s);
    let g2 = G2Prepared::from(G2Affine::generator());
    let mut parts = Vec::with_capacity(selected.len());
    let mut secrets = Vec::with_capacity(selected.len());
    for pair in &selected {
        let r = nonzero_scalar(rng);
        let t = Scalar::random(&mut *rng);
        let h = (pair.h * r).to_affine();
        let v = ((G1Projective::from(pair.v) + pair.h * t) * r).to_affine();
        let k_t = Scalar::random(&mut *rng);
        let a = (h * k_s).to_affine();
        let b = (h * k_t).to_affine();
        let commit = Bls12::multi_miller_loop(&[(&a, &y_s), (&b, &g2)]).final_exponentiation();
        parts.push((h, v, commit));
        secrets.push((t, k_t));
    }

    let c = challenge(pk, issuer_id, disc, header, &parts);
    let z_s = k_s + c * sig.holder_secret;
    let mut comps = parts
        .iter()
        .zip(&secrets)
        .map(|((h, v, _), (t, k_t))| Component { h: *h, v: *v, z_t: *k_t + c * t });
    let base = comps.next().expect("base component is always present");
    Proof { c, z_s, base, claims: comps.collect() }
}

pub(super) fn verify_proof(pk: &PublicKey, issuer_id: &str, disc: &AttributeMap, header: &[u8], proof: &Proof) -> bool {
    if proof.claims.len() != disc.len() {
        return false;
    }
    let y_s = G2Prepared::from(pk.y_s);
    let g2 = G2Prepared::from(G2Affine::generator());
    let messages = std::iter::once(base_message()).chain(disc.iter().map(|(k, v)| claim_message(k, v)));
    let comps = std::iter::once(&proof.base).chain(&proof.claims);
    let mut parts = Vec::with_capacity(disc.len() + 1);
    for (m, comp) in messages.zip(comps) {
        if bool::from(comp.h.is_identity()) {
            return false;
        }
        let a = (comp.h * proof.z_s).to_affine();
        let b = (comp.h * comp.z_t - comp.v * proof.c).to_affine();
        let d = (comp.h * proof.c).to_affine();
        let q = G2Prepared::from(message_key(pk, m));
        let commit = Bls12::multi_miller_loop(&[(&a, &y_s), (&b, &g2), (&d, &q)]).final_exponentiation();
        parts.push((comp.h, comp.v, commit));
    }
    challenge(pk, issuer_id, disc, header, &parts) == proof.c
}

impl CredentialSig {
    pub(super) fn fragments(&self) -> Vec<Vec<u8>> {
        let mut out = vec![self.holder_secret.to_bytes_le().to_vec()];
        for pair in std::iter::once(&self.base).chain(&self.claims) {
            out.push(pair.h.to_compressed().to_vec());
            out.push(pair.v.to_compressed().to_vec());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Wire encodings

fn scalar_node(s: &Scalar) -> Node {
    Node::bytes(s.to_bytes_le())
}

fn scalar_from(node: &Node) -> Result<Scalar, WireError> {
    Option::from(Scalar::from_bytes_le(&node.as_array()?)).ok_or_else(|| WireError::shape("scalar out of range"))
}

fn g1_node(p: &G1Affine) -> Node {
    Node::bytes(p.to_compressed())
}

fn g1_from(node: &Node) -> Result<G1Affine, WireError> {
    Option::from(G1Affine::from_compressed(&node.as_array()?)).ok_or_else(|| WireError::shape("invalid G1 point"))
}

fn g2_node(p: &G2Affine) -> Node {
    Node::bytes(p.to_compressed())
}

fn g2_from(node: &Node) -> Result<G2Affine, WireError> {
    Option::from(G2Affine::from_compressed(&node.as_array()?)).ok_or_else(|| WireError::shape("invalid G2 point"))
}

impl Wire for PublicKey {
    fn to_node(&self) -> Node {
        Node::List(vec![g2_node(&self.x), g2_node(&self.y_s), g2_node(&self.y_a), Node::Uint(self.max_attrs as u64)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("issuer key", 4)?;
        Ok(PublicKey { x: g2_from(f.next()?)?, y_s: g2_from(f.next()?)?, y_a: g2_from(f.next()?)?, max_attrs: f.uint()? as usize })
    }
}

impl Wire for SigPair {
    fn to_node(&self) -> Node {
        Node::List(vec![g1_node(&self.h), g1_node(&self.v)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("signature pair", 2)?;
        Ok(SigPair { h: g1_from(f.next()?)?, v: g1_from(f.next()?)? })
    }
}

impl Wire for CredentialSig {
    fn to_node(&self) -> Node {
        Node::List(vec![
            scalar_node(&self.holder_secret),
            self.base.to_node(),
            Node::List(self.claims.iter().map(Wire::to_node).collect()),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("credential signature", 3)?;
        Ok(CredentialSig { holder_secret: scalar_from(f.next()?)?, base: f.decode()?, claims: f.decode_list()? })
    }
}

impl Wire for Component {
    fn to_node(&self) -> Node {
        Node::List(vec![g1_node(&self.h), g1_node(&self.v), scalar_node(&self.z_t)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("proof component", 3)?;
        Ok(Component { h: g1_from(f.next()?)?, v: g1_from(f.next()?)?, z_t: scalar_from(f.next()?)? })
    }
}

impl Wire for Proof {
    fn to_node(&self) -> Node {
        Node::List(vec![
            scalar_node(&self.c),
            scalar_node(&self.z_s),
            self.base.to_node(),
            Node::List(self.claims.iter().map(Wire::to_node).collect()),
        ])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("proof", 4)?;
        Ok(Proof { c: scalar_from(f.next()?)?, z_s: scalar_from(f.next()?)?, base: f.decode()?, claims: f.decode_list()? })
    }
}
