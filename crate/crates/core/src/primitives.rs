//! Fixed cryptographic suite used by every upper layer.
//!
//! * hash: SHA-256
//! * kdf: HKDF-SHA256 (extract with an all-zero salt, expand with a
//!   length-prefixed label followed by the caller context)
//! * signatures: Ed25519 with strict verification
//! * sealing: ephemeral X25519 + HKDF-SHA256 + ChaCha20-Poly1305
//!
//! All randomness comes from a caller-supplied RNG so tests and scenario
//! runs are reproducible from a seed.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hkdf::Hkdf;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublicKey, StaticSecret};

/// Output length of [`hash`] in bytes.
pub const DIGEST_LEN: usize = 32;

const SEAL_KEY_LABEL: &str = "seal-key";
const SEAL_AAD: &[u8] = b"aacgka seal v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("authenticated decryption failed")]
    OpenFailed,
}

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First `n` bytes rendered as hex, for log lines.
    pub fn short_hex(&self, n: usize) -> String {
        hex::encode(&self.0[..n.min(DIGEST_LEN)])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn hash(input: &[u8]) -> Digest {
    Digest(Sha256::digest(input).into())
}

/// Hash of the plain concatenation of `parts`.
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// HKDF-SHA256 with `info = u16_be(len(label)) ‖ label ‖ context`.
pub fn kdf(secret: &[u8], label: &str, context: &[u8], out_len: usize) -> Result<Vec<u8>, CryptoError> {
    if out_len == 0 {
        return Err(CryptoError::InvalidParameter("kdf output length must be at least 1"));
    }
    if label.len() > u16::MAX as usize {
        return Err(CryptoError::InvalidParameter("kdf label too long"));
    }
    let mut info = Vec::with_capacity(2 + label.len() + context.len());
    info.extend_from_slice(&(label.len() as u16).to_be_bytes());
    info.extend_from_slice(label.as_bytes());
    info.extend_from_slice(context);
    let hk = Hkdf::<Sha256>::new(None, secret);
    let mut out = vec![0u8; out_len];
    hk.expand(&info, &mut out)
        .map_err(|_| CryptoError::InvalidParameter("kdf output length exceeds 255 * 32"))?;
    Ok(out)
}

/// [`kdf`] with a 32-byte output.
pub fn kdf32(secret: &[u8], label: &str, context: &[u8]) -> [u8; 32] {
    let v = kdf(secret, label, context, 32).expect("32 is a valid kdf length");
    v.try_into().expect("length checked")
}

// ---------------------------------------------------------------------------
// Signatures

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SigPublicKey(pub [u8; 32]);

impl fmt::Debug for SigPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigPublicKey({})", hex::encode(&self.0[..8]))
    }
}

/// Ed25519 signing key. Has no wire encoding.
#[derive(Clone)]
pub struct SigSecretKey(SigningKey);

impl fmt::Debug for SigSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigSecretKey(..)")
    }
}

impl SigSecretKey {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        SigSecretKey(SigningKey::from_bytes(&seed))
    }

    pub fn public_key(&self) -> SigPublicKey {
        SigPublicKey(self.0.verifying_key().to_bytes())
    }

    pub fn seed(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, Debug)]
pub struct SigKeyPair {
    pub spk: SigPublicKey,
    pub ssk: SigSecretKey,
}

pub fn sig_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> SigKeyPair {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let ssk = SigSecretKey::from_seed(seed);
    SigKeyPair { spk: ssk.public_key(), ssk }
}

pub fn sig_sign(ssk: &SigSecretKey, msg: &[u8]) -> Signature {
    Signature(ssk.0.sign(msg).to_bytes())
}

/// Never panics: malformed keys or signatures verify as `false`.
pub fn sig_verify(spk: &SigPublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&spk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(msg, &sig).is_ok()
}

// ---------------------------------------------------------------------------
// Sealing

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SealPublicKey(pub [u8; 32]);

impl fmt::Debug for SealPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SealPublicKey({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone)]
pub struct SealSecretKey([u8; 32]);

impl fmt::Debug for SealSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SealSecretKey(..)")
    }
}

impl SealSecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SealSecretKey(bytes)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0
    }

    pub fn public_key(&self) -> SealPublicKey {
        let s = StaticSecret::from(self.0);
        SealPublicKey(XPublicKey::from(&s).to_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct SealKeyPair {
    pub epk: SealPublicKey,
    pub esk: SealSecretKey,
}

/// Output of [`seal`]: the ephemeral public share plus the AEAD body.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub enc: [u8; 32],
    pub body: Vec<u8>,
}

pub fn seal_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> SealKeyPair {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    seal_keypair_from_seed(&seed)
}

/// Deterministic key pair, used for keys derived from a shared secret.
pub fn seal_keypair_from_seed(seed: &[u8; 32]) -> SealKeyPair {
    let esk = SealSecretKey(*seed);
    SealKeyPair { epk: esk.public_key(), esk }
}

fn seal_aead_key(shared: &[u8; 32], enc: &[u8; 32], epk: &SealPublicKey) -> [u8; 32] {
    let mut ctx = Vec::with_capacity(64);
    ctx.extend_from_slice(enc);
    ctx.extend_from_slice(&epk.0);
    kdf32(shared, SEAL_KEY_LABEL, &ctx)
}

pub fn seal<R: RngCore + CryptoRng>(epk: &SealPublicKey, msg: &[u8], rng: &mut R) -> Ciphertext {
    let mut eph = [0u8; 32];
    rng.fill_bytes(&mut eph);
    let eph = StaticSecret::from(eph);
    let enc = XPublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublicKey::from(epk.0)).to_bytes();
    let key = seal_aead_key(&shared, &enc, epk);
    // Each AEAD key is used for exactly one message, so a fixed nonce is sound.
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let body = cipher
        .encrypt(Nonce::from_slice(&[0u8; 12]), Payload { msg, aad: SEAL_AAD })
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    Ciphertext { enc, body }
}

pub fn open(esk: &SealSecretKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    let secret = StaticSecret::from(esk.0);
    let epk = SealPublicKey(XPublicKey::from(&secret).to_bytes());
    let shared = secret.diffie_hellman(&XPublicKey::from(ct.enc)).to_bytes();
    let key = seal_aead_key(&shared, &ct.enc, &epk);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    cipher
        .decrypt(Nonce::from_slice(&[0u8; 12]), Payload { msg: &ct.body, aad: SEAL_AAD })
        .map_err(|_| CryptoError::OpenFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn hash_empty_matches_sha256_vector() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_is_deterministic_and_bit_sensitive() {
        let x = b"attribute-authenticated".to_vec();
        assert_eq!(hash(&x), hash(&x));
        let mut y = x.clone();
        y[3] ^= 0x01;
        assert_ne!(hash(&x), hash(&y));
        assert_eq!(hash_concat(&[b"ab", b"c"]), hash(b"abc"));
    }

    #[test]
    fn kdf_rejects_zero_length() {
        assert_eq!(
            kdf(b"s", "epoch", b"", 0),
            Err(CryptoError::InvalidParameter("kdf output length must be at least 1"))
        );
        assert!(kdf(b"s", "epoch", b"", 255 * 32 + 1).is_err());
    }

    #[test]
    fn kdf_separates_labels() {
        let a = kdf(b"secret", "epoch", b"ctx", 32).unwrap();
        let b = kdf(b"secret", "group-pk", b"ctx", 32).unwrap();
        assert_eq!(a, kdf(b"secret", "epoch", b"ctx", 32).unwrap());
        assert_ne!(a, b);
    }

    #[test]
    fn signature_round_trip_and_rejections() {
        let mut rng = rng();
        let kp = sig_keygen(&mut rng);
        let other = sig_keygen(&mut rng);
        let sig = sig_sign(&kp.ssk, b"m");
        assert!(sig_verify(&kp.spk, b"m", &sig));
        assert!(!sig_verify(&kp.spk, b"m'", &sig));
        assert!(!sig_verify(&other.spk, b"m", &sig));
        assert!(!sig_verify(&SigPublicKey([0xff; 32]), b"m", &sig));
        assert!(!sig_verify(&kp.spk, b"m", &Signature([0u8; 64])));
    }

    #[test]
    fn seal_round_trip_and_wrong_key() {
        let mut rng = rng();
        let kp = seal_keygen(&mut rng);
        let other = seal_keygen(&mut rng);
        let ct = seal(&kp.epk, b"welcome", &mut rng);
        assert_eq!(open(&kp.esk, &ct).unwrap(), b"welcome");
        assert_eq!(open(&other.esk, &ct), Err(CryptoError::OpenFailed));
        let ct2 = seal(&kp.epk, b"welcome", &mut rng);
        assert_ne!(ct, ct2);
        let mut tampered = ct.clone();
        tampered.body[0] ^= 1;
        assert_eq!(open(&kp.esk, &tampered), Err(CryptoError::OpenFailed));
    }

    #[test]
    fn seeded_keypair_is_deterministic() {
        let a = seal_keypair_from_seed(&[9u8; 32]);
        let b = seal_keypair_from_seed(&[9u8; 32]);
        assert_eq!(a.epk, b.epk);
        assert_eq!(a.esk.public_key(), a.epk);
    }

    // Frozen from an HKDF computed outside this crate (Python hmac/hashlib,
    // confirmed against the `cryptography` package).
    #[test]
    fn kdf_known_answers() {
        let secret: Vec<u8> = (0u8..32).collect();
        assert_eq!(
            hex::encode(kdf(&secret, "epoch", b"context", 32).unwrap()),
            "aebea5e6b3765ff51ba47693a41b42842f14018a12affdce40db37f719866eaa"
        );
        assert_eq!(
            hex::encode(kdf(&secret, "group-kem", &[1, 2], 80).unwrap()),
            "5dec293a511a39cf2e7259b73c337a356fa6b0b925f7161d219e4c8568d40975\
             809d96cd54c6c12b529b3a129ab4545a3c369364c111436c6e00b69c40f293a2\
             5509341a1b3cdc68fec0ad01b4ba8423"
        );
    }

    #[test]
    fn sign_verify_thousand_messages_with_tampering() {
        use rand_core::RngCore;
        let mut rng = rng();
        let kp = sig_keygen(&mut rng);
        for i in 0..1000 {
            let mut msg = vec![0u8; (rng.next_u32() % 200) as usize + 1];
            rng.fill_bytes(&mut msg);
            let sig = sig_sign(&kp.ssk, &msg);
            assert!(sig_verify(&kp.spk, &msg, &sig), "round trip {i}");

            let bit = rng.next_u32() as usize % (msg.len() * 8);
            let mut bad_msg = msg.clone();
            bad_msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!sig_verify(&kp.spk, &bad_msg, &sig), "message tamper {i}");

            let bit = rng.next_u32() as usize % 512;
            let mut bad_sig = sig;
            bad_sig.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!sig_verify(&kp.spk, &msg, &bad_sig), "signature tamper {i}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn kdf_matches_reference(
            secret in proptest::collection::vec(proptest::prelude::any::<u8>(), 0..80),
            label in "[a-z-]{0,24}",
            context in proptest::collection::vec(proptest::prelude::any::<u8>(), 0..64),
            n in 1usize..300,
        ) {
            let mut info = (label.len() as u16).to_be_bytes().to_vec();
            info.extend_from_slice(label.as_bytes());
            info.extend_from_slice(&context);
            proptest::prop_assert_eq!(kdf(&secret, &label, &context, n).unwrap(), crate::test_oracle::reference_hkdf(&secret, &info, n));
        }

        #[test]
        fn seal_round_trips_up_to_64k(len in 0usize..=65536, seed in proptest::prelude::any::<u64>()) {
            use rand_core::{RngCore, SeedableRng};
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let kp = seal_keygen(&mut rng);
            let mut msg = vec![0u8; len];
            rng.fill_bytes(&mut msg);
            let ct = seal(&kp.epk, &msg, &mut rng);
            proptest::prop_assert_eq!(open(&kp.esk, &ct).unwrap(), msg);
        }
    }
}
