//! Reference computations written independently of the production code paths.

use hmac::{Hmac, Mac};
use sha2::Sha256;

/// Extract-then-expand written directly against HMAC-SHA256, zero salt.
pub fn reference_hkdf(secret: &[u8], info: &[u8], n: usize) -> Vec<u8> {
    let mut ext = <Hmac<Sha256> as Mac>::new_from_slice(&[0u8; 32]).unwrap();
    ext.update(secret);
    let prk = ext.finalize().into_bytes();
    let mut out = Vec::new();
    let mut t: Vec<u8> = Vec::new();
    let mut i = 1u8;
    while out.len() < n {
        let mut m = <Hmac<Sha256> as Mac>::new_from_slice(&prk).unwrap();
        m.update(&t);
        m.update(info);
        m.update(&[i]);
        t = m.finalize().into_bytes().to_vec();
        out.extend_from_slice(&t);
        i += 1;
    }
    out.truncate(n);
    out
}

/// The labelled kdf layout, rebuilt by hand.
pub fn reference_kdf32(secret: &[u8], label: &str, context: &[u8]) -> [u8; 32] {
    let mut info = (label.len() as u16).to_be_bytes().to_vec();
    info.extend_from_slice(label.as_bytes());
    info.extend_from_slice(context);
    reference_hkdf(secret, &info, 32).try_into().unwrap()
}

/// SHA-256 of the concatenation, through the sha2 crate directly.
pub fn reference_hash(parts: &[&[u8]]) -> [u8; 32] {
    use sha2::Digest;
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}
