//! Existential unforgeability of the signature scheme under chosen-message
//! attack.

use aacgka::primitives::{sig_keygen, sig_sign, sig_verify, SigKeyPair, SigPublicKey, Signature};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{run_trials, GameKind, GameResult, HarnessError, Outcome};

pub const ADVERSARIES: &[&str] = &["random-sig", "extension", "own-key", "bit-flip", "resubmit"];

pub struct EufCmaEnv {
    keys: SigKeyPair,
    sigs: Vec<Vec<u8>>,
}

impl EufCmaEnv {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        EufCmaEnv { keys: sig_keygen(&mut rng), sigs: Vec::new() }
    }

    pub fn spk(&self) -> SigPublicKey {
        self.keys.spk
    }

    pub fn q_sign(&mut self, m: &[u8]) -> Signature {
        self.sigs.push(m.to_vec());
        sig_sign(&self.keys.ssk, m)
    }

    pub fn judge(&self, m: &[u8], sig: &Signature) -> Outcome {
        if self.sigs.iter().any(|q| q == m) {
            return Outcome::Excluded("message was queried".into());
        }
        if sig_verify(&self.keys.spk, m, sig) {
            Outcome::Win
        } else {
            Outcome::Loss
        }
    }
}

pub trait Forger {
    fn forge(&mut self, env: &mut EufCmaEnv, rng: &mut ChaCha20Rng) -> (Vec<u8>, Signature);
}

pub fn adversary(label: &str) -> Option<Box<dyn Forger>> {
    Some(match label {
        "random-sig" => Box::new(RandomSig),
        "extension" => Box::new(Extension),
        "own-key" => Box::new(OwnKey),
        "bit-flip" => Box::new(BitFlip),
        "resubmit" => Box::new(Resubmit),
        _ => return None,
    })
}

fn message(rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut m = vec![0u8; 1 + rng.next_u32() as usize % 64];
    rng.fill_bytes(&mut m);
    m
}

struct RandomSig;

impl Forger for RandomSig {
    fn forge(&mut self, _env: &mut EufCmaEnv, rng: &mut ChaCha20Rng) -> (Vec<u8>, Signature) {
        let mut s = [0u8; 64];
        rng.fill_bytes(&mut s);
        (message(rng), Signature(s))
    }
}

/// Reuses a signature on a message with appended bytes.
struct Extension;

impl Forger for Extension {
    fn forge(&mut self, env: &mut EufCmaEnv, rng: &mut ChaCha20Rng) -> (Vec<u8>, Signature) {
        let mut m = message(rng);
        let sig = env.q_sign(&m);
        m.push(rng.next_u32() as u8);
        (m, sig)
    }
}

/// Signs a fresh message under a key of its own.
struct OwnKey;

impl Forger for OwnKey {
    fn forge(&mut self, _env: &mut EufCmaEnv, rng: &mut ChaCha20Rng) -> (Vec<u8>, Signature) {
        let own = sig_keygen(rng);
        let m = message(rng);
        let sig = sig_sign(&own.ssk, &m);
        (m, sig)
    }
}

/// Flips one bit of the message and one of the signature.
struct BitFlip;

impl Forger for BitFlip {
    fn forge(&mut self, env: &mut EufCmaEnv, rng: &mut ChaCha20Rng) -> (Vec<u8>, Signature) {
        let mut m = message(rng);
        let mut sig = env.q_sign(&m);
        let i = rng.next_u32() as usize % m.len();
        m[i] ^= 1 << (rng.next_u32() % 8);
        if rng.next_u32() & 1 == 1 {
            sig.0[rng.next_u32() as usize % 64] ^= 1 << (rng.next_u32() % 8);
        }
        (m, sig)
    }
}

/// Hands back a queried message with its signature.
struct Resubmit;

impl Forger for Resubmit {
    fn forge(&mut self, env: &mut EufCmaEnv, rng: &mut ChaCha20Rng) -> (Vec<u8>, Signature) {
        let m = message(rng);
        let sig = env.q_sign(&m);
        (m, sig)
    }
}

pub fn run_eufcma_game(label: &str, trials: usize, seed: u64) -> Result<GameResult, HarnessError> {
    adversary(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::EufCma, adversary: label.into() })?;
    Ok(run_trials(GameKind::EufCma, label, aacgka::abc::AbcScheme::RandomizableSig, trials, seed, |env_seed, rng, log| {
        let mut env = EufCmaEnv::new(env_seed);
        let mut adv = adversary(label).expect("label checked");
        let (m, sig) = adv.forge(&mut env, rng);
        log.push(format!("queries={} forged_len={}", env.sigs.len(), m.len()));
        env.judge(&m, &sig)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_rules() {
        let mut env = EufCmaEnv::new(1);
        let sig = env.q_sign(b"m");
        assert!(matches!(env.judge(b"m", &sig), Outcome::Excluded(_)));
        assert_eq!(env.judge(b"n", &sig), Outcome::Loss);
        let other = EufCmaEnv::new(1);
        // A fresh message signed by the right key would count.
        assert_eq!(env.judge(b"n", &sig_sign(&other.keys.ssk, b"n")), Outcome::Win);
    }
}
