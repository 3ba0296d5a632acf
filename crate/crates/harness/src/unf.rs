//! Unforgeability: can an adversary get a new member inserted whose key it
//! knows, without holding an exposed credential that meets the requirements?

use aacgka::aacgka::{reqs_met, AaCommit, PresentationPackage, UserState};
use aacgka::abc::AbcScheme;
use aacgka::cgka::{CgkaState, KpType};
use aacgka::primitives::hash;
use aacgka::wire::Wire;
use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

use crate::env::{acme_reqs, GameEnv, OracleError};
use crate::{run_trials, GameKind, GameResult, HarnessError, Outcome};

pub const ADVERSARIES: &[&str] = &["pp-copy", "tampered-kp", "spliced-presentation", "exposed-credential"];

/// First-phase output: who commits, whom to insert, and with what.
pub struct UnfChoice {
    pub id: String,
    pub target: String,
    pub pp: PresentationPackage,
    pub prop_type: String,
}

pub trait UnfAdversary {
    fn choose(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<UnfChoice, OracleError>;
    /// Guess of the group secret after the challenger's commit.
    fn guess(&mut self, env: &mut GameEnv, c: &AaCommit, rng: &mut ChaCha20Rng) -> [u8; 32];
}

pub fn adversary(label: &str) -> Option<Box<dyn UnfAdversary>> {
    Some(match label {
        "pp-copy" => Box::new(PpCopy),
        "tampered-kp" => Box::new(TamperedKp { own: None }),
        "spliced-presentation" => Box::new(Spliced { own: None }),
        "exposed-credential" => Box::new(Exposed { own: None }),
        _ => return None,
    })
}

fn random32(rng: &mut ChaCha20Rng) -> [u8; 32] {
    let mut k = [0u8; 32];
    rng.fill_bytes(&mut k);
    k
}

/// Group at alice; carol joins first half the time.
fn founded(env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(), OracleError> {
    env.q_create("alice", &acme_reqs())?;
    if rng.next_u32() & 1 == 1 {
        env.q_propose("alice", "carol", "add")?;
        env.q_commit("alice", &[env.proposals().len() - 1])?;
        let i = env.commits().len() - 1;
        env.q_process("alice", i)?;
        env.q_process("carol", i)?;
    }
    Ok(())
}

fn honest_pp(env: &mut GameEnv, target: &str) -> Result<PresentationPackage, OracleError> {
    let (_, pp) = env.q_propose("alice", target, "add")?;
    Ok(pp.expect("add proposals carry a package"))
}

/// Guess from a CGKA state the adversary owns: if the welcome opens, the
/// adversary really knows the key.
fn guess_with(own: &mut Option<CgkaState>, c: &AaCommit, rng: &mut ChaCha20Rng) -> [u8; 32] {
    if let (Some(state), Some(w)) = (own.as_mut(), c.w.as_ref()) {
        if state.process_welcome(&w.welcome).is_ok() {
            return state.group_secret().expect("joined");
        }
    }
    random32(rng)
}

/// Resubmits an honest package from the list, possibly from an old epoch,
/// for its owner or someone else.
struct PpCopy;

impl UnfAdversary for PpCopy {
    fn choose(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<UnfChoice, OracleError> {
        founded(env, rng)?;
        honest_pp(env, "bob")?;
        if rng.next_u32() % 3 == 0 {
            env.q_commit("alice", &[])?;
            let i = env.commits().len() - 1;
            env.q_process("alice", i)?;
        }
        let pp = env.pp_list()[rng.next_u32() as usize % env.pp_list().len()].clone();
        let target = if rng.next_u32() & 1 == 1 { "bob" } else { "mallory" };
        Ok(UnfChoice { id: "alice".into(), target: target.into(), pp, prop_type: "add".into() })
    }

    fn guess(&mut self, _env: &mut GameEnv, c: &AaCommit, rng: &mut ChaCha20Rng) -> [u8; 32] {
        if rng.next_u32() & 1 == 1 {
            hash(&c.to_wire()).0
        } else {
            random32(rng)
        }
    }
}

/// Keeps an honest presentation and swaps in its own key package.
struct TamperedKp {
    own: Option<CgkaState>,
}

impl UnfAdversary for TamperedKp {
    fn choose(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<UnfChoice, OracleError> {
        founded(env, rng)?;
        let mut pp = honest_pp(env, "bob")?;
        let mut eve = CgkaState::init("eve", rng).map_err(|e| OracleError::Assertion(e.to_string()))?;
        let mut kp = eve.genkp(KpType::Add, rng).map_err(|e| OracleError::Assertion(e.to_string()))?;
        if rng.next_u32() & 1 == 1 {
            // Claim the presenter's signature key; the package signature no
            // longer matches.
            kp.spk = pp.kp.spk;
        }
        pp.kp = kp;
        self.own = Some(eve);
        Ok(UnfChoice { id: "alice".into(), target: "eve".into(), pp, prop_type: "add".into() })
    }

    fn guess(&mut self, _env: &mut GameEnv, c: &AaCommit, rng: &mut ChaCha20Rng) -> [u8; 32] {
        guess_with(&mut self.own, c, rng)
    }
}

/// Rebinds an honest presentation to its own key, or combines parts of two
/// honest packages.
struct Spliced {
    own: Option<CgkaState>,
}

impl UnfAdversary for Spliced {
    fn choose(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<UnfChoice, OracleError> {
        founded(env, rng)?;
        let a = honest_pp(env, "bob")?;
        let b = honest_pp(env, "carol").or_else(|_| honest_pp(env, "bob"))?;
        let pp = if rng.next_u32() & 1 == 1 {
            let mut eve = CgkaState::init("eve", rng).map_err(|e| OracleError::Assertion(e.to_string()))?;
            let kp = eve.genkp(KpType::Add, rng).map_err(|e| OracleError::Assertion(e.to_string()))?;
            let mut p = a.p.clone();
            let mut header = aacgka::aacgka::Header::from_wire(&p.header).map_err(|e| OracleError::Assertion(e.to_string()))?;
            header.spk = kp.spk;
            p.header = header.to_wire();
            self.own = Some(eve);
            PresentationPackage { p, kp }
        } else {
            PresentationPackage { p: a.p.clone(), kp: b.kp.clone() }
        };
        Ok(UnfChoice { id: "alice".into(), target: "eve".into(), pp, prop_type: "add".into() })
    }

    fn guess(&mut self, _env: &mut GameEnv, c: &AaCommit, rng: &mut ChaCha20Rng) -> [u8; 32] {
        guess_with(&mut self.own, c, rng)
    }
}

/// Joins with an exposed qualifying credential. It learns the key, but the
/// game rules such wins out.
struct Exposed {
    own: Option<UserState>,
}

impl UnfAdversary for Exposed {
    fn choose(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<UnfChoice, OracleError> {
        founded(env, rng)?;
        let cred = env.q_expose_cred("bob")?;
        let ipk = env.pki().ipk(&cred.issuer_id)?.clone();
        let mut eve = UserState::from_credential("eve", ipk, cred, rng)?;
        let gi = env.q_publish_info("alice")?;
        let pp = eve.present(&gi, KpType::Add, rng)?;
        self.own = Some(eve);
        Ok(UnfChoice { id: "alice".into(), target: "eve".into(), pp, prop_type: "add".into() })
    }

    fn guess(&mut self, env: &mut GameEnv, c: &AaCommit, rng: &mut ChaCha20Rng) -> [u8; 32] {
        if let Some(eve) = self.own.as_mut() {
            if eve.process(c, env.pki()) {
                return eve.state.group_secret().expect("joined");
            }
        }
        random32(rng)
    }
}

pub fn unf_trial(env: &mut GameEnv, adv: &mut dyn UnfAdversary, rng: &mut ChaCha20Rng) -> Outcome {
    let choice = match adv.choose(env, rng) {
        Ok(c) => c,
        Err(e) => return Outcome::Invalid(format!("adversary failed: {e}")),
    };
    let c = match env.challenger_commit(&choice.id, &choice.target, &choice.prop_type, &choice.pp) {
        Ok(c) => c,
        Err(e) => {
            env.note(format!("challenger commit rejected: {e}"));
            return Outcome::Loss;
        }
    };
    let k_guess = adv.guess(env, &c, rng);
    let (before, after, ok) = env.challenger_process_members(&choice.id, &c);
    env.note(format!("challenger process {} ok={ok}", choice.id));
    if after.is_subset(&before) {
        return Outcome::Loss;
    }
    let reqs = env.state[&choice.id].reqs.clone();
    let key_known = env.state[&choice.id].state.group_secret() == Some(k_guess);
    if env.q_creds().iter().any(|cred| reqs_met(&cred.attrs, &reqs).is_some()) {
        return if key_known { Outcome::Excluded("exposed credential meets the requirements".into()) } else { Outcome::Loss };
    }
    if key_known {
        Outcome::Win
    } else {
        Outcome::Loss
    }
}

pub fn run_unf_game(label: &str, trials: usize, seed: u64, scheme: AbcScheme) -> Result<GameResult, HarnessError> {
    adversary(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::Unf, adversary: label.into() })?;
    let mut setup_err = None;
    let result = run_trials(GameKind::Unf, label, scheme, trials, seed, |env_seed, rng, log| {
        let mut env = match GameEnv::standard(scheme, env_seed) {
            Ok(env) => env,
            Err(e) => {
                setup_err = Some(e.to_string());
                return Outcome::Invalid("setup".into());
            }
        };
        let mut adv = adversary(label).expect("label checked");
        let out = unf_trial(&mut env, adv.as_mut(), rng);
        log.extend(env.log().iter().cloned());
        out
    });
    match setup_err {
        Some(e) => Err(HarnessError::Setup(e)),
        None => Ok(result),
    }
}
