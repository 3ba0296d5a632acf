//! Unlinkability: given a package presented by one of two qualifying users,
//! can an adversary tell which one?

use std::collections::HashSet;

use aacgka::aacgka::{reqs_met, GroupInfo, PresentationPackage};
use aacgka::abc::AbcScheme;
use aacgka::wire::Wire;
use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

use crate::env::{acme_reqs, GameEnv, OracleError};
use crate::{run_trials, GameKind, GameResult, HarnessError, Outcome};

pub const ADVERSARIES: &[&str] = &["bytes", "constant"];

pub trait UnlinkAdversary {
    fn choose(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(String, String, GroupInfo), OracleError>;
    /// Returns the guessed index (0 or 1).
    fn guess(&mut self, env: &mut GameEnv, pp: &PresentationPackage, rng: &mut ChaCha20Rng) -> usize;
}

pub fn adversary(label: &str) -> Option<Box<dyn UnlinkAdversary>> {
    Some(match label {
        "bytes" => Box::new(Bytes { refs: Vec::new() }),
        "constant" => Box::new(Constant),
        _ => return None,
    })
}

const WINDOW: usize = 16;

pub(crate) fn windows(bytes: &[u8]) -> HashSet<&[u8]> {
    bytes.windows(WINDOW).collect()
}

/// Picks the reference sharing more byte windows with `sample` that the
/// other reference does not have. Ties are broken with a coin.
pub(crate) fn closer_reference(sample: &[u8], refs: [&[u8]; 2], rng: &mut ChaCha20Rng) -> usize {
    let (w0, w1) = (windows(refs[0]), windows(refs[1]));
    let mut score = [0usize; 2];
    for w in sample.windows(WINDOW) {
        match (w0.contains(w), w1.contains(w)) {
            (true, false) => score[0] += 1,
            (false, true) => score[1] += 1,
            _ => {}
        }
    }
    match score[0].cmp(&score[1]) {
        std::cmp::Ordering::Greater => 0,
        std::cmp::Ordering::Less => 1,
        std::cmp::Ordering::Equal => (rng.next_u32() & 1) as usize,
    }
}

/// Collects an earlier package from each candidate and matches byte windows.
struct Bytes {
    refs: Vec<Vec<u8>>,
}

impl UnlinkAdversary for Bytes {
    fn choose(&mut self, env: &mut GameEnv, _rng: &mut ChaCha20Rng) -> Result<(String, String, GroupInfo), OracleError> {
        env.q_create("alice", &acme_reqs())?;
        for id in ["bob", "carol"] {
            let (_, pp) = env.q_propose("alice", id, "add")?;
            self.refs.push(pp.expect("add proposals carry a package").p.to_wire());
        }
        let gi = env.q_publish_info("alice")?;
        Ok(("bob".into(), "carol".into(), gi))
    }

    fn guess(&mut self, _env: &mut GameEnv, pp: &PresentationPackage, rng: &mut ChaCha20Rng) -> usize {
        closer_reference(&pp.p.to_wire(), [&self.refs[0], &self.refs[1]], rng)
    }
}

struct Constant;

impl UnlinkAdversary for Constant {
    fn choose(&mut self, env: &mut GameEnv, _rng: &mut ChaCha20Rng) -> Result<(String, String, GroupInfo), OracleError> {
        env.q_create("alice", &acme_reqs())?;
        let gi = env.q_publish_info("alice")?;
        Ok(("bob".into(), "carol".into(), gi))
    }

    fn guess(&mut self, _env: &mut GameEnv, _pp: &PresentationPackage, _rng: &mut ChaCha20Rng) -> usize {
        0
    }
}

pub fn unlink_trial(env: &mut GameEnv, adv: &mut dyn UnlinkAdversary, rng: &mut ChaCha20Rng) -> Outcome {
    let (id0, id1, gi) = match adv.choose(env, rng) {
        Ok(c) => c,
        Err(e) => return Outcome::Invalid(format!("adversary failed: {e}")),
    };
    let qualifies = |id: &str| env.state.get(id).is_some_and(|u| reqs_met(&u.attrs, &gi.reqs).is_some());
    if !qualifies(&id0) || !qualifies(&id1) {
        return Outcome::Invalid("a candidate does not meet the requirements".into());
    }
    let b = env.challenger_bit();
    let chosen = if b == 0 { &id0 } else { &id1 };
    let pp = match env.challenger_present(chosen, &gi) {
        Ok(pp) => pp,
        Err(e) => return Outcome::Invalid(format!("challenger present failed: {e}")),
    };
    let guess = adv.guess(env, &pp, rng);
    env.note(format!("challenger b={b} guess={guess}"));
    if guess == b {
        Outcome::Win
    } else {
        Outcome::Loss
    }
}

pub fn run_unlink_game(label: &str, trials: usize, seed: u64, scheme: AbcScheme) -> Result<GameResult, HarnessError> {
    adversary(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::Unlink, adversary: label.into() })?;
    let mut setup_err = None;
    let result = run_trials(GameKind::Unlink, label, scheme, trials, seed, |env_seed, rng, log| {
        let mut env = match GameEnv::standard(scheme, env_seed) {
            Ok(env) => env,
            Err(e) => {
                setup_err = Some(e.to_string());
                return Outcome::Invalid("setup".into());
            }
        };
        let mut adv = adversary(label).expect("label checked");
        let out = unlink_trial(&mut env, adv.as_mut(), rng);
        log.extend(env.log().iter().cloned());
        out
    });
    match setup_err {
        Some(e) => Err(HarnessError::Setup(e)),
        None => Ok(result),
    }
}
