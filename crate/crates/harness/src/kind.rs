//! Key indistinguishability of the group key agreement layer.
//!
//! The challenged key of epoch `t` is the group secret exported at `t`.
//! Challenge and reveal each mark `t`, so neither can follow the other on
//! the same epoch.

use std::collections::{BTreeMap, BTreeSet};

use aacgka::cgka::{group_keypair, CgkaCommit, CgkaState, GroupContext, KeyPackage, KpType, Proposal, Welcome};
use aacgka::primitives::{hash, kdf32};
use aacgka::wire::Wire;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{run_trials, GameKind, GameResult, HarnessError, Outcome};

pub const ADVERSARIES: &[&str] = &["transcript-kdf", "neighbor-reveal", "group-pk-check", "trivial", "constant"];

pub struct KindEnv {
    state: BTreeMap<String, CgkaState>,
    epoch: BTreeMap<String, u64>,
    props: Vec<Proposal>,
    comms: Vec<(u64, CgkaCommit, Option<Welcome>)>,
    keys: BTreeMap<u64, [u8; 32]>,
    chall: BTreeSet<u64>,
    b: usize,
    challenged: bool,
    corrupted: bool,
    blocked: usize,
    rng: ChaCha20Rng,
    log: Vec<String>,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

impl KindEnv {
    pub fn new(users: &[&str], seed: u64) -> Result<Self, String> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let b = (rng.next_u32() & 1) as usize;
        let mut env = KindEnv {
            state: BTreeMap::new(),
            epoch: BTreeMap::new(),
            props: Vec::new(),
            comms: Vec::new(),
            keys: BTreeMap::new(),
            chall: BTreeSet::new(),
            b,
            challenged: false,
            corrupted: false,
            blocked: 0,
            rng,
            log: Vec::new(),
        };
        for id in users {
            env.q_init(id)?;
        }
        Ok(env)
    }

    fn user(&mut self, id: &str) -> Result<&mut CgkaState, String> {
        self.state.get_mut(id).ok_or_else(|| format!("state[{id}] does not exist"))
    }

    fn tag(&self, id: &str) -> u64 {
        match self.epoch.get(id) {
            Some(e) => *e,
            None => self.state.get(id).and_then(|s| s.ctx.as_ref().map(|c| c.epoch)).unwrap_or(0),
        }
    }

    pub fn q_init(&mut self, id: &str) -> Result<(), String> {
        if self.state.contains_key(id) {
            return Err(format!("state[{id}] already exists"));
        }
        let s = CgkaState::init(id, &mut self.rng).map_err(err)?;
        self.state.insert(id.to_owned(), s);
        Ok(())
    }

    pub fn q_create(&mut self, id: &str) -> Result<(), String> {
        let mut rng = self.rng.clone();
        let out = self.user(id)?.create(&mut rng).map_err(err);
        self.rng = rng;
        self.log.push(format!("q_create {id}"));
        out
    }

    /// An external join is proposed by the joiner itself, from the context
    /// of member `id`.
    pub fn q_propose(&mut self, id: &str, target: &str, prop_type: &str) -> Result<(Proposal, Option<KeyPackage>), String> {
        let mut rng = self.rng.clone();
        let out = (|| -> Result<(Proposal, Option<KeyPackage>), String> { match prop_type {
            "add" => {
                let kp = self.user(target)?.genkp(KpType::Add, &mut rng).map_err(err)?;
                let prop = self.user(id)?.propose(target, "add", Some(kp.clone()), &mut rng).map_err(err)?;
                Ok((prop, Some(kp)))
            }
            "join" => {
                let ctx = self.user(id)?.context().ok_or("proposer is not a member")?;
                let joiner = self.user(target)?;
                joiner.ctx = Some(ctx);
                let kp = joiner.genkp(KpType::Join, &mut rng).map_err(err)?;
                let prop = joiner.propose(target, "join", Some(kp.clone()), &mut rng).map_err(err)?;
                Ok((prop, Some(kp)))
            }
            other => Ok((self.user(id)?.propose(target, other, None, &mut rng).map_err(err)?, None)),
        }})();
        self.rng = rng;
        self.log.push(format!("q_propose {id} {target} {prop_type} -> {}", if out.is_ok() { "ok" } else { "error" }));
        let (prop, kp) = out?;
        self.props.push(prop.clone());
        Ok((prop, kp))
    }

    pub fn q_commit(&mut self, id: &str, indices: &[usize]) -> Result<CgkaCommit, String> {
        let list = indices.iter().map(|i| self.props.get(*i).cloned().ok_or("bad index")).collect::<Result<Vec<_>, _>>()?;
        let tag = self.tag(id);
        let mut rng = self.rng.clone();
        let out = self.user(id)?.commit(&list, &mut rng).map_err(err);
        self.rng = rng;
        let (c, w) = out?;
        self.comms.push((tag, c.clone(), w));
        self.log.push(format!("q_commit {id} {indices:?} -> #{}", self.comms.len() - 1));
        Ok(c)
    }

    pub fn q_process(&mut self, id: &str, index: usize) -> Result<bool, String> {
        let (ep, c, w) = self.comms.get(index).cloned().ok_or("bad index")?;
        if let Some(e) = self.epoch.get(id) {
            if *e != ep {
                return Err(format!("epoch[{id}] = {e} but commit is for {ep}"));
            }
        }
        let s = self.user(id)?;
        let ok = if !s.in_group() && !c.is_external() {
            match w {
                Some(w) => s.process_welcome(&w).is_ok(),
                None => false,
            }
        } else {
            s.process_commit(&c).is_ok()
        };
        if ok {
            self.epoch.insert(id.to_owned(), ep + 1);
            if let Some(k) = self.state[id].group_secret() {
                self.keys.insert(ep + 1, k);
            }
        }
        self.log.push(format!("q_process {id} #{index} -> ok={ok}"));
        Ok(ok)
    }

    /// Public context of a member's current epoch.
    pub fn q_context(&mut self, id: &str) -> Result<GroupContext, String> {
        self.user(id)?.context().ok_or_else(|| "not a member".into())
    }

    pub fn q_challenge(&mut self, t: u64) -> Result<[u8; 32], String> {
        let k0 = self.mark(t, "q_challenge")?;
        self.challenged = true;
        let mut k1 = [0u8; 32];
        self.rng.fill_bytes(&mut k1);
        Ok(if self.b == 0 { k0 } else { k1 })
    }

    pub fn q_reveal(&mut self, t: u64) -> Result<[u8; 32], String> {
        self.mark(t, "q_reveal")
    }

    fn mark(&mut self, t: u64, what: &str) -> Result<[u8; 32], String> {
        let Some(k) = self.keys.get(&t).copied() else {
            self.log.push(format!("{what} {t} -> no key"));
            return Err(format!("no key for epoch {t}"));
        };
        if !self.chall.insert(t) {
            self.blocked += 1;
            self.log.push(format!("{what} {t} -> blocked"));
            return Err(format!("epoch {t} already challenged or revealed"));
        }
        self.log.push(format!("{what} {t} -> ok"));
        Ok(k)
    }

    pub fn q_corrupt(&mut self, id: &str) -> Result<CgkaState, String> {
        self.corrupted = true;
        self.log.push(format!("q_corrupt {id}"));
        self.state.get(id).cloned().ok_or_else(|| format!("state[{id}] does not exist"))
    }

    pub fn commits(&self) -> impl Iterator<Item = &CgkaCommit> {
        self.comms.iter().map(|(_, c, _)| c)
    }

    pub fn latest_epoch(&self) -> Option<u64> {
        self.keys.keys().next_back().copied()
    }

    pub fn blocked(&self) -> usize {
        self.blocked
    }
}

pub trait Distinguisher {
    fn run(&mut self, env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<usize, String>;
}

pub fn adversary(label: &str) -> Option<Box<dyn Distinguisher>> {
    Some(match label {
        "transcript-kdf" => Box::new(TranscriptKdf),
        "neighbor-reveal" => Box::new(NeighborReveal),
        "group-pk-check" => Box::new(GroupPkCheck),
        "trivial" => Box::new(Trivial),
        "constant" => Box::new(Constant),
        _ => return None,
    })
}

const USERS: [&str; 4] = ["alice", "bob", "carol", "dave"];

fn deliver(env: &mut KindEnv, index: usize, to: &[&str]) -> Result<(), String> {
    for id in to {
        env.q_process(id, index)?;
    }
    Ok(())
}

/// Builds a group of three, adds a random number of key rotations and
/// sometimes an external join. Returns the live members.
fn grow(env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<Vec<&'static str>, String> {
    env.q_create("alice")?;
    let mut members = vec!["alice"];
    for id in ["bob", "carol"] {
        env.q_propose("alice", id, "add")?;
        env.q_commit("alice", &[env.props.len() - 1])?;
        members.push(id);
        deliver(env, env.comms.len() - 1, &members)?;
    }
    for _ in 0..rng.next_u32() % 3 {
        let who = members[rng.next_u32() as usize % members.len()];
        if rng.next_u32() & 1 == 1 {
            env.q_propose(who, who, "update")?;
            env.q_commit(who, &[env.props.len() - 1])?;
        } else {
            env.q_commit(who, &[])?;
        }
        deliver(env, env.comms.len() - 1, &members)?;
    }
    if rng.next_u32() & 1 == 1 {
        env.q_propose("bob", "dave", "join")?;
        env.q_commit("dave", &[env.props.len() - 1])?;
        members.push("dave");
        deliver(env, env.comms.len() - 1, &members)?;
    }
    Ok(members)
}

fn coin(rng: &mut ChaCha20Rng) -> usize {
    (rng.next_u32() & 1) as usize
}

/// Recomputes candidate keys from public messages alone.
struct TranscriptKdf;

impl Distinguisher for TranscriptKdf {
    fn run(&mut self, env: &mut KindEnv, _rng: &mut ChaCha20Rng) -> Result<usize, String> {
        grow(env, _rng)?;
        let t = env.latest_epoch().ok_or("no epoch")?;
        let ctx = env.q_context("alice")?;
        let k = env.q_challenge(t)?;
        let mut info = ctx.group_id.clone();
        info.extend_from_slice(&t.to_be_bytes());
        let candidates: Vec<[u8; 32]> = env
            .commits()
            .flat_map(|c| {
                let h = hash(&c.to_wire()).0;
                [h, kdf32(&h, "group-secret", &info), kdf32(&ctx.transcript_hash.0, "epoch", &h)]
            })
            .collect();
        Ok(if candidates.contains(&k) { 0 } else { 1 })
    }
}

/// Reveals the neighbouring epochs and tries to step from them.
struct NeighborReveal;

impl Distinguisher for NeighborReveal {
    fn run(&mut self, env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<usize, String> {
        grow(env, rng)?;
        let last = env.latest_epoch().ok_or("no epoch")?;
        let t = last - 1;
        let prev = env.q_reveal(t - 1).unwrap_or([0u8; 32]);
        let next = env.q_reveal(last)?;
        let k = env.q_challenge(t)?;
        let ctx = env.q_context("alice")?;
        let mut info = ctx.group_id.clone();
        info.extend_from_slice(&t.to_be_bytes());
        let candidates = [kdf32(&prev, "group-secret", &info), kdf32(&prev, "epoch", &[0u8; 64]), hash(&[prev, next].concat()).0];
        Ok(if candidates.contains(&k) { 0 } else { 1 })
    }
}

/// Treats the challenge as an epoch secret and checks it against the
/// public group key.
struct GroupPkCheck;

impl Distinguisher for GroupPkCheck {
    fn run(&mut self, env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<usize, String> {
        grow(env, rng)?;
        let t = env.latest_epoch().ok_or("no epoch")?;
        let ctx = env.q_context("alice")?;
        let k = env.q_challenge(t)?;
        Ok(if group_keypair(&k, &ctx.group_id, t).epk == ctx.group_pk { 0 } else { 1 })
    }
}

/// Tries to reveal the challenged epoch (and the reverse order); both are
/// blocked, so it falls back to a coin.
struct Trivial;

impl Distinguisher for Trivial {
    fn run(&mut self, env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<usize, String> {
        grow(env, rng)?;
        let t = env.latest_epoch().ok_or("no epoch")?;
        if coin(rng) == 1 {
            let k = env.q_challenge(t)?;
            if let Ok(real) = env.q_reveal(t) {
                return Ok(if real == k { 0 } else { 1 });
            }
        } else {
            let real = env.q_reveal(t)?;
            if let Ok(k) = env.q_challenge(t) {
                return Ok(if real == k { 0 } else { 1 });
            }
            // Challenge the previous epoch instead so the trial still counts.
            env.q_challenge(t - 1)?;
        }
        Ok(coin(rng))
    }
}

struct Constant;

impl Distinguisher for Constant {
    fn run(&mut self, env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<usize, String> {
        grow(env, rng)?;
        let t = env.latest_epoch().ok_or("no epoch")?;
        env.q_challenge(t)?;
        Ok(0)
    }
}

pub fn kind_trial(env: &mut KindEnv, adv: &mut dyn Distinguisher, rng: &mut ChaCha20Rng) -> Outcome {
    let guess = match adv.run(env, rng) {
        Ok(g) => g,
        Err(e) => return Outcome::Invalid(format!("adversary failed: {e}")),
    };
    if env.corrupted {
        return Outcome::Excluded("a party was corrupted".into());
    }
    if !env.challenged {
        return Outcome::Invalid("no challenge was made".into());
    }
    env.log.push(format!("challenger b={} guess={guess}", env.b));
    if guess == env.b {
        Outcome::Win
    } else {
        Outcome::Loss
    }
}

pub fn run_kind_game(label: &str, trials: usize, seed: u64) -> Result<GameResult, HarnessError> {
    adversary(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::KInd, adversary: label.into() })?;
    let mut setup_err = None;
    let result = run_trials(GameKind::KInd, label, aacgka::abc::AbcScheme::RandomizableSig, trials, seed, |env_seed, rng, log| {
        let mut env = match KindEnv::new(&USERS, env_seed) {
            Ok(env) => env,
            Err(e) => {
                setup_err = Some(e);
                return Outcome::Invalid("setup".into());
            }
        };
        let mut adv = adversary(label).expect("label checked");
        let out = kind_trial(&mut env, adv.as_mut(), rng);
        log.append(&mut env.log);
        out
    });
    match setup_err {
        Some(e) => Err(HarnessError::Setup(e)),
        None => Ok(result),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_key_check_detects_epoch_secrets() {
        // The check would break a game that challenged the epoch secret.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut s = CgkaState::init("alice", &mut rng).unwrap();
        s.create(&mut rng).unwrap();
        let ctx = s.context().unwrap();
        let es = s.epoch_secret().unwrap();
        assert_eq!(group_keypair(&es, &ctx.group_id, ctx.epoch).epk, ctx.group_pk);
        let gs = s.group_secret().unwrap();
        assert_ne!(group_keypair(&gs, &ctx.group_id, ctx.epoch).epk, ctx.group_pk);
    }

    #[test]
    fn challenge_and_reveal_share_bookkeeping() {
        let mut env = KindEnv::new(&USERS, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        grow(&mut env, &mut rng).unwrap();
        let t = env.latest_epoch().unwrap();
        assert!(env.q_reveal(t + 1).is_err());
        env.q_challenge(t).unwrap();
        assert!(env.q_reveal(t).is_err());
        assert!(env.q_challenge(t).is_err());
        assert_eq!(env.blocked(), 2);
        assert!(env.q_reveal(t - 1).is_ok());
    }

    #[test]
    fn real_key_matches_members() {
        for seed in 0..8 {
            let mut env = KindEnv::new(&USERS, seed).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let members = grow(&mut env, &mut rng).unwrap();
            let t = env.latest_epoch().unwrap();
            let k = env.q_challenge(t).unwrap();
            let real = env.state[members[0]].group_secret().unwrap();
            assert!(members.iter().all(|m| env.state[*m].group_secret() == Some(real)));
            assert_eq!(k == real, env.b == 0);
        }
    }

    #[test]
    fn corruption_excludes_the_trial() {
        struct Corrupting;
        impl Distinguisher for Corrupting {
            fn run(&mut self, env: &mut KindEnv, rng: &mut ChaCha20Rng) -> Result<usize, String> {
                grow(env, rng)?;
                let t = env.latest_epoch().ok_or("no epoch")?;
                let k = env.q_challenge(t)?;
                let s = env.q_corrupt("alice")?;
                Ok(if s.group_secret() == Some(k) { 0 } else { 1 })
            }
        }
        let mut env = KindEnv::new(&USERS, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(matches!(kind_trial(&mut env, &mut Corrupting, &mut rng), Outcome::Excluded(_)));
    }
}
