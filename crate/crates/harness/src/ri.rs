//! Requirement integrity: can an adversary get a member to accept a commit
//! that changes the group's requirements without being a legitimate commit
//! of the member's current epoch?

use aacgka::aacgka::{AaCommit, ReqChange, ReqProposal, RequirementSet};
use aacgka::abc::AttributeMap;
use aacgka::abc::AbcScheme;
use aacgka::primitives::{sig_keygen, sig_sign, Signature};
use aacgka::wire::Wire;
use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

use crate::env::{GameEnv, OracleError};
use crate::{run_trials, GameKind, GameResult, HarnessError, Outcome};

pub const ADVERSARIES: &[&str] = &["replay", "random-forgery", "null", "fuzz"];

pub trait RiAdversary {
    /// Plays against the oracles, then names a member and a commit to inject.
    fn attack(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(String, AaCommit), OracleError>;
}

pub fn adversary(label: &str) -> Option<Box<dyn RiAdversary>> {
    Some(match label {
        "replay" => Box::new(Replay),
        "random-forgery" => Box::new(RandomForgery),
        "null" => Box::new(Null),
        "fuzz" => Box::new(Fuzz { max_calls: 50 }),
        _ => return None,
    })
}

fn two_reqs() -> RequirementSet {
    [
        ("r1", [("org", "ACME")].into_iter().collect::<AttributeMap>()),
        ("r2", [("role", "admin")].into_iter().collect::<AttributeMap>()),
    ]
    .into_iter()
    .collect()
}

fn coin(rng: &mut ChaCha20Rng) -> bool {
    rng.next_u32() & 1 == 1
}

/// Commits proposal `index` at `committer` and delivers it to `members`.
fn commit_and_deliver(env: &mut GameEnv, committer: &str, indices: &[usize], members: &[&str]) -> Result<usize, OracleError> {
    env.q_commit(committer, indices)?;
    let i = env.commits().len() - 1;
    for m in members {
        env.q_process(m, i)?;
    }
    Ok(i)
}

/// Founds a group at alice with two requirements; bob joins half the time.
fn founded(env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<Vec<&'static str>, OracleError> {
    env.q_create("alice", &two_reqs())?;
    if coin(rng) {
        env.q_propose("alice", "bob", "add")?;
        commit_and_deliver(env, "alice", &[env.proposals().len() - 1], &["alice", "bob"])?;
        Ok(vec!["alice", "bob"])
    } else {
        Ok(vec!["alice"])
    }
}

/// Removes a requirement, restores it, then resubmits the removal.
struct Replay;

impl RiAdversary for Replay {
    fn attack(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(String, AaCommit), OracleError> {
        let members = founded(env, rng)?;
        let proposer = members[rng.next_u32() as usize % members.len()];
        env.q_propose_reqs(proposer, &ReqChange::Remove { req_id: "r2".into() })?;
        let removal = commit_and_deliver(env, "alice", &[env.proposals().len() - 1], &members)?;
        let restorer = members[rng.next_u32() as usize % members.len()];
        env.q_propose_reqs(restorer, &ReqChange::Add { req_id: "r2".into(), claims: [("role", "admin")].into_iter().collect() })?;
        commit_and_deliver(env, restorer, &[env.proposals().len() - 1], &members)?;
        if coin(rng) {
            commit_and_deliver(env, "alice", &[], &members)?;
        }
        let target = members[rng.next_u32() as usize % members.len()];
        Ok((target.to_owned(), env.commits()[removal].1.clone()))
    }
}

/// Takes a legitimate unprocessed commit and swaps in a requirement change
/// under a signature it cannot produce honestly.
fn random_sig(rng: &mut ChaCha20Rng) -> Signature {
    let mut s = [0u8; 64];
    rng.fill_bytes(&mut s);
    Signature(s)
}

struct RandomForgery;

impl RiAdversary for RandomForgery {
    fn attack(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(String, AaCommit), OracleError> {
        let members = founded(env, rng)?;
        let gi = env.q_publish_info("alice")?;
        let mut c = env.q_commit("alice", &[])?;
        let change = ReqChange::Remove { req_id: "r2".into() };
        c.c_reqs = vec![ReqProposal { proposer: "alice".into(), change, sig: random_sig(rng) }];
        match rng.next_u32() % 3 {
            0 => c.sig = random_sig(rng),
            1 => {
                // Correct message under a key the adversary owns.
                let own = sig_keygen(rng);
                c.c_reqs[0].sig = sig_sign(&own.ssk, &c.c_reqs[0].tbs());
                c.sig = sig_sign(&own.ssk, &c.tbs(&gi.chal));
            }
            _ => {} // keep the original signature over the original content
        }
        let target = members[rng.next_u32() as usize % members.len()];
        Ok((target.to_owned(), c))
    }
}

/// Outputs a legitimate commit of the current epoch, which the game must
/// refuse to count as an injection.
struct Null;

impl RiAdversary for Null {
    fn attack(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(String, AaCommit), OracleError> {
        let members = founded(env, rng)?;
        env.q_propose_reqs("alice", &ReqChange::Remove { req_id: "r2".into() })?;
        let c = env.q_commit("alice", &[env.proposals().len() - 1])?;
        let target = members[rng.next_u32() as usize % members.len()];
        Ok((target.to_owned(), c))
    }
}

/// Random oracle-call sequences followed by a random or mutated commit.
struct Fuzz {
    max_calls: usize,
}

impl Fuzz {
    fn random_call(&self, env: &mut GameEnv, rng: &mut ChaCha20Rng) {
        let ids = env.user_ids();
        let pick = |rng: &mut ChaCha20Rng, ids: &[String]| ids[rng.next_u32() as usize % ids.len()].clone();
        let id = pick(rng, &ids);
        let _ = match rng.next_u32() % 8 {
            0 => env.q_create(&id, &two_reqs()).map(drop),
            1 | 2 => {
                let target = pick(rng, &ids);
                let kinds = ["add", "update", "remove", "join"];
                env.q_propose(&id, &target, kinds[rng.next_u32() as usize % 4]).map(drop)
            }
            3 => {
                let req = ["r1", "r2", "r3"][rng.next_u32() as usize % 3];
                let claims: AttributeMap = [("role", "dev")].into_iter().collect();
                let change = match rng.next_u32() % 3 {
                    0 => ReqChange::Add { req_id: req.into(), claims },
                    1 => ReqChange::Update { req_id: req.into(), claims },
                    _ => ReqChange::Remove { req_id: req.into() },
                };
                env.q_propose_reqs(&id, &change).map(drop)
            }
            4 => {
                let n = env.proposals().len();
                let take = if n == 0 { 0 } else { rng.next_u32() as usize % 3 };
                let idx: Vec<usize> = (0..take).map(|_| n.saturating_sub(1 + rng.next_u32() as usize % 3)).collect();
                env.q_commit(&id, &idx).map(drop)
            }
            5 | 6 => {
                let n = env.commits().len();
                if n == 0 {
                    Ok(())
                } else {
                    env.q_process(&id, n - 1 - rng.next_u32() as usize % n.min(3)).map(drop)
                }
            }
            _ => env.q_publish_info(&id).map(drop),
        };
    }
}

impl RiAdversary for Fuzz {
    fn attack(&mut self, env: &mut GameEnv, rng: &mut ChaCha20Rng) -> Result<(String, AaCommit), OracleError> {
        env.q_create("alice", &two_reqs())?;
        let calls = rng.next_u32() as usize % (self.max_calls + 1);
        for _ in 0..calls {
            self.random_call(env, rng);
        }
        let members: Vec<String> = env.user_ids().into_iter().filter(|id| env.is_member(id)).collect();
        let target = members[rng.next_u32() as usize % members.len()].clone();
        if env.commits().is_empty() {
            env.q_commit(&target, &[])?;
        }
        let n = env.commits().len();
        let mut c = env.commits()[rng.next_u32() as usize % n].1.clone();
        if coin(rng) {
            let mut bytes = c.to_wire();
            let i = rng.next_u32() as usize % bytes.len();
            bytes[i] ^= 1 << (rng.next_u32() % 8);
            if let Ok(m) = AaCommit::from_wire(&bytes) {
                c = m;
            }
        }
        Ok((target, c))
    }
}

/// One trial: the adversary's commit must not be a logged commit of the
/// target's current epoch, and the target must be a member.
pub fn ri_trial(env: &mut GameEnv, adv: &mut dyn RiAdversary, rng: &mut ChaCha20Rng) -> Outcome {
    let (id, c) = match adv.attack(env, rng) {
        Ok(out) => out,
        Err(e) => return Outcome::Invalid(format!("adversary failed: {e}")),
    };
    if !env.is_member(&id) {
        return Outcome::Invalid(format!("{id} is not a member"));
    }
    let current = env.current_epoch(&id);
    if env.commits().iter().any(|(ep, logged)| *ep == current && *logged == c) {
        return Outcome::Invalid("not an injection".into());
    }
    let (before, after, ok) = env.challenger_process(&id, &c);
    env.note(format!("challenger process {id} ok={ok}"));
    if after != before {
        Outcome::Win
    } else {
        Outcome::Loss
    }
}

pub fn run_ri_game(label: &str, trials: usize, seed: u64, scheme: AbcScheme) -> Result<GameResult, HarnessError> {
    adversary(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::Ri, adversary: label.into() })?;
    let mut setup_err = None;
    let result = run_trials(GameKind::Ri, label, scheme, trials, seed, |env_seed, rng, log| {
        let mut env = match GameEnv::standard(scheme, env_seed) {
            Ok(env) => env,
            Err(e) => {
                setup_err = Some(e.to_string());
                return Outcome::Invalid("setup".into());
            }
        };
        let mut adv = adversary(label).expect("label checked");
        let out = ri_trial(&mut env, adv.as_mut(), rng);
        log.extend(env.log().iter().cloned());
        out
    });
    match setup_err {
        Some(e) => Err(HarnessError::Setup(e)),
        None => Ok(result),
    }
}
