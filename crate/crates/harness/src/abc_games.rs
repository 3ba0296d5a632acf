//! Credential-level games: presentation forgery and presentation linking.

use aacgka::abc::{
    abc_issue, abc_keygen, abc_prove, abc_verify_cred, abc_verify_proof, sigma_fragments, AbcScheme, AttributeMap, Credential,
    IssuerKeyPair, IssuerPublicKey, Presentation, PresentationProof,
};
use aacgka::wire::{Node, Wire};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::unlink::closer_reference;
use crate::{run_trials, GameKind, GameResult, HarnessError, Outcome};

pub const UNF_ADVERSARIES: &[&str] = &["random-pi", "splice", "substitution", "attribute-combination"];
pub const UNLINK_ADVERSARIES: &[&str] = &["bytes", "constant"];

const MAX_ATTRS: usize = 8;

fn attrs(pairs: &[(&str, &str)]) -> AttributeMap {
    pairs.iter().copied().collect()
}

fn random_header(rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut h = vec![0u8; 24];
    rng.fill_bytes(&mut h);
    h
}

// ---------------------------------------------------------------------------
// Forgery

/// Challenger for the presentation-forgery game.
pub struct AbcUnfEnv {
    names: Vec<String>,
    pubs: Vec<IssuerPublicKey>,
    privs: Vec<IssuerKeyPair>,
    issued: Vec<(usize, Credential)>,
    presented: Vec<Presentation>,
    revealed: Vec<(usize, Credential)>,
    rng: ChaCha20Rng,
    log: Vec<String>,
}

impl AbcUnfEnv {
    pub fn new(scheme: AbcScheme, issuers: usize, seed: u64) -> Result<Self, HarnessError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut privs = Vec::new();
        for _ in 0..issuers {
            privs.push(abc_keygen(scheme, MAX_ATTRS, &mut rng).map_err(|e| HarnessError::Setup(e.to_string()))?);
        }
        Ok(AbcUnfEnv {
            names: (0..issuers).map(|i| format!("issuer-{i}")).collect(),
            pubs: privs.iter().map(|k| k.ipk.clone()).collect(),
            privs,
            issued: Vec::new(),
            presented: Vec::new(),
            revealed: Vec::new(),
            rng,
            log: Vec::new(),
        })
    }

    pub fn pubs(&self) -> &[IssuerPublicKey] {
        &self.pubs
    }

    pub fn issuer_name(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// Returns the index of the new credential.
    pub fn q_issue(&mut self, i: usize, attrs: &AttributeMap) -> Result<usize, String> {
        let isk = self.privs.get(i).ok_or("no such issuer")?;
        let cred = abc_issue(isk, &self.names[i], attrs, &mut self.rng).map_err(|e| e.to_string())?;
        self.issued.push((i, cred));
        self.log.push(format!("q_issue {i} {attrs} -> #{}", self.issued.len() - 1));
        Ok(self.issued.len() - 1)
    }

    pub fn q_present(&mut self, j: usize, disc: &AttributeMap, header: &[u8]) -> Result<Presentation, String> {
        let (i, cred) = self.issued.get(j).ok_or("no such credential")?;
        let p = abc_prove(&self.pubs[*i], cred, disc, header, &mut self.rng).map_err(|e| e.to_string())?;
        self.presented.push(p.clone());
        self.log.push(format!("q_present #{j} {disc}"));
        Ok(p)
    }

    pub fn q_reveal(&mut self, j: usize) -> Result<(usize, Credential), String> {
        let entry = self.issued.get(j).cloned().ok_or("no such credential")?;
        self.revealed.push(entry.clone());
        self.log.push(format!("q_reveal #{j}"));
        Ok(entry)
    }

    /// The adversary wins with a verifying presentation that no revealed
    /// credential of that issuer could have produced and that was not handed
    /// out by the presentation oracle.
    pub fn judge(&self, i: usize, p: &Presentation, header: &[u8]) -> Outcome {
        let Some(ipk) = self.pubs.get(i) else {
            return Outcome::Invalid("no such issuer".into());
        };
        if !abc_verify_proof(ipk, p, header) {
            return Outcome::Loss;
        }
        if self.revealed.iter().any(|(ri, cred)| *ri == i && cred.attrs.contains_all(&p.disc_attrs)) {
            return Outcome::Excluded("covered by a revealed credential".into());
        }
        if self.presented.contains(p) {
            return Outcome::Excluded("presentation came from the oracle".into());
        }
        Outcome::Win
    }
}

pub trait AbcForger {
    fn forge(&mut self, env: &mut AbcUnfEnv, rng: &mut ChaCha20Rng) -> Result<(usize, Presentation, Vec<u8>), String>;
}

pub fn forger(label: &str) -> Option<Box<dyn AbcForger>> {
    Some(match label {
        "random-pi" => Box::new(RandomPi),
        "splice" => Box::new(Splice),
        "substitution" => Box::new(Substitution),
        "attribute-combination" => Box::new(Combination),
        _ => return None,
    })
}

/// Proofs not derived from any credential of the target issuer: either made
/// under a key the adversary generated itself, or a randomly perturbed
/// honest proof.
struct RandomPi;

impl AbcForger for RandomPi {
    fn forge(&mut self, env: &mut AbcUnfEnv, rng: &mut ChaCha20Rng) -> Result<(usize, Presentation, Vec<u8>), String> {
        let header = random_header(rng);
        let disc = attrs(&[("role", "admin")]);
        if rng.next_u32() & 1 == 1 {
            let j = env.q_issue(0, &attrs(&[("org", "ACME"), ("role", "admin")]))?;
            let honest = env.q_present(j, &disc, &header)?;
            let mut bytes = honest.pi.to_wire();
            for _ in 0..16 {
                let i = rng.next_u32() as usize % bytes.len();
                bytes[i] ^= 1 << (rng.next_u32() % 8);
                if let Ok(pi) = PresentationProof::from_wire(&bytes) {
                    return Ok((0, Presentation { pi, ..honest }, header));
                }
                bytes = honest.pi.to_wire();
            }
        }
        let scheme = env.pubs()[0].scheme();
        let own = abc_keygen(scheme, MAX_ATTRS, rng).map_err(|e| e.to_string())?;
        let cred = abc_issue(&own, env.issuer_name(0), &attrs(&[("org", "ACME"), ("role", "admin")]), rng).map_err(|e| e.to_string())?;
        let p = abc_prove(&own.ipk, &cred, &disc, &header, rng).map_err(|e| e.to_string())?;
        Ok((0, p, header))
    }
}

/// Moves an honest proof to a different header.
struct Splice;

impl AbcForger for Splice {
    fn forge(&mut self, env: &mut AbcUnfEnv, rng: &mut ChaCha20Rng) -> Result<(usize, Presentation, Vec<u8>), String> {
        let j = env.q_issue(0, &attrs(&[("org", "ACME"), ("role", "dev")]))?;
        let disc = attrs(&[("org", "ACME")]);
        let (h1, h2) = (random_header(rng), random_header(rng));
        let p1 = env.q_present(j, &disc, &h1)?;
        let p2 = env.q_present(j, &disc, &h2)?;
        let target = if rng.next_u32() & 1 == 1 { h2 } else { random_header(rng) };
        Ok((0, Presentation { header: target.clone(), pi: p1.pi, ..p2 }, target))
    }
}

/// Edits a disclosed value of an honest presentation.
struct Substitution;

impl AbcForger for Substitution {
    fn forge(&mut self, env: &mut AbcUnfEnv, rng: &mut ChaCha20Rng) -> Result<(usize, Presentation, Vec<u8>), String> {
        let j = env.q_issue(0, &attrs(&[("org", "ACME"), ("role", "dev")]))?;
        let header = random_header(rng);
        let mut p = env.q_present(j, &attrs(&[("org", "ACME"), ("role", "dev")]), &header)?;
        p.disc_attrs.insert("role", "admin");
        Ok((0, p, header))
    }
}

/// Combines claims from two credentials, neither of which holds both.
struct Combination;

fn combine_proofs(a: &PresentationProof, b: &PresentationProof) -> Result<PresentationProof, String> {
    let (na, nb) = (a.to_node(), b.to_node());
    let la = na.as_list().map_err(|e| e.to_string())?;
    let lb = nb.as_list().map_err(|e| e.to_string())?;
    let (ia, ib) = (la[1].as_list().map_err(|e| e.to_string())?, lb[1].as_list().map_err(|e| e.to_string())?);
    let inner = match a {
        // [c, z_s, base, claims]: keep the first proof's head and append the
        // second proof's claim components.
        PresentationProof::RandomizableSig(_) => {
            let mut claims = ia[3].as_list().map_err(|e| e.to_string())?.to_vec();
            claims.extend_from_slice(ib[3].as_list().map_err(|e| e.to_string())?);
            vec![ia[0].clone(), ia[1].clone(), ia[2].clone(), Node::List(claims)]
        }
        // [commitments, holder, issuer sig, openings, holder sig]: concatenate
        // the commitment vectors and shift the second proof's openings.
        PresentationProof::SaltedHash(_) => {
            let ca = ia[0].as_list().map_err(|e| e.to_string())?;
            let mut commitments = ca.to_vec();
            commitments.extend_from_slice(ib[0].as_list().map_err(|e| e.to_string())?);
            let mut openings = ia[3].as_list().map_err(|e| e.to_string())?.to_vec();
            for o in ib[3].as_list().map_err(|e| e.to_string())? {
                let pair = o.as_list().map_err(|e| e.to_string())?;
                let idx = pair[0].as_uint().map_err(|e| e.to_string())? + ca.len() as u64;
                openings.push(Node::List(vec![Node::Uint(idx), pair[1].clone()]));
            }
            vec![Node::List(commitments), ia[1].clone(), ia[2].clone(), Node::List(openings), ia[4].clone()]
        }
    };
    PresentationProof::from_node(&Node::List(vec![la[0].clone(), Node::List(inner)])).map_err(|e| e.to_string())
}

impl AbcForger for Combination {
    fn forge(&mut self, env: &mut AbcUnfEnv, rng: &mut ChaCha20Rng) -> Result<(usize, Presentation, Vec<u8>), String> {
        let ja = env.q_issue(0, &attrs(&[("org", "ACME")]))?;
        let jb = env.q_issue(0, &attrs(&[("role", "admin")]))?;
        let header = random_header(rng);
        let pa = env.q_present(ja, &attrs(&[("org", "ACME")]), &header)?;
        let pb = env.q_present(jb, &attrs(&[("role", "admin")]), &header)?;
        let pi = combine_proofs(&pa.pi, &pb.pi)?;
        let disc = attrs(&[("org", "ACME"), ("role", "admin")]);
        Ok((0, Presentation { header: header.clone(), disc_attrs: disc, pi, issuer_id: pa.issuer_id }, header))
    }
}

pub fn run_abc_unf_game(label: &str, trials: usize, seed: u64, scheme: AbcScheme) -> Result<GameResult, HarnessError> {
    forger(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::AbcUnf, adversary: label.into() })?;
    let mut setup_err = None;
    let result = run_trials(GameKind::AbcUnf, label, scheme, trials, seed, |env_seed, rng, log| {
        let mut env = match AbcUnfEnv::new(scheme, 2, env_seed) {
            Ok(env) => env,
            Err(e) => {
                setup_err = Some(e.to_string());
                return Outcome::Invalid("setup".into());
            }
        };
        let mut adv = forger(label).expect("label checked");
        let out = match adv.forge(&mut env, rng) {
            Ok((i, p, header)) => env.judge(i, &p, &header),
            Err(e) => Outcome::Invalid(format!("adversary failed: {e}")),
        };
        log.append(&mut env.log);
        out
    });
    match setup_err {
        Some(e) => Err(HarnessError::Setup(e)),
        None => Ok(result),
    }
}

// ---------------------------------------------------------------------------
// Linking

/// What the adversary hands the challenger: two credentials, their issuer
/// keys, the claims to disclose and the header.
pub struct LinkChallenge {
    pub creds: [Credential; 2],
    pub ipks: [IssuerPublicKey; 2],
    pub disc: AttributeMap,
    pub header: Vec<u8>,
}

pub trait AbcLinker {
    fn choose(&mut self, scheme: AbcScheme, rng: &mut ChaCha20Rng) -> Result<LinkChallenge, String>;
    fn guess(&mut self, challenge: &LinkChallenge, p: &Presentation, rng: &mut ChaCha20Rng) -> usize;
}

pub fn linker(label: &str) -> Option<Box<dyn AbcLinker>> {
    Some(match label {
        "bytes" => Box::new(BytesLinker),
        "constant" => Box::new(ConstantLinker),
        _ => return None,
    })
}

/// Acts as issuer for two credentials that agree on the disclosed claim.
fn two_credentials(scheme: AbcScheme, rng: &mut ChaCha20Rng) -> Result<LinkChallenge, String> {
    let ik = abc_keygen(scheme, MAX_ATTRS, rng).map_err(|e| e.to_string())?;
    let c0 = abc_issue(&ik, "adv", &attrs(&[("org", "ACME"), ("role", "dev")]), rng).map_err(|e| e.to_string())?;
    let c1 = abc_issue(&ik, "adv", &attrs(&[("org", "ACME"), ("role", "ops")]), rng).map_err(|e| e.to_string())?;
    Ok(LinkChallenge { creds: [c0, c1], ipks: [ik.ipk.clone(), ik.ipk], disc: attrs(&[("org", "ACME")]), header: random_header(rng) })
}

/// Looks for credential bytes inside the presentation: secret fragments
/// first, then 16-byte windows shared with only one credential.
struct BytesLinker;

impl AbcLinker for BytesLinker {
    fn choose(&mut self, scheme: AbcScheme, rng: &mut ChaCha20Rng) -> Result<LinkChallenge, String> {
        two_credentials(scheme, rng)
    }

    fn guess(&mut self, ch: &LinkChallenge, p: &Presentation, rng: &mut ChaCha20Rng) -> usize {
        let bytes = p.to_wire();
        let contains = |needle: &[u8]| needle.len() <= bytes.len() && bytes.windows(needle.len()).any(|w| w == needle);
        let hits: Vec<usize> = ch.creds.iter().map(|c| sigma_fragments(&c.sigma).iter().filter(|f| contains(f)).count()).collect();
        if hits[0] != hits[1] {
            return if hits[0] > hits[1] { 0 } else { 1 };
        }
        let refs = [ch.creds[0].sigma.to_wire(), ch.creds[1].sigma.to_wire()];
        closer_reference(&bytes, [&refs[0], &refs[1]], rng)
    }
}

struct ConstantLinker;

impl AbcLinker for ConstantLinker {
    fn choose(&mut self, scheme: AbcScheme, rng: &mut ChaCha20Rng) -> Result<LinkChallenge, String> {
        two_credentials(scheme, rng)
    }

    fn guess(&mut self, _ch: &LinkChallenge, _p: &Presentation, _rng: &mut ChaCha20Rng) -> usize {
        0
    }
}

/// One trial. Both credentials must verify under their stated keys.
pub fn abc_unlink_trial(adv: &mut dyn AbcLinker, scheme: AbcScheme, challenger: &mut ChaCha20Rng, rng: &mut ChaCha20Rng) -> (Outcome, String) {
    let b = (challenger.next_u32() & 1) as usize;
    let ch = match adv.choose(scheme, rng) {
        Ok(ch) => ch,
        Err(e) => return (Outcome::Invalid(format!("adversary failed: {e}")), String::new()),
    };
    if !abc_verify_cred(&ch.ipks[0], &ch.creds[0]) || !abc_verify_cred(&ch.ipks[1], &ch.creds[1]) {
        return (Outcome::Invalid("credential does not verify".into()), String::new());
    }
    let p = match abc_prove(&ch.ipks[b], &ch.creds[b], &ch.disc, &ch.header, challenger) {
        Ok(p) => p,
        Err(e) => return (Outcome::Invalid(format!("prove failed: {e}")), String::new()),
    };
    let guess = adv.guess(&ch, &p, rng);
    let line = format!("challenger b={b} guess={guess}");
    (if guess == b { Outcome::Win } else { Outcome::Loss }, line)
}

pub fn run_abc_unlink_game(label: &str, trials: usize, seed: u64, scheme: AbcScheme) -> Result<GameResult, HarnessError> {
    linker(label).ok_or_else(|| HarnessError::UnknownAdversary { game: GameKind::AbcUnlink, adversary: label.into() })?;
    Ok(run_trials(GameKind::AbcUnlink, label, scheme, trials, seed, |env_seed, rng, log| {
        let mut challenger = ChaCha20Rng::seed_from_u64(env_seed);
        let mut adv = linker(label).expect("label checked");
        let (out, line) = abc_unlink_trial(adv.as_mut(), scheme, &mut challenger, rng);
        if !line.is_empty() {
            log.push(line);
        }
        out
    }))
}
