//! Random bounded scenarios: at most six actors and twenty commands.

use rand_core::RngCore;

use crate::scenario::{parse_scenario, ScenarioScript};

pub const MAX_ACTORS: usize = 6;
pub const MAX_COMMANDS: usize = 20;

const ROLES: [&str; 3] = ["admin", "dev", "ops"];

fn pick<'a, T>(rng: &mut impl RngCore, items: &'a [T]) -> &'a T {
    &items[rng.next_u32() as usize % items.len()]
}

/// Tracks who should be in the group if every step succeeds. Steps that
/// fail at run time only make the model optimistic; the runner records them.
struct Model {
    lines: Vec<String>,
    members: Vec<String>,
    outsiders: Vec<String>,
    commits: usize,
}

impl Model {
    fn push(&mut self, line: String) {
        self.lines.push(line);
    }

    fn commit(&mut self, who: &str) {
        self.push(format!("commit {who}"));
        self.push("process_all".into());
        self.commits += 1;
    }
}

pub fn random_scenario(rng: &mut impl RngCore) -> ScenarioScript {
    let n = 2 + rng.next_u32() as usize % (MAX_ACTORS - 1);
    let mut m = Model { lines: Vec::new(), members: Vec::new(), outsiders: Vec::new(), commits: 0 };
    for i in 0..n {
        let name = format!("a{i}");
        let org = if i > 0 && rng.next_u32() % 4 == 0 { "Other" } else { "ACME" };
        let issuer = if rng.next_u32() & 1 == 1 { "uni" } else { "gov" };
        m.push(format!("init {name} {issuer} org={org} role={}", pick(rng, &ROLES)));
        m.outsiders.push(name);
    }
    let founder = m.outsiders.remove(0);
    if rng.next_u32() & 1 == 1 {
        m.push(format!("create {founder} r1:org=ACME r2:org=ACME,role=admin"));
    } else {
        m.push(format!("create {founder} r1:org=ACME"));
    }
    m.members.push(founder);

    loop {
        // Every step ends with process_all, so the script stays in bounds
        // without a trailing one.
        let room = MAX_COMMANDS - m.lines.len();
        let step = rng.next_u32() % 8;
        let cost = match step {
            0..=2 => 5,
            3..=5 => 3,
            _ => 2,
        };
        if room < cost {
            break;
        }
        let member = pick(rng, &m.members).clone();
        match step {
            0..=2 if !m.outsiders.is_empty() => {
                let x = m.outsiders.remove(rng.next_u32() as usize % m.outsiders.len());
                m.push(format!("publish {member}"));
                if step == 2 {
                    m.push(format!("present {x} {member} join"));
                    m.push(format!("propose {x} join {x}"));
                    m.commit(&x);
                } else {
                    m.push(format!("present {x} {member} add"));
                    m.push(format!("propose {member} add {x}"));
                    m.commit(&member);
                }
                m.members.push(x);
            }
            3 => {
                m.push(format!("propose {member} update {member}"));
                m.commit(&member);
            }
            4 if m.members.len() > 1 => {
                let others: Vec<String> = m.members.iter().filter(|x| **x != member).cloned().collect();
                let y = pick(rng, &others).clone();
                m.push(format!("propose {member} remove {y}"));
                m.commit(&member);
                m.members.retain(|x| *x != y);
                m.outsiders.push(y);
            }
            5 => {
                let change = match rng.next_u32() % 3 {
                    0 => format!("add r3 role={}", pick(rng, &ROLES)),
                    1 => "remove r2".into(),
                    _ => format!("update r1 org=ACME,role={}", pick(rng, &ROLES)),
                };
                m.push(format!("propose_reqs {member} {change}"));
                m.commit(&member);
            }
            6 if m.commits > 0 => {
                let k = rng.next_u32() as usize % m.commits;
                m.push(format!("replay {k}"));
                m.push("process_all".into());
            }
            _ => m.commit(&member),
        }
    }
    parse_scenario(&m.lines.join("\n")).expect("generated scripts parse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Command;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn bounded() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = random_scenario(&mut rng);
            assert!(s.len() <= MAX_COMMANDS);
            let actors = s.commands().filter(|c| matches!(c, Command::Init { .. })).count();
            assert!((2..=MAX_ACTORS).contains(&actors));
        }
    }
}
