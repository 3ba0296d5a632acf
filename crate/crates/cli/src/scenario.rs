//! Line-oriented scenario scripts.
//!
//! ```text
//! # comment
//! init alice uni org=ACME role=admin
//! create alice r1:org=ACME r2:org=ACME,role=admin
//! publish alice
//! present bob alice add
//! propose alice add bob
//! propose_reqs alice add r3 role=ops
//! commit alice
//! process_all
//! replay 0
//! expose bob eve
//! assert_state bob epoch 1
//! ```

use std::collections::BTreeSet;
use std::fmt;

use aacgka::aacgka::ReqChange;
use aacgka::abc::AttributeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresentKind {
    Add,
    Join,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Check {
    Epoch(u64),
    Member(String),
    NotMember(String),
    HasReq(String),
    NoReq(String),
    InGroup,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Init { actor: String, issuer: String, attrs: AttributeMap },
    Create { actor: String, reqs: Vec<(String, AttributeMap)> },
    Publish { actor: String },
    Present { actor: String, publisher: String, kind: PresentKind },
    Propose { actor: String, prop_type: String, target: String },
    ProposeReqs { actor: String, change: ReqChange },
    Commit { actor: String },
    ProcessAll,
    Replay { index: usize },
    Expose { actor: String, holder: String },
    AssertState { actor: String, check: Check },
    AssertAgree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: usize,
    pub command: Command,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScenarioScript {
    pub lines: Vec<Line>,
}

impl ScenarioScript {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn commands(&self) -> impl Iterator<Item = &Command> {
        self.lines.iter().map(|l| &l.command)
    }

    /// Script text that parses back to the same commands.
    pub fn to_text(&self) -> String {
        self.commands().map(|c| format!("{c}\n")).collect()
    }
}

fn attrs_text(a: &AttributeMap) -> String {
    a.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Init { actor, issuer, attrs } => {
                write!(f, "init {actor} {issuer}")?;
                for (k, v) in attrs.iter() {
                    write!(f, " {k}={v}")?;
                }
                Ok(())
            }
            Command::Create { actor, reqs } => {
                write!(f, "create {actor}")?;
                for (id, claims) in reqs {
                    write!(f, " {id}:{}", attrs_text(claims))?;
                }
                Ok(())
            }
            Command::Publish { actor } => write!(f, "publish {actor}"),
            Command::Present { actor, publisher, kind } => {
                write!(f, "present {actor} {publisher} {}", if *kind == PresentKind::Add { "add" } else { "join" })
            }
            Command::Propose { actor, prop_type, target } => write!(f, "propose {actor} {prop_type} {target}"),
            Command::ProposeReqs { actor, change } => match change {
                ReqChange::Add { req_id, claims } => write!(f, "propose_reqs {actor} add {req_id} {}", attrs_text(claims)),
                ReqChange::Update { req_id, claims } => write!(f, "propose_reqs {actor} update {req_id} {}", attrs_text(claims)),
                ReqChange::Remove { req_id } => write!(f, "propose_reqs {actor} remove {req_id}"),
            },
            Command::Commit { actor } => write!(f, "commit {actor}"),
            Command::ProcessAll => write!(f, "process_all"),
            Command::Replay { index } => write!(f, "replay {index}"),
            Command::Expose { actor, holder } => write!(f, "expose {actor} {holder}"),
            Command::AssertState { actor, check } => match check {
                Check::Epoch(n) => write!(f, "assert_state {actor} epoch {n}"),
                Check::Member(id) => write!(f, "assert_state {actor} member {id}"),
                Check::NotMember(id) => write!(f, "assert_state {actor} not_member {id}"),
                Check::HasReq(id) => write!(f, "assert_state {actor} has_req {id}"),
                Check::NoReq(id) => write!(f, "assert_state {actor} no_req {id}"),
                Check::InGroup => write!(f, "assert_state {actor} in_group"),
                Check::Outside => write!(f, "assert_state {actor} outside"),
            },
            Command::AssertAgree => write!(f, "assert_state agree"),
        }
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_owned(), v.to_owned())),
        _ => Err(format!("expected key=value, got '{s}'")),
    }
}

fn parse_claims(s: &str) -> Result<AttributeMap, String> {
    s.split(',').filter(|p| !p.is_empty()).map(parse_pair).collect()
}

struct Parser {
    actors: BTreeSet<String>,
}

impl Parser {
    fn actor(&self, name: &str) -> Result<String, String> {
        if self.actors.contains(name) {
            Ok(name.to_owned())
        } else {
            Err(format!("undefined actor '{name}'"))
        }
    }

    fn introduce(&mut self, name: &str) -> Result<String, String> {
        if !self.actors.insert(name.to_owned()) {
            return Err(format!("actor '{name}' already defined"));
        }
        Ok(name.to_owned())
    }

    fn line(&mut self, words: &[&str]) -> Result<Command, String> {
        let arity = |n: usize| {
            if words.len() - 1 == n {
                Ok(())
            } else {
                Err(format!("'{}' takes {n} argument(s), got {}", words[0], words.len() - 1))
            }
        };
        let at_least = |n: usize| {
            if words.len() > n {
                Ok(())
            } else {
                Err(format!("'{}' takes at least {n} argument(s), got {}", words[0], words.len() - 1))
            }
        };
        Ok(match words[0] {
            "init" => {
                at_least(2)?;
                let attrs = words[3..].iter().map(|w| parse_pair(w)).collect::<Result<_, _>>()?;
                Command::Init { actor: self.introduce(words[1])?, issuer: words[2].to_owned(), attrs }
            }
            "create" => {
                at_least(1)?;
                let mut reqs = Vec::new();
                for w in &words[2..] {
                    let (id, claims) = w.split_once(':').ok_or_else(|| format!("expected req_id:claims, got '{w}'"))?;
                    reqs.push((id.to_owned(), parse_claims(claims)?));
                }
                Command::Create { actor: self.actor(words[1])?, reqs }
            }
            "publish" => {
                arity(1)?;
                Command::Publish { actor: self.actor(words[1])? }
            }
            "present" => {
                arity(3)?;
                let kind = match words[3] {
                    "add" => PresentKind::Add,
                    "join" => PresentKind::Join,
                    other => return Err(format!("unknown package type '{other}'")),
                };
                Command::Present { actor: self.actor(words[1])?, publisher: self.actor(words[2])?, kind }
            }
            "propose" => {
                arity(3)?;
                if !["add", "join", "update", "remove"].contains(&words[2]) {
                    return Err(format!("unknown proposal type '{}'", words[2]));
                }
                Command::Propose { actor: self.actor(words[1])?, prop_type: words[2].to_owned(), target: self.actor(words[3])? }
            }
            "propose_reqs" => {
                at_least(3)?;
                let actor = self.actor(words[1])?;
                let req_id = words[3].to_owned();
                let change = match words[2] {
                    "add" | "update" => {
                        arity(4)?;
                        let claims = parse_claims(words[4])?;
                        if words[2] == "add" {
                            ReqChange::Add { req_id, claims }
                        } else {
                            ReqChange::Update { req_id, claims }
                        }
                    }
                    "remove" => {
                        arity(3)?;
                        ReqChange::Remove { req_id }
                    }
                    other => return Err(format!("unknown requirement change '{other}'")),
                };
                Command::ProposeReqs { actor, change }
            }
            "commit" => {
                arity(1)?;
                Command::Commit { actor: self.actor(words[1])? }
            }
            "process_all" => {
                arity(0)?;
                Command::ProcessAll
            }
            "replay" => {
                arity(1)?;
                let index = words[1].parse().map_err(|_| format!("bad commit index '{}'", words[1]))?;
                Command::Replay { index }
            }
            "expose" => {
                arity(2)?;
                let actor = self.actor(words[1])?;
                Command::Expose { actor, holder: self.introduce(words[2])? }
            }
            "assert_state" => {
                at_least(1)?;
                if words[1] == "agree" {
                    arity(1)?;
                    return Ok(Command::AssertAgree);
                }
                at_least(2)?;
                let actor = self.actor(words[1])?;
                let check = match words[2] {
                    "in_group" | "outside" => {
                        arity(2)?;
                        if words[2] == "in_group" {
                            Check::InGroup
                        } else {
                            Check::Outside
                        }
                    }
                    field => {
                        arity(3)?;
                        let arg = words[3];
                        match field {
                            "epoch" => Check::Epoch(arg.parse().map_err(|_| format!("bad epoch '{arg}'"))?),
                            "member" => Check::Member(self.actor(arg)?),
                            "not_member" => Check::NotMember(self.actor(arg)?),
                            "has_req" => Check::HasReq(arg.to_owned()),
                            "no_req" => Check::NoReq(arg.to_owned()),
                            other => return Err(format!("unknown state field '{other}'")),
                        }
                    }
                };
                Command::AssertState { actor, check }
            }
            other => return Err(format!("unknown command '{other}'")),
        })
    }
}

/// Parses a whole script, stopping at the first error.
pub fn parse_scenario(text: &str) -> Result<ScenarioScript, ParseError> {
    let mut parser = Parser { actors: BTreeSet::new() };
    let mut script = ScenarioScript::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let command = parser.line(&words).map_err(|message| ParseError { line: i + 1, message })?;
        script.lines.push(Line { number: i + 1, command });
    }
    Ok(script)
}
