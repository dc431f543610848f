//! Sentences with gold trees, entity mentions, event triggers and roles.

mod synth;

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use synth::{generate_synthetic_corpus, synthetic_vocabulary_vectors, SynthParams};

pub const NONE_ROLE: &str = "None";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("invalid generator settings: {0}")]
    Params(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Structural problems with a head list.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("empty sentence")]
    Empty,
    #[error("head {head} of token {token} out of range")]
    OutOfRange { token: usize, head: i64 },
    #[error("multiple roots at tokens {0} and {1}")]
    MultipleRoots(usize, usize),
    #[error("cyclic head pointers")]
    Cycle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub end: usize,
    pub head_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    /// Position in the sentence's entity list.
    pub entity: usize,
    pub role: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub trigger_index: usize,
    pub subtype: String,
    #[serde(default)]
    pub arguments: Vec<Argument>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    #[serde(rename = "id")]
    pub sentence_id: String,
    pub tokens: Vec<String>,
    /// 0-based parent index per token; the root has -1.
    pub heads: Vec<i64>,
    #[serde(default)]
    pub entities: Vec<EntityMention>,
    #[serde(default)]
    pub events: Vec<EventMention>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.tokens.len();
        if self.heads.len() != n {
            return Err(format!(
                "{} heads for {} tokens",
                self.heads.len(),
                n
            ));
        }
        validate_heads(&self.heads).map_err(|e| e.to_string())?;
        for (k, ent) in self.entities.iter().enumerate() {
            if !(ent.start <= ent.head_index && ent.head_index <= ent.end && ent.end < n) {
                return Err(format!(
                    "entity {k} span [{}, {}] head {} out of range for {n} tokens",
                    ent.start, ent.end, ent.head_index
                ));
            }
        }
        for (k, ev) in self.events.iter().enumerate() {
            if ev.trigger_index >= n {
                return Err(format!(
                    "event {k} trigger index {} out of range for {n} tokens",
                    ev.trigger_index
                ));
            }
            for arg in &ev.arguments {
                let Some(ent) = self.entities.get(arg.entity) else {
                    return Err(format!("event {k} references unknown entity_id {}", arg.entity));
                };
                if ent.head_index == ev.trigger_index && arg.role != NONE_ROLE {
                    return Err(format!(
                        "event {k}: entity {} is anchored on the trigger but has role {}",
                        arg.entity, arg.role
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Role names with `None` at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleInventory {
    names: Vec<String>,
}

impl RoleInventory {
    /// Sorted, de-duplicated names with `None` prepended.
    pub fn from_observed<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = names.into_iter().filter(|n| *n != NONE_ROLE).collect();
        let mut out = vec![NONE_ROLE.to_string()];
        out.extend(set.into_iter().map(str::to_string));
        Self { names: out }
    }

    /// Takes names as given; index 0 must be `None` and names must be unique.
    pub fn from_names(names: Vec<String>) -> Result<Self, String> {
        if names.first().map(String::as_str) != Some(NONE_ROLE) {
            return Err("role inventory must start with None".into());
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err("duplicate role names".into());
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub roles: RoleInventory,
}

impl Corpus {
    pub fn new(examples: Vec<Example>) -> Self {
        let roles = RoleInventory::from_observed(
            examples
                .iter()
                .flat_map(|ex| ex.events.iter())
                .flat_map(|ev| ev.arguments.iter())
                .map(|a| a.role.as_str()),
        );
        Self { examples, roles }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn instances(&self) -> Vec<Instance<'_>> {
        self.examples
            .iter()
            .flat_map(|ex| enumerate_instances(ex, &self.roles))
            .collect()
    }
}

/// One (sentence, candidate, trigger) classification problem.
#[derive(Clone, Copy, Debug)]
pub struct Instance<'a> {
    pub example: &'a Example,
    pub event: usize,
    pub entity: usize,
    /// Candidate anchor (the entity's head token).
    pub a: usize,
    /// Trigger index.
    pub e: usize,
    pub gold_role: usize,
}

/// Checks that `heads` encodes a single rooted tree.
pub fn validate_heads(heads: &[i64]) -> Result<(), TreeError> {
    let n = heads.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let mut root = None;
    for (i, &h) in heads.iter().enumerate() {
        if h == -1 {
            if let Some(r) = root {
                return Err(TreeError::MultipleRoots(r, i));
            }
            root = Some(i);
        } else if h < 0 || h as usize >= n {
            return Err(TreeError::OutOfRange { token: i, head: h });
        }
    }
    // Every token must reach the root; with no -1 at all this reports a cycle.
    let mut state = vec![0u8; n]; // 0 unseen, 1 on current path, 2 reaches root
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => return Err(TreeError::Cycle),
                _ => {}
            }
            state[cur] = 1;
            path.push(cur);
            match heads[cur] {
                -1 => break,
                h => cur = h as usize,
            }
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(())
}

/// Undirected tree-path length from `anchor` to every token.
pub fn dep_path_lengths(heads: &[i64], anchor: usize) -> Result<Vec<usize>, TreeError> {
    validate_heads(heads)?;
    let n = heads.len();
    assert!(anchor < n, "anchor {anchor} out of range for {n} tokens");
    let mut adj = vec![Vec::new(); n];
    for (i, &h) in heads.iter().enumerate() {
        if h >= 0 {
            adj[i].push(h as usize);
            adj[h as usize].push(i);
        }
    }
    let mut dist = vec![usize::MAX; n];
    dist[anchor] = 0;
    let mut queue = VecDeque::from([anchor]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// One instance per (event, entity) pair, in event-then-entity order.
pub fn enumerate_instances<'a>(example: &'a Example, roles: &RoleInventory) -> Vec<Instance<'a>> {
    let mut out = Vec::with_capacity(example.events.len() * example.entities.len());
    for (ev_idx, ev) in example.events.iter().enumerate() {
        for (ent_idx, ent) in example.entities.iter().enumerate() {
            let gold_role = ev
                .arguments
                .iter()
                .find(|arg| arg.entity == ent_idx)
                .and_then(|arg| roles.id(&arg.role))
                .unwrap_or(0);
            out.push(Instance {
                example,
                event: ev_idx,
                entity: ent_idx,
                a: ent.head_index,
                e: ev.trigger_index,
                gold_role,
            });
        }
    }
    out
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            line: line_no,
            source,
        })?;
        ex.validate()
            .map_err(|message| CorpusError::Invalid { line: line_no, message })?;
        examples.push(ex);
    }
    Ok(Corpus::new(examples))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let f = fs::File::open(path)?;
    parse_corpus(BufReader::new(f))
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> Result<(), CorpusError> {
    for ex in &corpus.examples {
        serde_json::to_writer(&mut w, ex).map_err(|source| CorpusError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let f = fs::File::create(path)?;
    write_corpus(corpus, BufWriter::new(f))
}
