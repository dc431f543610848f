//! Synthetic sentences whose roles are planted along a two-hop path: a
//! dependency edge from the trigger to a bridge entity, followed by a shared
//! lexical signature from the bridge to the argument.
//!
//! Signature tokens come from paraphrase clusters (`s{cluster}_{form}`). The
//! argument's role is a function of the shared cluster. Distractors are never
//! attached to the trigger and never share the bridge's cluster; some come in
//! pairs that share a cluster with each other, so a shared signature alone
//! does not identify an argument.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Argument, Corpus, CorpusError, EntityMention, EventMention, Example};

const ROLE_NAMES: [&str; 6] = ["Agent", "Patient", "Instrument", "Place", "Time", "Beneficiary"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Target fraction of instances with a non-None gold role.
    pub positive_rate: f64,
    pub n_roles: usize,
    pub n_clusters: usize,
    pub forms_per_cluster: usize,
    pub n_subtypes: usize,
    pub triggers_per_subtype: usize,
    pub n_fillers: usize,
    pub min_entities: usize,
    pub max_entities: usize,
    pub min_filler_tokens: usize,
    pub max_filler_tokens: usize,
    /// Filler tokens attached directly to the trigger.
    pub trigger_children: usize,
    /// Probability that two distractors share a cluster with each other.
    pub distractor_pair_rate: f64,
    /// Probability that an entity mention gets a determiner.
    pub determiner_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            positive_rate: 0.3,
            n_roles: 6,
            n_clusters: 12,
            forms_per_cluster: 3,
            n_subtypes: 3,
            triggers_per_subtype: 3,
            n_fillers: 30,
            min_entities: 2,
            max_entities: 5,
            min_filler_tokens: 3,
            max_filler_tokens: 8,
            trigger_children: 2,
            distractor_pair_rate: 0.5,
            determiner_rate: 0.3,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: &str| Err(CorpusError::Params(m.to_string()));
        if !(0.0..=0.5).contains(&self.positive_rate) {
            return fail("positive_rate must lie in [0, 0.5]");
        }
        if self.n_roles == 0 || self.n_roles > self.n_clusters {
            return fail("need 1 <= n_roles <= n_clusters");
        }
        if self.min_entities < 2 || self.min_entities > self.max_entities {
            return fail("need 2 <= min_entities <= max_entities");
        }
        if self.n_clusters < self.max_entities {
            return fail("vocabulary has fewer signature clusters than entities per sentence");
        }
        if self.forms_per_cluster == 0 || self.n_subtypes == 0 || self.triggers_per_subtype == 0 {
            return fail("forms_per_cluster, n_subtypes and triggers_per_subtype must be positive");
        }
        if self.min_filler_tokens > self.max_filler_tokens {
            return fail("min_filler_tokens > max_filler_tokens");
        }
        if self.trigger_children > self.min_filler_tokens {
            return fail("trigger_children exceeds min_filler_tokens");
        }
        if self.max_filler_tokens > 0 && self.n_fillers == 0 {
            return fail("filler tokens requested with an empty filler vocabulary");
        }
        for p in [self.distractor_pair_rate, self.determiner_rate] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn role_name(&self, cluster: usize) -> String {
        let r = cluster % self.n_roles;
        ROLE_NAMES
            .get(r)
            .map_or_else(|| format!("Role{r}"), |s| s.to_string())
    }

    fn signature(&self, cluster: usize, form: usize) -> String {
        format!("s{cluster}_{form}")
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Bridge,
    Argument,
    Distractor,
}

struct PlannedEntity {
    kind: Kind,
    cluster: usize,
    determiner: bool,
}

enum Unit {
    Trigger,
    Entity(usize),
    Filler,
}

/// Deterministic corpus of `n_sentences` examples for `(seed, params)`.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_sentences: usize,
    params: &SynthParams,
) -> Result<Corpus, CorpusError> {
    params.validate()?;
    if n_sentences == 0 {
        return Err(CorpusError::Params("n_sentences must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n_sentences)
        .map(|i| generate_sentence(&mut rng, params, format!("syn-{seed}-{i}")))
        .collect();
    Ok(Corpus::new(examples))
}

fn generate_sentence(rng: &mut ChaCha8Rng, p: &SynthParams, id: String) -> Example {
    let n_ent = rng.gen_range(p.min_entities..=p.max_entities);
    // Per-candidate argument probability so that E[#args] = positive_rate · n_ent.
    let q = (p.positive_rate * n_ent as f64 / (n_ent - 1) as f64).min(1.0);
    let bridge_cluster = rng.gen_range(0..p.n_clusters);
    let n_args = (0..n_ent - 1).filter(|_| rng.gen_bool(q)).count();
    let n_distract = n_ent - 1 - n_args;

    let mut free: Vec<usize> = (0..p.n_clusters).filter(|&c| c != bridge_cluster).collect();
    free.shuffle(rng);
    let mut planned = vec![PlannedEntity {
        kind: Kind::Bridge,
        cluster: bridge_cluster,
        determiner: false,
    }];
    for _ in 0..n_args {
        planned.push(PlannedEntity {
            kind: Kind::Argument,
            cluster: bridge_cluster,
            determiner: false,
        });
    }
    let paired = n_distract >= 2 && rng.gen_bool(p.distractor_pair_rate);
    for k in 0..n_distract {
        let cluster = if paired && k == 1 {
            planned.last().expect("first of pair").cluster
        } else {
            free.pop().expect("validated cluster count")
        };
        planned.push(PlannedEntity {
            kind: Kind::Distractor,
            cluster,
            determiner: false,
        });
    }
    for ent in &mut planned {
        ent.determiner = rng.gen_bool(p.determiner_rate);
    }

    let n_fill = rng.gen_range(p.min_filler_tokens..=p.max_filler_tokens);
    let mut units: Vec<Unit> = std::iter::once(Unit::Trigger)
        .chain((0..planned.len()).map(Unit::Entity))
        .chain((0..n_fill).map(|_| Unit::Filler))
        .collect();
    units.shuffle(rng);

    // Lay out tokens.
    let subtype = rng.gen_range(0..p.n_subtypes);
    let mut tokens = Vec::new();
    let mut trigger = 0;
    let mut filler_pos = Vec::new();
    let mut spans = vec![(0usize, 0usize); planned.len()];
    for unit in &units {
        match *unit {
            Unit::Trigger => {
                trigger = tokens.len();
                let v = rng.gen_range(0..p.triggers_per_subtype);
                tokens.push(format!("T{subtype}_{v}"));
            }
            Unit::Filler => {
                filler_pos.push(tokens.len());
                tokens.push(format!("f{}", rng.gen_range(0..p.n_fillers)));
            }
            Unit::Entity(k) => {
                let start = tokens.len();
                if planned[k].determiner {
                    tokens.push("the".to_string());
                }
                let form = rng.gen_range(0..p.forms_per_cluster);
                spans[k] = (start, tokens.len());
                tokens.push(p.signature(planned[k].cluster, form));
            }
        }
    }

    // Build the tree rooted at the trigger.
    let mut heads = vec![-1i64; tokens.len()];
    let mut attached = vec![trigger];
    let bridge_head = spans[0].1;
    heads[bridge_head] = trigger as i64;
    attached.push(bridge_head);
    for &f in filler_pos.iter().take(p.trigger_children) {
        heads[f] = trigger as i64;
        attached.push(f);
    }
    // Remaining fillers and non-bridge entities attach below existing nodes;
    // entities never attach to the trigger itself.
    let mut pending: Vec<(usize, bool)> = filler_pos
        .iter()
        .skip(p.trigger_children)
        .map(|&f| (f, true))
        .chain(spans.iter().skip(1).map(|&(_, h)| (h, false)))
        .collect();
    pending.shuffle(rng);
    for (tok, may_touch_trigger) in pending {
        let head = loop {
            let cand = attached[rng.gen_range(0..attached.len())];
            if may_touch_trigger || cand != trigger {
                break cand;
            }
        };
        heads[tok] = head as i64;
        attached.push(tok);
    }
    for &(start, head) in &spans {
        if start != head {
            heads[start] = head as i64;
        }
    }

    // Entities in surface order.
    let mut order: Vec<usize> = (0..planned.len()).collect();
    order.sort_by_key(|&k| spans[k].0);
    let mut entities = Vec::with_capacity(planned.len());
    let mut arguments = Vec::new();
    for (pos, &k) in order.iter().enumerate() {
        let (start, head) = spans[k];
        entities.push(EntityMention {
            start,
            end: head,
            head_index: head,
        });
        if planned[k].kind == Kind::Argument {
            arguments.push(Argument {
                entity: pos,
                role: p.role_name(planned[k].cluster),
            });
        }
    }

    Example {
        sentence_id: id,
        tokens,
        heads,
        entities,
        events: vec![EventMention {
            trigger_index: trigger,
            subtype: format!("Sub{subtype}"),
            arguments,
        }],
    }
}

/// Every token the generator can emit, paired with a random vector.
///
/// Forms of one signature cluster are drawn around a shared centroid
/// (`cluster_noise` controls the spread); all other tokens are independent
/// standard-normal draws scaled by `1/√dim`.
pub fn synthetic_vocabulary_vectors(
    seed: u64,
    params: &SynthParams,
    dim: usize,
    cluster_noise: f64,
) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_de3b);
    let scale = 1.0 / (dim as f64).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| normal.sample(rng) * scale).collect()
    };
    let mut out = Vec::new();
    out.push(("the".to_string(), draw(&mut rng)));
    for f in 0..params.n_fillers {
        out.push((format!("f{f}"), draw(&mut rng)));
    }
    for s in 0..params.n_subtypes {
        for v in 0..params.triggers_per_subtype {
            out.push((format!("T{s}_{v}"), draw(&mut rng)));
        }
    }
    for c in 0..params.n_clusters {
        let centroid = draw(&mut rng);
        for f in 0..params.forms_per_cluster {
            let noise = draw(&mut rng);
            let v = centroid
                .iter()
                .zip(&noise)
                .map(|(c, n)| c + cluster_noise * n)
                .collect();
            out.push((params.signature(c, f), v));
        }
    }
    out
}
