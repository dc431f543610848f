//! Training loop, evaluation, distance buckets and the ablation matrix.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::config::{fnv1a, TrainConfig};
use crate::corpus::{load_corpus, Corpus, Instance, RoleInventory, NONE_ROLE};
use crate::encoder::{EmbeddingTable, PrecomputedVectors};
use crate::model::{Model, WordInit};
use crate::numeric::{adam_step, Tape};
use crate::{Error, Result};

/// Candidate–trigger distances up to this value fall in the near bucket.
pub const NEAR_BUCKET_MAX: usize = 10;

/// Micro-averaged argument-role scores. Triggers and entities are gold
/// inputs, so an argument counts as correct when its role matches.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub instances: usize,
    /// Fraction of instances (None included) whose role is predicted exactly.
    pub accuracy: f64,
    pub buckets: Buckets,
    pub scoring: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Buckets {
    pub le10: BucketScore,
    pub gt10: BucketScore,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BucketScore {
    pub instances: usize,
    /// `None` for an empty bucket, shown as `n/a`.
    #[serde(rename = "F1", serialize_with = "f1_or_na")]
    pub f1: Option<f64>,
}

fn f1_or_na<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("n/a"),
    }
}

impl std::fmt::Display for BucketScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.f1 {
            Some(x) => write!(f, "{x:.2} (n={})", self.instances),
            None => write!(f, "n/a (n=0)"),
        }
    }
}

/// Running role-match counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub instances: usize,
    pub exact: usize,
}

impl Counts {
    pub fn add(&mut self, gold: usize, pred: usize, none: usize) {
        self.instances += 1;
        self.exact += usize::from(gold == pred);
        self.gold += usize::from(gold != none);
        self.predicted += usize::from(pred != none);
        self.correct += usize::from(gold == pred && gold != none);
    }

    /// `(P, R, F1)` as percentages; an undefined ratio is reported as 0.
    pub fn prf(&self) -> (f64, f64, f64) {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let p = pct(self.correct, self.predicted);
        let r = pct(self.correct, self.gold);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

fn bucket(c: &Counts) -> BucketScore {
    BucketScore {
        instances: c.instances,
        f1: (c.instances > 0).then(|| c.prf().2),
    }
}

impl EvalReport {
    pub fn from_counts(all: &Counts, near: &Counts, far: &Counts) -> Self {
        let (precision, recall, f1) = all.prf();
        Self {
            precision,
            recall,
            f1,
            gold: all.gold,
            predicted: all.predicted,
            correct: all.correct,
            instances: all.instances,
            accuracy: if all.instances == 0 {
                0.0
            } else {
                all.exact as f64 / all.instances as f64
            },
            buckets: Buckets {
                le10: bucket(near),
                gt10: bucket(far),
            },
            scoring: "role match given gold triggers and entities",
        }
    }
}

/// Maps each corpus role id to the model's id for the same name.
fn role_map(model_roles: &RoleInventory, corpus_roles: &RoleInventory) -> Result<Vec<usize>> {
    corpus_roles
        .names()
        .iter()
        .map(|name| {
            model_roles
                .id(name)
                .ok_or_else(|| Error::Config(format!("role {name:?} is not known to the model")))
        })
        .collect()
}

/// Scores the model's argmax role for every instance of `corpus`.
pub fn evaluate(model: &Model, corpus: &Corpus, pre: Option<&PrecomputedVectors>) -> Result<EvalReport> {
    let map = role_map(&model.roles, &corpus.roles)?;
    let none = model
        .roles
        .id(NONE_ROLE)
        .ok_or_else(|| Error::Config("model roles lack None".into()))?;
    let (mut all, mut near, mut far) = (Counts::default(), Counts::default(), Counts::default());
    for inst in corpus.instances() {
        let gold = map[inst.gold_role];
        let pred = model.predict(&inst, pre)?;
        all.add(gold, pred, none);
        if inst.a.abs_diff(inst.e) <= NEAR_BUCKET_MAX {
            near.add(gold, pred, none);
        } else {
            far.add(gold, pred, none);
        }
    }
    Ok(EvalReport::from_counts(&all, &near, &far))
}

/// Per-bucket F1 split by `|a − e|`.
pub fn bucket_analysis(model: &Model, corpus: &Corpus, pre: Option<&PrecomputedVectors>) -> Result<Buckets> {
    Ok(evaluate(model, corpus, pre)?.buckets)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
}

pub struct TrainOutcome {
    /// Model restored to the best dev-F1 epoch (initialization if none ran).
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Train, dev and test corpora with a shared role inventory, plus the word
/// vector source.
pub struct Dataset {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub table: Option<EmbeddingTable>,
    pub vectors: Option<PrecomputedVectors>,
}

impl Dataset {
    /// Gives every split the union of the observed role names.
    pub fn new(
        train: Corpus,
        dev: Corpus,
        test: Corpus,
        table: Option<EmbeddingTable>,
        vectors: Option<PrecomputedVectors>,
    ) -> Self {
        let names: Vec<String> = [&train, &dev, &test]
            .iter()
            .flat_map(|c| c.roles.names().iter().cloned())
            .collect();
        let roles = RoleInventory::from_observed(names.iter().map(String::as_str).filter(|n| *n != NONE_ROLE));
        let with = |mut c: Corpus| {
            c.roles = roles.clone();
            c
        };
        Self {
            train: with(train),
            dev: with(dev),
            test: with(test),
            table,
            vectors,
        }
    }

    /// Reads the corpus and word vectors named in `config`. Without explicit
    /// dev/test files the corpus is split 80/10/10 by sentence-id hash.
    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        let path = config
            .corpus
            .as_ref()
            .ok_or_else(|| Error::Config("corpus path is required".into()))?;
        let corpus = load_corpus(path)?;
        let (train, dev, test) = match (&config.dev_corpus, &config.test_corpus) {
            (Some(d), Some(t)) => (corpus, load_corpus(d)?, load_corpus(t)?),
            (dev_path, test_path) => {
                let (train, dev, test) = split_by_id(&corpus);
                let dev = match dev_path {
                    Some(d) => load_corpus(d)?,
                    None => dev,
                };
                let test = match test_path {
                    Some(t) => load_corpus(t)?,
                    None => test,
                };
                (train, dev, test)
            }
        };
        let vectors = config.vectors.as_ref().map(PrecomputedVectors::load).transpose()?;
        let table = match (&config.embeddings, &vectors) {
            (Some(p), _) => Some(EmbeddingTable::load(p)?),
            (None, Some(_)) => None,
            (None, None) => return Err(Error::Config("either embeddings or vectors must be given".into())),
        };
        Ok(Self::new(train, dev, test, table, vectors))
    }

    pub fn word_init(&self) -> Result<WordInit> {
        match (&self.vectors, &self.table) {
            (Some(v), _) => Ok(WordInit::Precomputed { dim: v.dim() }),
            (None, Some(t)) => Ok(WordInit::Table(t.clone())),
            (None, None) => Err(Error::Config("no word vectors".into())),
        }
    }

    pub fn vectors(&self) -> Option<&PrecomputedVectors> {
        self.vectors.as_ref()
    }
}

/// Deterministic 80/10/10 train/dev/test split on the FNV-1a hash of the id.
pub fn split_by_id(corpus: &Corpus) -> (Corpus, Corpus, Corpus) {
    let mut parts: [Vec<_>; 3] = Default::default();
    for ex in &corpus.examples {
        let slot = match fnv1a(ex.sentence_id.as_bytes()) % 10 {
            0 => 2,
            1 => 1,
            _ => 0,
        };
        parts[slot].push(ex.clone());
    }
    let [train, dev, test] = parts;
    let mk = |examples| Corpus {
        examples,
        roles: corpus.roles.clone(),
    };
    (mk(train), mk(dev), mk(test))
}

/// Instance-level training accuracy of the current parameters.
pub fn accuracy(model: &Model, instances: &[Instance<'_>], pre: Option<&PrecomputedVectors>) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for inst in instances {
        hits += usize::from(model.predict(inst, pre)? == inst.gold_role);
    }
    Ok(hits as f64 / instances.len() as f64)
}

/// Trains with per-epoch dev evaluation; keeps the best dev-F1 parameters.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    train_with(config, data, |_| ControlFlow::Continue(()))
}

/// As [`train`], calling `observe` after every epoch; `Break` stops early.
pub fn train_with(
    config: &TrainConfig,
    data: &Dataset,
    mut observe: impl FnMut(&EpochRecord) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    let mut model = Model::new(config.clone(), data.train.roles.clone(), data.word_init()?)?;
    let pre = data.vectors();
    let instances = data.train.instances();
    if instances.is_empty() && config.epochs > 0 {
        return Err(Error::Train("training corpus has no instances".into()));
    }
    let adam = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut best_store = model.store.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Instance<'_>> = chunk.iter().map(|&i| instances[i]).collect();
            let grads = {
                let mut tape = Tape::new();
                let parts = model.batch_loss(&mut tape, &batch, pre)?;
                let context = |e: crate::numeric::NumericError| {
                    Error::Train(format!("epoch {epoch}, batch {}: {e}", b + 1))
                };
                let grads = tape.backward(parts.loss, &model.store).map_err(context)?;
                loss_sum += tape.value(parts.loss).item() * batch.len() as f64;
                grads
            };
            adam_step(&mut model.store, &grads, &adam)?;
        }
        let dev = evaluate(&model, &data.dev, pre)?;
        let train_accuracy = if config.track_train_accuracy {
            Some(accuracy(&model, &instances, pre)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            precision: dev.precision,
            recall: dev.recall,
            f1: dev.f1,
            loss: loss_sum / instances.len() as f64,
            train_accuracy,
        };
        if record.f1 > best_f1 {
            best_f1 = record.f1;
            best_epoch = epoch;
            best_store = model.store.clone();
        }
        let flow = observe(&record);
        history.push(record);
        if flow.is_break() {
            break;
        }
    }
    model.store = best_store;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// The metrics file written by `train`.
#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub config_hash: String,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub test: EvalReport,
    pub buckets: Buckets,
}

/// One row of the ablation table.
#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub name: &'static str,
    pub overrides: Vec<(&'static str, &'static str)>,
    pub config_hash: String,
    pub best_epoch: usize,
    pub dev: EvalReport,
    pub test: EvalReport,
}

/// Full model first, then one row per single-switch variant.
pub const ABLATIONS: [(&str, &[(&str, &str)]); 13] = [
    ("SemSynGTN", &[]),
    ("- GTN", &[("ablation.use_gtn", "false")]),
    ("- Multi-hop", &[("ablation.use_multihop", "false")]),
    ("- SynCustom", &[("ablation.use_syn_custom", "false")]),
    ("- SemCustom", &[("ablation.use_sem_custom", "false")]),
    ("- IB", &[("ib.enabled", "false")]),
    ("- IB + LSTM in R", &[("ib.enabled", "false"), ("ablation.lstm_in_r", "true")]),
    ("- A_d", &[("ablation.drop_structure", "A_d")]),
    ("- A_a", &[("ablation.drop_structure", "A_a")]),
    ("- A_e", &[("ablation.drop_structure", "A_e")]),
    ("- A_s", &[("ablation.drop_structure", "A_s")]),
    ("X for MI", &[("ib.mi_source", "X")]),
    ("E for MI", &[("ib.mi_source", "E")]),
];

/// The config for each ablation row, derived from `base`.
pub fn ablation_configs(base: &TrainConfig) -> Result<Vec<(&'static str, TrainConfig)>> {
    ABLATIONS
        .iter()
        .map(|&(name, sets)| {
            let mut c = base.clone();
            for &(k, v) in sets {
                c.set(k, v)?;
            }
            Ok((name, c))
        })
        .collect()
}

/// Trains and scores every ablation variant with the base seed.
pub fn ablate(
    base: &TrainConfig,
    data: &Dataset,
    mut progress: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(ABLATIONS.len());
    for ((name, config), &(_, sets)) in ablation_configs(base)?.into_iter().zip(ABLATIONS.iter()) {
        let outcome = train(&config, data)?;
        let dev = evaluate(&outcome.model, &data.dev, data.vectors())?;
        let test = evaluate(&outcome.model, &data.test, data.vectors())?;
        let row = AblationRow {
            name,
            overrides: sets.to_vec(),
            config_hash: config.hash(),
            best_epoch: outcome.best_epoch,
            dev,
            test,
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Widths small enough for finite differences over every parameter.
pub fn grad_check_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.d_dist = 3;
    c.dist_clip = 6;
    c.d_len = 3;
    c.len_max = 4;
    c.d_h = 6;
    c.lstm_layers = 2;
    c.ff_hidden = 4;
    c.key_dim = 4;
    c.gcn_hidden = 4;
    c.head_hidden = 5;
    c.disc_hidden = 4;
    c.channels = 2;
    c.intermediates = 3;
    c.gcn_layers = 2;
    c
}

/// Two five-token sentences with one event each, and matching 4-d vectors.
pub fn grad_check_fixture(seed: u64) -> Result<(Corpus, EmbeddingTable)> {
    let lines = [
        r#"{"id":"gc-1","tokens":["s0_0","T0_0","s0_1","f1","s1_0"],"heads":[1,-1,0,1,3],"entities":[{"start":0,"end":0,"head_index":0},{"start":2,"end":2,"head_index":2},{"start":4,"end":4,"head_index":4}],"events":[{"trigger_index":1,"subtype":"Sub0","arguments":[{"entity":1,"role":"Agent"}]}]}"#,
        r#"{"id":"gc-2","tokens":["f2","s2_0","T1_0","s2_1","s3_0"],"heads":[1,2,-1,1,0],"entities":[{"start":1,"end":1,"head_index":1},{"start":3,"end":3,"head_index":3},{"start":4,"end":4,"head_index":4}],"events":[{"trigger_index":2,"subtype":"Sub1","arguments":[{"entity":1,"role":"Patient"}]}]}"#,
    ];
    let corpus = crate::corpus::parse_corpus(lines.join("\n").as_bytes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab: Vec<&String> = corpus.examples.iter().flat_map(|e| e.tokens.iter()).collect();
    vocab.sort();
    vocab.dedup();
    let rows = vocab
        .into_iter()
        .map(|t| {
            let v = crate::numeric::Tensor::normal(&mut rng, &[4], 0.5).into_data();
            (t.clone(), v)
        })
        .collect();
    Ok((corpus, EmbeddingTable::from_rows(rows)?))
}

/// Central-difference check of the full batch loss (both fixture sentences,
/// so the discriminator term is active) against reverse mode.
pub fn whole_model_grad_check(config: &TrainConfig, eps: f64) -> Result<crate::numeric::GradCheckReport> {
    let (corpus, table) = grad_check_fixture(config.seed)?;
    let model = Model::new(config.clone(), corpus.roles.clone(), WordInit::Table(table))?;
    let instances = corpus.instances();
    let report = crate::numeric::grad_check(&model.store, eps, |tape, store| {
        model
            .batch_loss_with(store, tape, &instances, None)
            .map(|b| b.loss)
            .map_err(|e| match e {
                Error::Numeric(n) => n,
                other => crate::numeric::NumericError::Checkpoint(other.to_string()),
            })
    })?;
    Ok(report)
}
