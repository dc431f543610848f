//! The assembled model: parameters for every component plus the per-instance
//! forward pass and the batch training loss.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{MiSource, TrainConfig};
use crate::corpus::{dep_path_lengths, Example, Instance, RoleInventory};
use crate::encoder::{
    bilstm_encode, embed_tokens, word_vectors, EmbeddingTable, EncoderDims, EncoderParams, PrecomputedVectors,
    WordSource,
};
use crate::gtn::{anchor_pool, encode_with_gtn, loss_pred, predict_role, GcnStack, GtnWeights, Propagation, RoleHead};
use crate::ib::{ib_loss, negative_pairing, summarize, total_loss, Discriminator};
use crate::numeric::{Axis, Checkpoint, ParameterStore, Tape, Tensor, Var};
use crate::structures::{
    anchor_syntax_structure, build_structure_set, dep_adjacency, semantic_structure_customized,
    semantic_structure_plain, StructureDims, StructureKind, StructureParams, StructureSet,
};
use crate::{Error, Result};

/// Where word vectors come from when the model is built.
pub enum WordInit {
    /// A static table, stored in the model as the frozen `emb.word`.
    Table(EmbeddingTable),
    /// Per-sentence vectors of this width, supplied at run time.
    Precomputed { dim: usize },
}

pub struct Model {
    pub config: TrainConfig,
    pub roles: RoleInventory,
    pub store: ParameterStore,
    table: Option<EmbeddingTable>,
    word_dim: usize,
    encoder: EncoderParams,
    structure_params: StructureParams,
    gtn: Option<GtnWeights>,
    gcn: GcnStack,
    head: RoleHead,
    disc: Option<Discriminator>,
}

/// Nodes produced by one instance's forward pass.
pub struct Forward {
    pub probs: Var,
    /// Pooled GTN output `h'`.
    pub summary: Var,
    /// Pooled earlier-layer sequence selected by the MI source.
    pub mi_summary: Var,
}

/// Scalar parts of a batch loss, plus the loss node itself.
pub struct BatchLoss {
    pub loss: Var,
    pub pred: f64,
    pub disc: f64,
    /// Instances in the batch with a negative partner.
    pub ib_terms: usize,
}

/// Structures that enter the GTN under `config`, identity last.
pub fn active_structures(config: &TrainConfig) -> Vec<StructureKind> {
    let dropped = config.drop_structure.kind();
    let mut kinds = Vec::new();
    for kind in [StructureKind::Dep, StructureKind::Arg, StructureKind::Trig, StructureKind::Sem] {
        let syntax = matches!(kind, StructureKind::Arg | StructureKind::Trig);
        if Some(kind) == dropped || (syntax && !config.use_syn_custom) {
            continue;
        }
        kinds.push(kind);
    }
    kinds.push(StructureKind::Identity);
    kinds
}

fn propagation(config: &TrainConfig) -> Propagation {
    if !config.use_gtn {
        Propagation::Structures
    } else if !config.use_multihop {
        Propagation::Intermediates
    } else {
        Propagation::Channels
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Model {
    pub fn new(config: TrainConfig, roles: RoleInventory, words: WordInit) -> Result<Self> {
        config.validate()?;
        if roles.len() < 2 {
            return Err(Error::Config("role inventory needs None plus at least one role".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParameterStore::new();
        let (table, word_dim) = match words {
            WordInit::Table(t) => {
                let d = t.dim();
                (Some(t), d)
            }
            WordInit::Precomputed { dim } => (None, dim),
        };
        if word_dim == 0 {
            return Err(Error::Config("word vector width must be positive".into()));
        }
        let encoder = EncoderParams::init(
            &mut store,
            &mut rng,
            &EncoderDims {
                word_dim,
                dist_dim: config.d_dist,
                dist_clip: config.dist_clip,
                hidden: config.d_h,
                layers: config.lstm_layers,
            },
            table.as_ref(),
        )?;
        let structure_params = StructureParams::init(
            &mut store,
            &mut rng,
            &StructureDims {
                len_dim: config.d_len,
                len_max: config.len_max,
                ff_hidden: config.ff_hidden,
                hidden: config.d_h,
                key_dim: config.key_dim,
            },
        )?;
        let n_structures = active_structures(&config).len();
        let mode = propagation(&config);
        let gtn = match mode {
            Propagation::Structures => None,
            _ => Some(GtnWeights::init(
                &mut store,
                &mut rng,
                config.channels,
                config.intermediates,
                n_structures,
            )?),
        };
        let gcn = GcnStack::init(&mut store, &mut rng, config.d_h, config.gcn_hidden, config.gcn_layers)?;
        let blocks = match mode {
            Propagation::Channels => config.channels,
            Propagation::Intermediates => config.channels * config.intermediates,
            Propagation::Structures => n_structures,
        };
        let h_prime = blocks * config.gcn_hidden;
        let r_width = 3 * h_prime + if config.lstm_in_r { 3 * config.d_h } else { 0 };
        let head = RoleHead::init(&mut store, &mut rng, r_width, config.head_hidden, roles.len())?;
        let disc = if config.use_ib {
            let mi = match config.mi_source {
                MiSource::H => config.d_h,
                MiSource::X => word_dim + 2 * config.d_dist,
                MiSource::E => word_dim,
            };
            Some(Discriminator::init(&mut store, &mut rng, h_prime + mi, config.disc_hidden)?)
        } else {
            None
        };
        Ok(Self {
            config,
            roles,
            store,
            table,
            word_dim,
            encoder,
            structure_params,
            gtn,
            gcn,
            head,
            disc,
        })
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn uses_precomputed_vectors(&self) -> bool {
        self.table.is_none()
    }

    fn source<'a>(&'a self, pre: Option<&'a PrecomputedVectors>) -> Result<WordSource<'a>> {
        match (&self.table, pre) {
            (_, Some(p)) => {
                if p.dim() != self.word_dim {
                    return Err(Error::Config(format!(
                        "precomputed vectors have width {}, model expects {}",
                        p.dim(),
                        self.word_dim
                    )));
                }
                Ok(WordSource::Precomputed(p))
            }
            (Some(t), None) => Ok(WordSource::Table(t)),
            (None, None) => Err(Error::Config("model needs precomputed word vectors".into())),
        }
    }

    /// Word vector node for a sentence.
    pub fn words(&self, tape: &mut Tape, example: &Example, pre: Option<&PrecomputedVectors>) -> Result<Var> {
        self.words_with(&self.store, tape, example, pre)
    }

    fn words_with(
        &self,
        store: &ParameterStore,
        tape: &mut Tape,
        example: &Example,
        pre: Option<&PrecomputedVectors>,
    ) -> Result<Var> {
        let source = self.source(pre)?;
        word_vectors(tape, store, &self.encoder, source, example)
    }

    fn structure_node(
        &self,
        store: &ParameterStore,
        tape: &mut Tape,
        kind: StructureKind,
        inst: &Instance<'_>,
        h: Var,
    ) -> Result<Var> {
        let heads = &inst.example.heads;
        let sp = &self.structure_params;
        Ok(match kind {
            StructureKind::Dep => tape.constant(dep_adjacency(heads)?),
            StructureKind::Arg | StructureKind::Trig => {
                let (anchor, scorer) = if kind == StructureKind::Arg {
                    (inst.a, &sp.arg_scorer)
                } else {
                    (inst.e, &sp.trig_scorer)
                };
                let lengths = dep_path_lengths(heads, anchor)?;
                anchor_syntax_structure(tape, store, sp.length_table, sp.len_max, scorer, &lengths)?
            }
            StructureKind::Sem => {
                if self.config.use_sem_custom {
                    semantic_structure_customized(tape, store, sp, h, inst.a, inst.e)?
                } else {
                    semantic_structure_plain(tape, store, sp, h)?
                }
            }
            StructureKind::Identity => tape.constant(Tensor::identity(inst.example.len())),
        })
    }

    /// Forward pass for one instance given its sentence's word vectors.
    pub fn forward(&self, tape: &mut Tape, words: Var, inst: &Instance<'_>) -> Result<Forward> {
        self.forward_with(&self.store, tape, words, inst)
    }

    fn forward_with(&self, store: &ParameterStore, tape: &mut Tape, words: Var, inst: &Instance<'_>) -> Result<Forward> {
        let x = embed_tokens(tape, store, &self.encoder, words, inst.a, inst.e)?;
        let h = bilstm_encode(tape, store, &self.encoder.layers, x)?;
        let structures = active_structures(&self.config)
            .into_iter()
            .map(|k| self.structure_node(store, tape, k, inst, h))
            .collect::<Result<Vec<_>>>()?;
        let h_prime = encode_with_gtn(
            tape,
            store,
            h,
            &structures,
            self.gtn.as_ref(),
            &self.gcn,
            propagation(&self.config),
        )?;
        let mut r = anchor_pool(tape, h_prime, inst.a, inst.e)?;
        if self.config.lstm_in_r {
            let lstm = anchor_pool(tape, h, inst.a, inst.e)?;
            r = tape.concat(&[lstm, r], Axis::Cols)?;
        }
        let probs = predict_role(tape, store, &self.head, r)?;
        let summary = summarize(tape, h_prime)?;
        let mi_summary = summarize(
            tape,
            match self.config.mi_source {
                MiSource::H => h,
                MiSource::X => x,
                MiSource::E => words,
            },
        )?;
        Ok(Forward {
            probs,
            summary,
            mi_summary,
        })
    }

    /// Mean over the batch of `L_pred + α_disc · L_disc`, on one tape so the
    /// negative summaries stay differentiable.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        batch: &[Instance<'_>],
        pre: Option<&PrecomputedVectors>,
    ) -> Result<BatchLoss> {
        self.batch_loss_with(&self.store, tape, batch, pre)
    }

    /// [`Model::batch_loss`] evaluated at the parameter values in `store`,
    /// which must share this model's layout.
    pub fn batch_loss_with(
        &self,
        store: &ParameterStore,
        tape: &mut Tape,
        batch: &[Instance<'_>],
        pre: Option<&PrecomputedVectors>,
    ) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::Train("empty batch".into()));
        }
        let mut words: HashMap<*const Example, Var> = HashMap::new();
        let mut outs = Vec::with_capacity(batch.len());
        let mut pred_terms = Vec::with_capacity(batch.len());
        for inst in batch {
            let key = inst.example as *const Example;
            let w = match words.get(&key) {
                Some(&w) => w,
                None => {
                    let w = self.words_with(store, tape, inst.example, pre)?;
                    words.insert(key, w);
                    w
                }
            };
            let f = self.forward_with(store, tape, w, inst)?;
            pred_terms.push(loss_pred(tape, f.probs, inst.gold_role)?);
            outs.push(f);
        }
        let scale = 1.0 / batch.len() as f64;
        let pred_sum = tape.concat(&pred_terms, Axis::Cols)?;
        let pred_sum = tape.sum(pred_sum);
        let l_pred = tape.scale(pred_sum, scale);
        let pred = tape.value(l_pred).item();

        let Some(disc) = self.disc.as_ref() else {
            return Ok(BatchLoss {
                loss: l_pred,
                pred,
                disc: 0.0,
                ib_terms: 0,
            });
        };
        let ids: Vec<&str> = batch.iter().map(|i| i.example.sentence_id.as_str()).collect();
        let partners = negative_pairing(&ids);
        let mut disc_terms = Vec::new();
        for (b, partner) in partners.iter().enumerate() {
            if let Some(p) = *partner {
                disc_terms.push(ib_loss(
                    tape,
                    store,
                    disc,
                    outs[b].summary,
                    outs[b].mi_summary,
                    outs[p].mi_summary,
                )?);
            }
        }
        let ib_terms = disc_terms.len();
        let l_disc = if disc_terms.is_empty() {
            tape.constant(Tensor::scalar(0.0))
        } else {
            let s = tape.concat(&disc_terms, Axis::Cols)?;
            let s = tape.sum(s);
            tape.scale(s, scale)
        };
        let disc_value = tape.value(l_disc).item();
        let loss = total_loss(tape, l_pred, l_disc, self.config.alpha_disc)?;
        Ok(BatchLoss {
            loss,
            pred,
            disc: disc_value,
            ib_terms,
        })
    }

    /// Role distribution for one instance.
    pub fn predict_proba(&self, inst: &Instance<'_>, pre: Option<&PrecomputedVectors>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let w = self.words(&mut tape, inst.example, pre)?;
        let f = self.forward(&mut tape, w, inst)?;
        tape.check_finite()?;
        Ok(tape.value(f.probs).data().to_vec())
    }

    pub fn predict(&self, inst: &Instance<'_>, pre: Option<&PrecomputedVectors>) -> Result<usize> {
        Ok(argmax(&self.predict_proba(inst, pre)?))
    }

    /// All five structures for an instance, whatever the ablation switches.
    pub fn structures(&self, inst: &Instance<'_>, pre: Option<&PrecomputedVectors>) -> Result<StructureSet> {
        let mut tape = Tape::new();
        let w = self.words(&mut tape, inst.example, pre)?;
        let x = embed_tokens(&mut tape, &self.store, &self.encoder, w, inst.a, inst.e)?;
        let h = bilstm_encode(&mut tape, &self.store, &self.encoder.layers, x)?;
        let mut get = |kind| -> Result<Tensor> {
            let v = self.structure_node(&self.store, &mut tape, kind, inst, h)?;
            Ok(tape.value(v).clone())
        };
        let a_d = get(StructureKind::Dep)?;
        let a_a = get(StructureKind::Arg)?;
        let a_e = get(StructureKind::Trig)?;
        let a_s = get(StructureKind::Sem)?;
        Ok(build_structure_set(a_d, a_a, a_e, a_s, inst.example.len())?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_json: self.config.to_json(),
            roles: self.roles.names().to_vec(),
            vocab: self.table.as_ref().map(|t| t.tokens().to_vec()).unwrap_or_default(),
            store: self.store.clone(),
        }
    }

    /// Rebuilds the model from a checkpoint; parameter values are taken
    /// verbatim from the checkpoint.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let config = TrainConfig::from_json(&ckpt.config_json)?;
        let roles = RoleInventory::from_names(ckpt.roles.clone()).map_err(Error::Config)?;
        let words = match ckpt.store.id("emb.word") {
            Some(id) => WordInit::Table(EmbeddingTable::from_parts(ckpt.vocab.clone(), ckpt.store.value(id).clone())?),
            None => {
                let w = ckpt
                    .store
                    .id("lstm.l1.fwd.W")
                    .ok_or_else(|| Error::Config("checkpoint lacks lstm.l1.fwd.W".into()))?;
                let rows = ckpt.store.value(w).rows();
                let dim = rows
                    .checked_sub(2 * config.d_dist)
                    .ok_or_else(|| Error::Config("inconsistent encoder input width".into()))?;
                WordInit::Precomputed { dim }
            }
        };
        let mut model = Self::new(config, roles, words)?;
        if model.store.len() != ckpt.store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, config implies {}",
                ckpt.store.len(),
                model.store.len()
            )));
        }
        for id in model.store.ids() {
            let name = model.store.name(id);
            let theirs = ckpt.store.id(name).filter(|t| t.index() == id.index());
            let Some(t) = theirs else {
                return Err(Error::Config(format!("checkpoint parameter order differs at {name}")));
            };
            if ckpt.store.value(t).shape() != model.store.value(id).shape()
                || ckpt.store.is_frozen(t) != model.store.is_frozen(id)
            {
                return Err(Error::Config(format!("checkpoint parameter {name} does not match the config")));
            }
        }
        model.store = ckpt.store;
        Ok(model)
    }
}
