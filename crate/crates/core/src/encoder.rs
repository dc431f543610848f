//! Token vectors (relative-distance embeddings plus frozen pretrained word
//! vectors) and the bidirectional LSTM over them.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::numeric::{Axis, NumericError, ParamId, ParameterStore, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: duplicate token {token:?}")]
    Duplicate { line: usize, token: String },
    #[error("sentence {0:?} has no precomputed vectors")]
    MissingSentence(String),
    #[error("sentence {id:?}: {got} vectors for {expected} tokens")]
    VectorCount { id: String, got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frozen pretrained word vectors. Row 0 is the UNK vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Tensor,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` rows; UNK is set to zeros.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map_or(0, |r| r.1.len());
        if dim == 0 {
            return Err(EmbeddingError::Format {
                line: 1,
                message: "embedding dimension must be positive".into(),
            });
        }
        let mut data = vec![0.0; dim];
        let mut tokens = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        for (k, (tok, vec)) in rows.into_iter().enumerate() {
            if vec.len() != dim {
                return Err(EmbeddingError::Format {
                    line: k + 2,
                    message: format!("expected {dim} values, found {}", vec.len()),
                });
            }
            if index.insert(tok.clone(), k + 1).is_some() {
                return Err(EmbeddingError::Duplicate { line: k + 2, token: tok });
            }
            tokens.push(tok);
            data.extend(vec);
        }
        let matrix = Tensor::matrix(tokens.len() + 1, dim, data);
        Ok(Self { tokens, index, matrix })
    }

    /// Rebuilds a table from a vocabulary list and a `(V+1)×d` matrix.
    pub fn from_parts(tokens: Vec<String>, matrix: Tensor) -> Result<Self, EmbeddingError> {
        if matrix.rows() != tokens.len() + 1 {
            return Err(EmbeddingError::Format {
                line: 0,
                message: format!("{} tokens for {} matrix rows", tokens.len(), matrix.rows()),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (k, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), k + 1).is_some() {
                return Err(EmbeddingError::Duplicate { line: k + 2, token: t.clone() });
            }
        }
        Ok(Self { tokens, index, matrix })
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (v, d) = match (it.next(), it.next(), it.next()) {
            (Some(Ok(v)), Some(Ok(d)), None) if d > 0 => (v, d),
            _ => {
                return Err(EmbeddingError::Format {
                    line: 1,
                    message: format!("bad header {header:?}, expected \"V d_w\""),
                })
            }
        };
        let mut rows = Vec::with_capacity(v);
        let mut seen = HashMap::new();
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().expect("non-empty line").to_string();
            let vals: Vec<f64> = parts
                .map(|s| {
                    s.parse::<f64>().map_err(|_| EmbeddingError::Format {
                        line: line_no,
                        message: format!("bad float {s:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if vals.len() != d {
                return Err(EmbeddingError::Format {
                    line: line_no,
                    message: format!("expected {d} values, found {}", vals.len()),
                });
            }
            if seen.insert(tok.clone(), line_no).is_some() {
                return Err(EmbeddingError::Duplicate { line: line_no, token: tok });
            }
            rows.push((tok, vals));
        }
        if rows.len() != v {
            return Err(EmbeddingError::Format {
                line: 1,
                message: format!("header declares {v} tokens, file has {}", rows.len()),
            });
        }
        if rows.is_empty() {
            let matrix = Tensor::zeros(&[1, d]);
            return Ok(Self { tokens: Vec::new(), index: HashMap::new(), matrix });
        }
        Self::from_rows(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(BufReader::new(fs::File::open(path)?))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), EmbeddingError> {
        writeln!(w, "{} {}", self.tokens.len(), self.dim())?;
        for (k, tok) in self.tokens.iter().enumerate() {
            write!(w, "{tok}")?;
            for x in self.matrix.row(k + 1) {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Row id for a token; out-of-vocabulary tokens map to the UNK row 0.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }
}

/// Per-sentence word vectors computed elsewhere (e.g. by a contextual
/// encoder), keyed by sentence id. One JSON object per line:
/// `{"id": "...", "vectors": [[f64, ...], ...]}`.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedVectors {
    by_id: HashMap<String, Tensor>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct VectorLine {
    id: String,
    vectors: Vec<Vec<f64>>,
}

impl PrecomputedVectors {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut by_id = HashMap::new();
        let mut dim = 0;
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: VectorLine = serde_json::from_str(&line).map_err(|e| EmbeddingError::Format {
                line: k + 1,
                message: e.to_string(),
            })?;
            let t = Tensor::from_rows(&parsed.vectors);
            if dim == 0 {
                dim = t.cols();
            } else if t.cols() != dim {
                return Err(EmbeddingError::Format {
                    line: k + 1,
                    message: format!("vector width {} differs from {dim}", t.cols()),
                });
            }
            if by_id.insert(parsed.id.clone(), t).is_some() {
                return Err(EmbeddingError::Duplicate { line: k + 1, token: parsed.id });
            }
        }
        Ok(Self { by_id, dim })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(BufReader::new(fs::File::open(path)?))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, example: &Example) -> Result<&Tensor, EmbeddingError> {
        let t = self
            .by_id
            .get(&example.sentence_id)
            .ok_or_else(|| EmbeddingError::MissingSentence(example.sentence_id.clone()))?;
        if t.rows() != example.len() {
            return Err(EmbeddingError::VectorCount {
                id: example.sentence_id.clone(),
                got: t.rows(),
                expected: example.len(),
            });
        }
        Ok(t)
    }
}

/// Row of a `(2K+1)`-row distance table for signed offset `delta`.
pub fn distance_index(delta: i64, clip: usize) -> usize {
    let k = clip as i64;
    (delta.clamp(-k, k) + k) as usize
}

#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl LstmCell {
    fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self, NumericError> {
        Ok(Self {
            w: store.insert(format!("{prefix}.W"), Tensor::glorot(rng, &[input, 4 * hidden]), false)?,
            u: store.insert(format!("{prefix}.U"), Tensor::glorot(rng, &[hidden, 4 * hidden]), false)?,
            b: store.insert(format!("{prefix}.b"), Tensor::zeros(&[1, 4 * hidden]), false)?,
        })
    }

    pub fn hidden(&self, store: &ParameterStore) -> usize {
        store.value(self.u).rows()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmLayer {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    /// Frozen word table (`emb.word`), absent when vectors are precomputed.
    pub word: Option<ParamId>,
    pub dist_cand: ParamId,
    pub dist_trig: ParamId,
    pub dist_clip: usize,
    pub layers: Vec<BiLstmLayer>,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderDims {
    pub word_dim: usize,
    pub dist_dim: usize,
    pub dist_clip: usize,
    /// Concatenated forward+backward width; must be even.
    pub hidden: usize,
    pub layers: usize,
}

impl EncoderParams {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        dims: &EncoderDims,
        table: Option<&EmbeddingTable>,
    ) -> Result<Self, NumericError> {
        assert!(dims.hidden.is_multiple_of(2) && dims.hidden > 0, "hidden width must be even");
        assert!(dims.layers >= 1, "at least one BiLSTM layer");
        let word = match table {
            Some(t) => Some(store.insert("emb.word", t.matrix().clone(), true)?),
            None => None,
        };
        let rows = 2 * dims.dist_clip + 1;
        let dist_cand = store.insert("enc.dist_cand", Tensor::normal(rng, &[rows, dims.dist_dim], 0.1), false)?;
        let dist_trig = store.insert("enc.dist_trig", Tensor::normal(rng, &[rows, dims.dist_dim], 0.1), false)?;
        let half = dims.hidden / 2;
        let mut layers = Vec::with_capacity(dims.layers);
        let mut input = dims.word_dim + 2 * dims.dist_dim;
        for l in 0..dims.layers {
            let fwd = LstmCell::init(store, rng, &format!("lstm.l{}.fwd", l + 1), input, half)?;
            let bwd = LstmCell::init(store, rng, &format!("lstm.l{}.bwd", l + 1), input, half)?;
            layers.push(BiLstmLayer { fwd, bwd });
            input = dims.hidden;
        }
        Ok(Self {
            word,
            dist_cand,
            dist_trig,
            dist_clip: dims.dist_clip,
            layers,
        })
    }
}

/// Where the per-token word vectors come from.
#[derive(Clone, Copy)]
pub enum WordSource<'a> {
    Table(&'a EmbeddingTable),
    Precomputed(&'a PrecomputedVectors),
}

/// Word vectors `E` for a sentence as a constant N×d_w node.
pub fn word_vectors(
    tape: &mut Tape,
    store: &ParameterStore,
    params: &EncoderParams,
    source: WordSource<'_>,
    example: &Example,
) -> Result<Var, crate::Error> {
    match source {
        WordSource::Table(table) => {
            let ids: Vec<usize> = example.tokens.iter().map(|t| table.lookup(t)).collect();
            let param = params.word.ok_or_else(|| {
                crate::Error::Config("word table parameter missing for table word source".into())
            })?;
            let w = tape.param(store, param);
            Ok(tape.gather(w, &ids)?)
        }
        WordSource::Precomputed(pre) => Ok(tape.constant(pre.get(example)?.clone())),
    }
}

/// `x_i = [dist_cand(i − a), dist_trig(i − e), word_i]`.
pub fn embed_tokens(
    tape: &mut Tape,
    store: &ParameterStore,
    params: &EncoderParams,
    words: Var,
    a: usize,
    e: usize,
) -> Result<Var, NumericError> {
    let n = tape.value(words).rows();
    assert!(a < n && e < n, "anchor out of range");
    let cand: Vec<usize> = (0..n)
        .map(|i| distance_index(i as i64 - a as i64, params.dist_clip))
        .collect();
    let trig: Vec<usize> = (0..n)
        .map(|i| distance_index(i as i64 - e as i64, params.dist_clip))
        .collect();
    let dc = tape.param(store, params.dist_cand);
    let dt = tape.param(store, params.dist_trig);
    let dc = tape.gather(dc, &cand)?;
    let dt = tape.gather(dt, &trig)?;
    tape.concat(&[dc, dt, words], Axis::Cols)
}

/// Runs one LSTM direction; returns the N×h state sequence in token order.
fn lstm_direction(
    tape: &mut Tape,
    store: &ParameterStore,
    cell: &LstmCell,
    x: Var,
    reverse: bool,
) -> Result<Var, NumericError> {
    let n = tape.value(x).rows();
    let h = cell.hidden(store);
    let w = tape.param(store, cell.w);
    let u = tape.param(store, cell.u);
    let b = tape.param(store, cell.b);
    let xw = tape.matmul(x, w)?;
    let pre = tape.add_row(xw, b)?;

    let mut states: Vec<Option<Var>> = vec![None; n];
    let mut prev: Option<(Var, Var)> = None;
    let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for t in order {
        let mut gates = tape.slice(pre, Axis::Rows, t, t + 1)?;
        if let Some((h_prev, _)) = prev {
            let rec = tape.matmul(h_prev, u)?;
            gates = tape.add(gates, rec)?;
        }
        let sig = tape.sigmoid(gates);
        let th = tape.tanh(gates);
        let i_gate = tape.slice(sig, Axis::Cols, 0, h)?;
        let f_gate = tape.slice(sig, Axis::Cols, h, 2 * h)?;
        let g_cand = tape.slice(th, Axis::Cols, 2 * h, 3 * h)?;
        let o_gate = tape.slice(sig, Axis::Cols, 3 * h, 4 * h)?;
        let mut c = tape.mul(i_gate, g_cand)?;
        if let Some((_, c_prev)) = prev {
            let keep = tape.mul(f_gate, c_prev)?;
            c = tape.add(keep, c)?;
        }
        let tc = tape.tanh(c);
        let h_t = tape.mul(o_gate, tc)?;
        states[t] = Some(h_t);
        prev = Some((h_t, c));
    }
    let rows: Vec<Var> = states.into_iter().map(|s| s.expect("every step visited")).collect();
    tape.concat(&rows, Axis::Rows)
}

/// Stacked BiLSTM; each layer outputs `[fwd_i, bwd_i]` per token.
pub fn bilstm_encode(
    tape: &mut Tape,
    store: &ParameterStore,
    layers: &[BiLstmLayer],
    x: Var,
) -> Result<Var, NumericError> {
    let mut input = x;
    for layer in layers {
        let f = lstm_direction(tape, store, &layer.fwd, input, false)?;
        let b = lstm_direction(tape, store, &layer.bwd, input, true)?;
        input = tape.concat(&[f, b], Axis::Cols)?;
    }
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plain-loop LSTM used as an oracle. Gate order i, f, g, o.
    fn naive_lstm(x: &[Vec<f64>], w: &Tensor, u: &Tensor, b: &Tensor, reverse: bool) -> Vec<Vec<f64>> {
        let h = u.rows();
        let n = x.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut hs = vec![vec![0.0; h]; n];
        let mut hp = vec![0.0; h];
        let mut cp = vec![0.0; h];
        let steps: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in steps {
            let mut z = vec![0.0; 4 * h];
            for (j, zj) in z.iter_mut().enumerate() {
                let mut s = b.get(0, j);
                for (k, xk) in x[t].iter().enumerate() {
                    s += xk * w.get(k, j);
                }
                for (k, hk) in hp.iter().enumerate() {
                    s += hk * u.get(k, j);
                }
                *zj = s;
            }
            for j in 0..h {
                let i = sig(z[j]);
                let f = sig(z[h + j]);
                let g = z[2 * h + j].tanh();
                let o = sig(z[3 * h + j]);
                cp[j] = f * cp[j] + i * g;
                hp[j] = o * cp[j].tanh();
            }
            hs[t] = hp.clone();
        }
        hs
    }

    fn setup(seed: u64, input: usize, hidden: usize) -> (ParameterStore, BiLstmLayer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let fwd = LstmCell::init(&mut store, &mut rng, "f", input, hidden / 2).unwrap();
        let bwd = LstmCell::init(&mut store, &mut rng, "b", input, hidden / 2).unwrap();
        for id in [fwd.b, bwd.b] {
            let t = Tensor::normal(&mut rng, store.value(id).shape(), 0.3);
            store.set_value(id, t).unwrap();
        }
        (store, BiLstmLayer { fwd, bwd })
    }

    #[test]
    fn bilstm_matches_naive_loop() {
        let (store, layer) = setup(11, 5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::normal(&mut rng, &[4, 5], 1.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let h = bilstm_encode(&mut tape, &store, &[layer], xv).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|i| x.row(i).to_vec()).collect();
        let cell = |c: &LstmCell| (store.value(c.w).clone(), store.value(c.u).clone(), store.value(c.b).clone());
        let (w, u, b) = cell(&layer.fwd);
        let fwd = naive_lstm(&rows, &w, &u, &b, false);
        let (w, u, b) = cell(&layer.bwd);
        let bwd = naive_lstm(&rows, &w, &u, &b, true);
        let expected: Vec<Vec<f64>> = fwd.into_iter().zip(bwd).map(|(mut f, b)| { f.extend(b); f }).collect();
        let got = tape.value(h);
        assert_eq!(got.shape(), &[4, 6]);
        assert!(got.max_abs_diff(&Tensor::from_rows(&expected)) < 1e-12);
    }

    #[test]
    fn single_token_and_zero_weights() {
        let (mut store, layer) = setup(1, 3, 4);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[1, 3], 0.5));
        let h = bilstm_encode(&mut tape, &store, &[layer], x).unwrap();
        assert_eq!(tape.shape(h), &[1, 4]);

        for id in store.ids().collect::<Vec<_>>() {
            let z = Tensor::zeros(store.value(id).shape());
            store.set_value(id, z).unwrap();
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[3, 3]));
        let h = bilstm_encode(&mut tape, &store, &[layer], x).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_swaps_directions() {
        let (store, layer) = setup(5, 3, 8);
        let swapped = BiLstmLayer { fwd: layer.bwd, bwd: layer.fwd };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::normal(&mut rng, &[5, 3], 1.0);
        let rev_rows: Vec<Vec<f64>> = (0..5).rev().map(|i| x.row(i).to_vec()).collect();
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let xr = tape.constant(Tensor::from_rows(&rev_rows));
        let h = bilstm_encode(&mut tape, &store, &[layer], xv).unwrap();
        let hr = bilstm_encode(&mut tape, &store, &[swapped], xr).unwrap();
        let (h, hr) = (tape.value(h), tape.value(hr));
        for i in 0..5 {
            let a = h.row(i);
            let b = hr.row(4 - i);
            assert_eq!(&a[..4], &b[4..]);
            assert_eq!(&a[4..], &b[..4]);
        }
    }

    #[test]
    fn distance_clamping() {
        assert_eq!(distance_index(0, 60), 60);
        assert_eq!(distance_index(600, 60), 120);
        assert_eq!(distance_index(-600, 60), 0);
        assert_eq!(distance_index(61, 60), distance_index(60, 60));
    }

    #[test]
    fn embedding_file_rules() {
        let t = EmbeddingTable::parse("2 3\nhe 1 2 3\ndied 4 5 6\n".as_bytes()).unwrap();
        assert_eq!(t.vocab_size(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.lookup("died"), 2);
        assert_eq!(t.lookup("absent"), 0);
        assert_eq!(t.matrix().row(0), &[0.0, 0.0, 0.0]);
        assert!(matches!(
            EmbeddingTable::parse("2 3\nhe 1 2 3\nhe 4 5 6\n".as_bytes()),
            Err(EmbeddingError::Duplicate { .. })
        ));
        assert!(EmbeddingTable::parse("2 3\nhe 1 2 3\ndied 4 5\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::parse(&buf[..]).unwrap(), t);
    }

    #[test]
    fn embed_shapes_and_center_row() {
        let table = EmbeddingTable::parse("2 4\na 1 1 1 1\nb 2 2 2 2\n".as_bytes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParameterStore::new();
        let dims = EncoderDims { word_dim: 4, dist_dim: 2, dist_clip: 3, hidden: 4, layers: 1 };
        let p = EncoderParams::init(&mut store, &mut rng, &dims, Some(&table)).unwrap();
        let ex = Example {
            sentence_id: "s".into(),
            tokens: vec!["a".into(), "zzz".into(), "b".into()],
            heads: vec![-1, 0, 0],
            entities: vec![],
            events: vec![],
        };
        let mut tape = Tape::new();
        let w = word_vectors(&mut tape, &store, &p, WordSource::Table(&table), &ex).unwrap();
        let x = embed_tokens(&mut tape, &store, &p, w, 1, 2).unwrap();
        let xv = tape.value(x);
        assert_eq!(xv.shape(), &[3, 8]);
        let center = store.value(p.dist_cand).row(3);
        assert_eq!(&xv.row(1)[..2], center);
        assert_eq!(&xv.row(1)[4..], &[0.0; 4]); // UNK
        assert_eq!(&xv.row(2)[4..], &[2.0; 4]);
    }
}
