//! The four initial sentence structures: dependency adjacency, the two
//! anchor-specific syntactic structures learned from tree path lengths, and
//! the key/query semantic structure.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_heads, TreeError};
use crate::numeric::{Axis, NumericError, ParamId, ParameterStore, Tape, Tensor, Var};

/// Members of the structure set, in their canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    #[serde(rename = "A_d")]
    Dep,
    #[serde(rename = "A_a")]
    Arg,
    #[serde(rename = "A_e")]
    Trig,
    #[serde(rename = "A_s")]
    Sem,
    #[serde(rename = "I")]
    Identity,
}

impl StructureKind {
    pub const ALL: [StructureKind; 5] = [Self::Dep, Self::Arg, Self::Trig, Self::Sem, Self::Identity];

    pub fn label(self) -> &'static str {
        match self {
            Self::Dep => "A_d",
            Self::Arg => "A_a",
            Self::Trig => "A_e",
            Self::Sem => "A_s",
            Self::Identity => "I",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StructureError {
    #[error("{which} is {got:?}, expected {n}x{n}")]
    Shape {
        which: StructureKind,
        got: Vec<usize>,
        n: usize,
    },
    #[error("{which}: {message}")]
    Invariant {
        which: StructureKind,
        message: String,
    },
}

/// Binary symmetric adjacency of the (undirected) dependency tree.
pub fn dep_adjacency(heads: &[i64]) -> Result<Tensor, TreeError> {
    validate_heads(heads)?;
    let n = heads.len();
    let mut a = Tensor::zeros(&[n, n]);
    for (i, &h) in heads.iter().enumerate() {
        if h >= 0 {
            a.set(i, h as usize, 1.0);
            a.set(h as usize, i, 1.0);
        }
    }
    Ok(a)
}

/// Two-layer scorer mapping a pair feature vector to a scalar.
#[derive(Clone, Copy, Debug)]
pub struct PairScorer {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl PairScorer {
    fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self, NumericError> {
        Ok(Self {
            w1: store.insert(format!("{prefix}.W1"), Tensor::glorot(rng, &[input, hidden]), false)?,
            b1: store.insert(format!("{prefix}.b1"), Tensor::zeros(&[1, hidden]), false)?,
            w2: store.insert(format!("{prefix}.W2"), Tensor::glorot(rng, &[hidden, 1]), false)?,
            b2: store.insert(format!("{prefix}.b2"), Tensor::zeros(&[1, 1]), false)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct StructureParams {
    /// Shared path-length table `D`, `(len_max + 1) × d_len`.
    pub length_table: ParamId,
    pub len_max: usize,
    pub arg_scorer: PairScorer,
    pub trig_scorer: PairScorer,
    pub u_k: ParamId,
    pub u_q: ParamId,
    pub v_k: ParamId,
    pub v_q: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct StructureDims {
    pub len_dim: usize,
    pub len_max: usize,
    pub ff_hidden: usize,
    pub hidden: usize,
    pub key_dim: usize,
}

impl StructureParams {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        dims: &StructureDims,
    ) -> Result<Self, NumericError> {
        let length_table = store.insert(
            "struct.len_table",
            Tensor::normal(rng, &[dims.len_max + 1, dims.len_dim], 0.1),
            false,
        )?;
        let arg_scorer = PairScorer::init(store, rng, "struct.ff_a", 5 * dims.len_dim, dims.ff_hidden)?;
        let trig_scorer = PairScorer::init(store, rng, "struct.ff_e", 5 * dims.len_dim, dims.ff_hidden)?;
        let (h, k) = (dims.hidden, dims.key_dim);
        Ok(Self {
            length_table,
            len_max: dims.len_max,
            arg_scorer,
            trig_scorer,
            u_k: store.insert("struct.U_k", Tensor::glorot(rng, &[h, k]), false)?,
            u_q: store.insert("struct.U_q", Tensor::glorot(rng, &[h, k]), false)?,
            v_k: store.insert("struct.V_k", Tensor::glorot(rng, &[2 * h, k]), false)?,
            v_q: store.insert("struct.V_q", Tensor::glorot(rng, &[2 * h, k]), false)?,
        })
    }
}

/// `s_ij = sigmoid(FF([d_i, d_j, d_i ⊙ d_j, |d_i − d_j|, d_i + d_j]))` with
/// `d_i = D[min(len_i, len_max)]`.
///
/// Path lengths take few distinct values, so the scorer runs once per
/// distinct (length, length) pair and the N×N matrix is gathered from that.
pub fn anchor_syntax_structure(
    tape: &mut Tape,
    store: &ParameterStore,
    length_table: ParamId,
    len_max: usize,
    scorer: &PairScorer,
    lengths: &[usize],
) -> Result<Var, NumericError> {
    let n = lengths.len();
    let clipped: Vec<usize> = lengths.iter().map(|&d| d.min(len_max)).collect();
    let mut distinct = clipped.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let k = distinct.len();
    let pos = |d: usize| distinct.binary_search(&d).expect("present");

    let table = tape.param(store, length_table);
    let dk = tape.gather(table, &distinct)?;
    let left_idx: Vec<usize> = (0..k).flat_map(|p| std::iter::repeat_n(p, k)).collect();
    let right_idx: Vec<usize> = (0..k).flat_map(|_| 0..k).collect();
    let left = tape.gather(dk, &left_idx)?;
    let right = tape.gather(dk, &right_idx)?;
    let prod = tape.mul(left, right)?;
    let diff = tape.sub(left, right)?;
    let absdiff = tape.abs(diff);
    let sum = tape.add(left, right)?;
    let feats = tape.concat(&[left, right, prod, absdiff, sum], Axis::Cols)?;

    let w1 = tape.param(store, scorer.w1);
    let b1 = tape.param(store, scorer.b1);
    let w2 = tape.param(store, scorer.w2);
    let b2 = tape.param(store, scorer.b2);
    let hidden = tape.matmul(feats, w1)?;
    let hidden = tape.add_row(hidden, b1)?;
    let hidden = tape.relu(hidden);
    let logit = tape.matmul(hidden, w2)?;
    let logit = tape.add_row(logit, b2)?;
    let scores = tape.sigmoid(logit);

    let cell_idx: Vec<usize> = (0..n)
        .flat_map(|i| {
            let pi = pos(clipped[i]);
            clipped.iter().map(move |&dj| (pi, dj))
        })
        .map(|(pi, dj)| pi * k + pos(dj))
        .collect();
    let cells = tape.gather(scores, &cell_idx)?;
    tape.reshape(cells, &[n, n])
}

fn keys_queries(
    tape: &mut Tape,
    store: &ParameterStore,
    params: &StructureParams,
    h: Var,
) -> Result<(Var, Var), NumericError> {
    let uk = tape.param(store, params.u_k);
    let uq = tape.param(store, params.u_q);
    Ok((tape.matmul(h, uk)?, tape.matmul(h, uq)?))
}

fn row_softmax_scores(tape: &mut Tape, k: Var, q: Var) -> Result<Var, NumericError> {
    let qt = tape.transpose(q);
    let scores = tape.matmul(k, qt)?;
    Ok(tape.softmax(scores, Axis::Cols))
}

/// `s_ij = softmax_j(k_i · q_j)` with `k = H U_k`, `q = H U_q`.
pub fn semantic_structure_plain(
    tape: &mut Tape,
    store: &ParameterStore,
    params: &StructureParams,
    h: Var,
) -> Result<Var, NumericError> {
    let (k, q) = keys_queries(tape, store, params, h)?;
    row_softmax_scores(tape, k, q)
}

/// Keys and queries gated by `σ(V [h_a, h_e])` before the row softmax.
pub fn semantic_structure_customized(
    tape: &mut Tape,
    store: &ParameterStore,
    params: &StructureParams,
    h: Var,
    a: usize,
    e: usize,
) -> Result<Var, NumericError> {
    let (k, q) = keys_queries(tape, store, params, h)?;
    let ha = tape.slice(h, Axis::Rows, a, a + 1)?;
    let he = tape.slice(h, Axis::Rows, e, e + 1)?;
    let hae = tape.concat(&[ha, he], Axis::Cols)?;
    let vk = tape.param(store, params.v_k);
    let vq = tape.param(store, params.v_q);
    let ck = tape.matmul(hae, vk)?;
    let ck = tape.sigmoid(ck);
    let cq = tape.matmul(hae, vq)?;
    let cq = tape.sigmoid(cq);
    let k = tape.mul_row(k, ck)?;
    let q = tape.mul_row(q, cq)?;
    row_softmax_scores(tape, k, q)
}

/// Concrete values of the five structures for one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureSet {
    pub a_d: Tensor,
    pub a_a: Tensor,
    pub a_e: Tensor,
    pub a_s: Tensor,
    pub identity: Tensor,
}

/// Appends the identity and checks every structure invariant.
pub fn build_structure_set(
    a_d: Tensor,
    a_a: Tensor,
    a_e: Tensor,
    a_s: Tensor,
    n: usize,
) -> Result<StructureSet, StructureError> {
    for (which, t) in [
        (StructureKind::Dep, &a_d),
        (StructureKind::Arg, &a_a),
        (StructureKind::Trig, &a_e),
        (StructureKind::Sem, &a_s),
    ] {
        if t.shape() != [n, n] {
            return Err(StructureError::Shape {
                which,
                got: t.shape().to_vec(),
                n,
            });
        }
    }
    let bad = |which, message: String| Err(StructureError::Invariant { which, message });
    for i in 0..n {
        if a_d.get(i, i) != 0.0 {
            return bad(StructureKind::Dep, format!("non-zero diagonal at {i}"));
        }
        for j in 0..n {
            let v = a_d.get(i, j);
            if v != 0.0 && v != 1.0 {
                return bad(StructureKind::Dep, format!("non-binary entry {v} at ({i},{j})"));
            }
            if v != a_d.get(j, i) {
                return bad(StructureKind::Dep, format!("asymmetric at ({i},{j})"));
            }
        }
    }
    for (which, t) in [(StructureKind::Arg, &a_a), (StructureKind::Trig, &a_e)] {
        if let Some(v) = t.data().iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return bad(which, format!("entry {v} outside (0,1)"));
        }
    }
    for i in 0..n {
        let row = a_s.row(i);
        if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return bad(StructureKind::Sem, format!("negative or non-finite entry in row {i}"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return bad(StructureKind::Sem, format!("row {i} sums to {s}"));
        }
    }
    Ok(StructureSet {
        a_d,
        a_a,
        a_e,
        a_s,
        identity: Tensor::identity(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> StructureDims {
        StructureDims {
            len_dim: 3,
            len_max: 4,
            ff_hidden: 5,
            hidden: 4,
            key_dim: 3,
        }
    }

    fn params(seed: u64) -> (ParameterStore, StructureParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let p = StructureParams::init(&mut store, &mut rng, &dims()).unwrap();
        (store, p)
    }

    fn edge_oracle(heads: &[i64]) -> Vec<Vec<f64>> {
        let n = heads.len();
        let mut m = vec![vec![0.0; n]; n];
        let edges: Vec<(usize, usize)> = heads
            .iter()
            .enumerate()
            .filter_map(|(i, &h)| (h >= 0).then_some((i, h as usize)))
            .collect();
        for i in 0..n {
            for j in 0..n {
                if edges.contains(&(i, j)) || edges.contains(&(j, i)) {
                    m[i][j] = 1.0;
                }
            }
        }
        m
    }

    #[test]
    fn dep_adjacency_cases() {
        assert_eq!(dep_adjacency(&[-1]).unwrap(), Tensor::zeros(&[1, 1]));
        let chain = dep_adjacency(&[1, -1, 1]).unwrap();
        assert_eq!(chain, Tensor::from_rows(&edge_oracle(&[1, -1, 1])));
        assert_eq!(chain.data(), &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        let heads = [-1, 0, 0, 1, 1, 1];
        let a = dep_adjacency(&heads).unwrap();
        let degree = |i: usize| heads.iter().filter(|&&h| h == i as i64).count() + usize::from(heads[i] >= 0);
        for i in 0..heads.len() {
            assert_eq!(a.row(i).iter().sum::<f64>(), degree(i) as f64);
        }
        assert!(dep_adjacency(&[1, 0]).is_err());
    }

    #[test]
    fn syntax_scores_in_unit_interval_and_match_direct_evaluation() {
        let (store, p) = params(2);
        let lengths = [0, 1, 2, 7, 1];
        let mut tape = Tape::new();
        let s = anchor_syntax_structure(&mut tape, &store, p.length_table, p.len_max, &p.arg_scorer, &lengths).unwrap();
        let got = tape.value(s).clone();
        assert_eq!(got.shape(), &[5, 5]);
        assert!(got.data().iter().all(|&v| v > 0.0 && v < 1.0));

        // Direct per-cell evaluation.
        let d = store.value(p.length_table);
        let w1 = store.value(p.arg_scorer.w1);
        let b1 = store.value(p.arg_scorer.b1);
        let w2 = store.value(p.arg_scorer.w2);
        let b2 = store.value(p.arg_scorer.b2);
        for i in 0..5 {
            for j in 0..5 {
                let di = d.row(lengths[i].min(4));
                let dj = d.row(lengths[j].min(4));
                let mut f = Vec::new();
                f.extend_from_slice(di);
                f.extend_from_slice(dj);
                f.extend(di.iter().zip(dj).map(|(x, y)| x * y));
                f.extend(di.iter().zip(dj).map(|(x, y)| (x - y).abs()));
                f.extend(di.iter().zip(dj).map(|(x, y)| x + y));
                let mut out = b2.item();
                for h in 0..w1.cols() {
                    let mut z = b1.get(0, h);
                    for (k, fk) in f.iter().enumerate() {
                        z += fk * w1.get(k, h);
                    }
                    out += z.max(0.0) * w2.get(h, 0);
                }
                let expect = 1.0 / (1.0 + (-out).exp());
                assert!((got.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_scorer_gives_one_half() {
        let (mut store, p) = params(3);
        for id in [p.arg_scorer.w1, p.arg_scorer.b1, p.arg_scorer.w2, p.arg_scorer.b2] {
            let z = Tensor::zeros(store.value(id).shape());
            store.set_value(id, z).unwrap();
        }
        let mut tape = Tape::new();
        let s = anchor_syntax_structure(&mut tape, &store, p.length_table, p.len_max, &p.arg_scorer, &[0, 1, 3]).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn symmetric_when_asymmetric_blocks_are_zeroed() {
        let (mut store, p) = params(4);
        let mut w1 = store.value(p.trig_scorer.w1).clone();
        let d = dims().len_dim;
        for r in 0..2 * d {
            for c in 0..w1.cols() {
                w1.set(r, c, 0.0);
            }
        }
        store.set_value(p.trig_scorer.w1, w1).unwrap();
        let mut tape = Tape::new();
        let s = anchor_syntax_structure(&mut tape, &store, p.length_table, p.len_max, &p.trig_scorer, &[0, 2, 1, 3]).unwrap();
        let v = tape.value(s);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(v.get(i, j), v.get(j, i));
            }
        }
    }

    #[test]
    fn semantic_plain_cases() {
        let (mut store, p) = params(5);
        let mut tape = Tape::new();
        let h1 = tape.constant(Tensor::from_rows(&[vec![0.3, -0.1, 0.2, 0.5]]));
        let s = semantic_structure_plain(&mut tape, &store, &p, h1).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0]);

        let row = vec![0.3, -0.1, 0.2, 0.5];
        let hsame = tape.constant(Tensor::from_rows(&[row.clone(), row.clone(), row]));
        let s = semantic_structure_plain(&mut tape, &store, &p, hsame).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        // k_1·q_1 = 1, k_1·q_2 = 0 with U_k = U_q = identity-like projections.
        let mut uk = Tensor::zeros(&[4, 3]);
        uk.set(0, 0, 1.0);
        store.set_value(p.u_k, uk.clone()).unwrap();
        store.set_value(p.u_q, uk).unwrap();
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]));
        let s = semantic_structure_plain(&mut tape, &store, &p, h).unwrap();
        let e = std::f64::consts::E;
        let r = tape.value(s).row(0);
        assert!((r[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((r[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((r[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn zero_control_weights_scale_scores_by_quarter() {
        let (mut store, p) = params(6);
        for id in [p.v_k, p.v_q] {
            let z = Tensor::zeros(store.value(id).shape());
            store.set_value(id, z).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hval = Tensor::normal(&mut rng, &[5, 4], 1.0);
        let mut tape = Tape::new();
        let h = tape.constant(hval.clone());
        let custom = semantic_structure_customized(&mut tape, &store, &p, h, 1, 3).unwrap();

        // Independent route: plain scores with U_k, U_q halved.
        let mut halved = store.clone();
        for id in [p.u_k, p.u_q] {
            let t = store.value(id).map(|x| 0.5 * x);
            halved.set_value(id, t).unwrap();
        }
        let mut tape2 = Tape::new();
        let h2 = tape2.constant(hval);
        let plain = semantic_structure_plain(&mut tape2, &halved, &p, h2).unwrap();
        assert!(tape.value(custom).max_abs_diff(tape2.value(plain)) < 1e-14);
        for i in 0..5 {
            let s: f64 = tape.value(custom).row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }

        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]));
        let s = semantic_structure_customized(&mut tape, &store, &p, h, 0, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0]);
    }

    #[test]
    fn structure_set_validation() {
        let a_d = dep_adjacency(&[-1, 0]).unwrap();
        let half = Tensor::filled(&[2, 2], 0.5);
        let set = build_structure_set(a_d.clone(), half.clone(), half.clone(), half.clone(), 2).unwrap();
        assert_eq!(set.identity, Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));

        let asym = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(build_structure_set(asym, half.clone(), half.clone(), half.clone(), 2).is_err());
        let not_stochastic = Tensor::filled(&[2, 2], 0.6);
        assert!(build_structure_set(a_d.clone(), half.clone(), half.clone(), not_stochastic, 2).is_err());
        assert!(build_structure_set(a_d, Tensor::filled(&[2, 2], 1.0), half.clone(), half, 2).is_err());

        let heads: Vec<i64> = std::iter::once(-1).chain((0..6).map(|i| i as i64)).collect();
        let n = 7;
        let u = Tensor::filled(&[n, n], 1.0 / n as f64);
        let s = build_structure_set(dep_adjacency(&heads).unwrap(), u.clone(), u.clone(), u, n).unwrap();
        for t in [&s.a_d, &s.a_a, &s.a_e, &s.a_s, &s.identity] {
            assert_eq!(t.shape(), &[7, 7]);
        }
    }
}
