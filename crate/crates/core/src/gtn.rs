//! Graph transformer channels over the structure set, GCN propagation and
//! the role classification head.

use rand::Rng;

use crate::numeric::{Axis, NumericError, ParamId, ParameterStore, Tape, Tensor, Var};

/// Denominator guard for row normalization in the GCN layer.
pub const GCN_EPS: f64 = 1e-8;
/// Probability floor inside the log-likelihood.
pub const PROB_FLOOR: f64 = 1e-12;

/// `α` with shape `C × M × S`; row `i·M + j` of the matrix view weights the
/// structures for intermediate `j` of channel `i`.
#[derive(Clone, Copy, Debug)]
pub struct GtnWeights {
    pub alpha: ParamId,
    pub channels: usize,
    pub intermediates: usize,
    pub structures: usize,
}

impl GtnWeights {
    /// Small random init so channels start out different.
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        channels: usize,
        intermediates: usize,
        structures: usize,
    ) -> Result<Self, NumericError> {
        let alpha = store.insert(
            "gtn.alpha",
            Tensor::normal(rng, &[channels, intermediates, structures], 0.1),
            false,
        )?;
        Ok(Self {
            alpha,
            channels,
            intermediates,
            structures,
        })
    }

    /// Per-channel lists of `α` row nodes.
    pub fn rows(&self, tape: &mut Tape, store: &ParameterStore) -> Result<Vec<Vec<Var>>, NumericError> {
        let alpha = tape.param(store, self.alpha);
        let flat = tape.reshape(alpha, &[self.channels * self.intermediates, self.structures])?;
        (0..self.channels)
            .map(|i| {
                (0..self.intermediates)
                    .map(|j| {
                        let r = i * self.intermediates + j;
                        tape.slice(flat, Axis::Rows, r, r + 1)
                    })
                    .collect()
            })
            .collect()
    }
}

/// `G` GCN weight matrices, shared by every channel.
#[derive(Clone, Debug)]
pub struct GcnStack {
    pub layers: Vec<ParamId>,
}

impl GcnStack {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        input: usize,
        hidden: usize,
        layers: usize,
    ) -> Result<Self, NumericError> {
        let mut ids = Vec::with_capacity(layers);
        let mut d_in = input;
        for t in 0..layers {
            ids.push(store.insert(format!("gcn.U{}", t + 1), Tensor::glorot(rng, &[d_in, hidden]), false)?);
            d_in = hidden;
        }
        Ok(Self { layers: ids })
    }
}

/// Structures stacked as an `S × N²` matrix so a weighted sum is one product.
#[derive(Clone, Copy, Debug)]
pub struct StructureStack {
    stacked: Var,
    n: usize,
    count: usize,
}

impl StructureStack {
    pub fn new(tape: &mut Tape, structures: &[Var]) -> Result<Self, NumericError> {
        let first = *structures.first().ok_or(NumericError::Empty { op: "structure stack" })?;
        let n = tape.value(first).rows();
        let flat = structures
            .iter()
            .map(|&s| tape.reshape(s, &[1, n * n]))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = tape.concat(&flat, Axis::Rows)?;
        Ok(Self {
            stacked,
            n,
            count: structures.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// `Q = Σ_v softmax(α_row)_v · A_v`.
pub fn gtn_intermediate(tape: &mut Tape, stack: &StructureStack, alpha_row: Var) -> Result<Var, NumericError> {
    let w = tape.softmax(alpha_row, Axis::Cols);
    let q = tape.matmul(w, stack.stacked)?;
    tape.reshape(q, &[stack.n, stack.n])
}

/// Left-to-right product of the channel's intermediates.
pub fn gtn_channel(tape: &mut Tape, stack: &StructureStack, alpha_rows: &[Var]) -> Result<Var, NumericError> {
    let mut out: Option<Var> = None;
    for &row in alpha_rows {
        let q = gtn_intermediate(tape, stack, row)?;
        out = Some(match out {
            None => q,
            Some(acc) => tape.matmul(acc, q)?,
        });
    }
    out.ok_or(NumericError::Empty { op: "gtn_channel" })
}

/// `ReLU(rownorm(Q) · H · U)` with the row sum floored at [`GCN_EPS`].
pub fn gcn_layer(tape: &mut Tape, q: Var, h: Var, u: Var) -> Result<Var, NumericError> {
    let qn = tape.row_normalize(q, GCN_EPS);
    let agg = tape.matmul(qn, h)?;
    let lin = tape.matmul(agg, u)?;
    Ok(tape.relu(lin))
}

fn gcn_stack(tape: &mut Tape, q: Var, h: Var, us: &[Var]) -> Result<Var, NumericError> {
    let mut cur = h;
    for &u in us {
        cur = gcn_layer(tape, q, cur, u)?;
    }
    Ok(cur)
}

/// How the structures reach the GCN.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagation {
    /// One GCN stack per GTN channel.
    Channels,
    /// One GCN stack per intermediate, without the channel product.
    Intermediates,
    /// One GCN stack per initial structure; no GTN at all.
    Structures,
}

/// Final token vectors `h'`: GCN outputs concatenated along the feature axis.
pub fn encode_with_gtn(
    tape: &mut Tape,
    store: &ParameterStore,
    h: Var,
    structures: &[Var],
    gtn: Option<&GtnWeights>,
    gcn: &GcnStack,
    mode: Propagation,
) -> Result<Var, NumericError> {
    let us: Vec<Var> = gcn.layers.iter().map(|&id| tape.param(store, id)).collect();
    let mut blocks = Vec::new();
    match mode {
        Propagation::Structures => {
            for &s in structures {
                blocks.push(gcn_stack(tape, s, h, &us)?);
            }
        }
        Propagation::Channels | Propagation::Intermediates => {
            let gtn = gtn.ok_or(NumericError::Empty { op: "gtn weights" })?;
            let stack = StructureStack::new(tape, structures)?;
            for rows in gtn.rows(tape, store)? {
                if mode == Propagation::Channels {
                    let q = gtn_channel(tape, &stack, &rows)?;
                    blocks.push(gcn_stack(tape, q, h, &us)?);
                } else {
                    for row in rows {
                        let q = gtn_intermediate(tape, &stack, row)?;
                        blocks.push(gcn_stack(tape, q, h, &us)?);
                    }
                }
            }
        }
    }
    tape.concat(&blocks, Axis::Cols)
}

/// `[v_a, v_e, maxpool(v)]` for a token sequence `v`.
pub fn anchor_pool(tape: &mut Tape, seq: Var, a: usize, e: usize) -> Result<Var, NumericError> {
    let va = tape.slice(seq, Axis::Rows, a, a + 1)?;
    let ve = tape.slice(seq, Axis::Rows, e, e + 1)?;
    let pooled = tape.max_pool(seq)?;
    tape.concat(&[va, ve, pooled], Axis::Cols)
}

/// Two-layer feed-forward classifier with a softmax output.
#[derive(Clone, Copy, Debug)]
pub struct RoleHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl RoleHead {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        input: usize,
        hidden: usize,
        roles: usize,
    ) -> Result<Self, NumericError> {
        Ok(Self {
            w1: store.insert("head.W1", Tensor::glorot(rng, &[input, hidden]), false)?,
            b1: store.insert("head.b1", Tensor::zeros(&[1, hidden]), false)?,
            w2: store.insert("head.W2", Tensor::glorot(rng, &[hidden, roles]), false)?,
            b2: store.insert("head.b2", Tensor::zeros(&[1, roles]), false)?,
        })
    }
}

/// Role distribution (1 × |roles|) from a representation row `r`.
pub fn predict_role(tape: &mut Tape, store: &ParameterStore, head: &RoleHead, r: Var) -> Result<Var, NumericError> {
    let w1 = tape.param(store, head.w1);
    let b1 = tape.param(store, head.b1);
    let w2 = tape.param(store, head.w2);
    let b2 = tape.param(store, head.b2);
    let hid = tape.matmul(r, w1)?;
    let hid = tape.add_row(hid, b1)?;
    let hid = tape.relu(hid);
    let logits = tape.matmul(hid, w2)?;
    let logits = tape.add_row(logits, b2)?;
    Ok(tape.softmax(logits, Axis::Cols))
}

/// `−log max(P(gold), 1e-12)`.
pub fn loss_pred(tape: &mut Tape, probs: Var, gold: usize) -> Result<Var, NumericError> {
    let n = tape.value(probs).cols();
    if gold >= n {
        return Err(NumericError::Index { op: "loss_pred", index: gold, len: n });
    }
    let p = tape.slice(probs, Axis::Cols, gold, gold + 1)?;
    let p = tape.clamp_min(p, PROB_FLOOR);
    let lp = tape.log(p);
    Ok(tape.scale(lp, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn consts(tape: &mut Tape, ts: &[Tensor]) -> Vec<Var> {
        ts.iter().map(|t| tape.constant(t.clone())).collect()
    }

    fn hand_structures() -> Vec<Tensor> {
        vec![
            Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            Tensor::from_rows(&[vec![0.2, 0.4], vec![0.6, 0.8]]),
            Tensor::from_rows(&[vec![0.5, 0.5], vec![0.1, 0.9]]),
            Tensor::from_rows(&[vec![0.3, 0.7], vec![0.4, 0.6]]),
            Tensor::identity(2),
        ]
    }

    #[test]
    fn zero_alpha_gives_plain_average() {
        let mut tape = Tape::new();
        let s = consts(&mut tape, &hand_structures());
        let stack = StructureStack::new(&mut tape, &s).unwrap();
        let row = tape.constant(Tensor::zeros(&[1, 5]));
        let q = gtn_intermediate(&mut tape, &stack, row).unwrap();
        // (0+.2+.5+.3+1)/5, (1+.4+.5+.7+0)/5, (1+.6+.1+.4+0)/5, (0+.8+.9+.6+1)/5
        let want = [0.4, 0.52, 0.42, 0.66];
        for (g, w) in tape.value(q).data().iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_alpha_selects_one_structure() {
        let hs = hand_structures();
        for v in 0..5 {
            let mut tape = Tape::new();
            let s = consts(&mut tape, &hs);
            let stack = StructureStack::new(&mut tape, &s).unwrap();
            let mut a = vec![-20.0; 5];
            a[v] = 20.0;
            let row = tape.constant(Tensor::matrix(1, 5, a));
            let q = gtn_intermediate(&mut tape, &stack, row).unwrap();
            assert!(tape.value(q).max_abs_diff(&hs[v]) < 1e-8);
        }
    }

    #[test]
    fn chain_two_hop_counts() {
        let a = Tensor::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        let mut tape = Tape::new();
        let s = consts(&mut tape, &[a, Tensor::identity(3)]);
        let stack = StructureStack::new(&mut tape, &s).unwrap();
        let row = tape.constant(Tensor::matrix(1, 2, vec![20.0, -20.0]));
        let q = gtn_channel(&mut tape, &stack, &[row, row]).unwrap();
        let want = Tensor::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 1.0]]);
        assert!(tape.value(q).max_abs_diff(&want) < 1e-8);

        let mut tape = Tape::new();
        let s = consts(&mut tape, &[Tensor::zeros(&[3, 3]), Tensor::identity(3)]);
        let stack = StructureStack::new(&mut tape, &s).unwrap();
        let id_row = tape.constant(Tensor::matrix(1, 2, vec![-20.0, 20.0]));
        let q = gtn_channel(&mut tape, &stack, &[id_row; 3]).unwrap();
        assert!(tape.value(q).max_abs_diff(&Tensor::identity(3)) < 1e-8);
    }

    fn naive_gcn(q: &Tensor, h: &Tensor, u: &Tensor) -> Tensor {
        let (n, d, g) = (q.rows(), h.cols(), u.cols());
        let mut out = Tensor::zeros(&[n, g]);
        for i in 0..n {
            let mut denom = 0.0;
            for j in 0..n {
                denom += q.get(i, j);
            }
            let denom = f64::max(denom, GCN_EPS);
            let mut agg = vec![0.0; d];
            for j in 0..n {
                for k in 0..d {
                    agg[k] += q.get(i, j) * h.get(j, k) / denom;
                }
            }
            for c in 0..g {
                let mut s = 0.0;
                for k in 0..d {
                    s += agg[k] * u.get(k, c);
                }
                out.set(i, c, s.max(0.0));
            }
        }
        out
    }

    #[test]
    fn gcn_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let q = Tensor::uniform(&mut rng, &[4, 4], 0.0, 1.0);
            let h = Tensor::normal(&mut rng, &[4, 3], 1.0);
            let u = Tensor::normal(&mut rng, &[3, 5], 1.0);
            let mut tape = Tape::new();
            let v = consts(&mut tape, &[q.clone(), h.clone(), u.clone()]);
            let out = gcn_layer(&mut tape, v[0], v[1], v[2]).unwrap();
            assert!(tape.value(out).max_abs_diff(&naive_gcn(&q, &h, &u)) < 1e-12);
        }
    }

    #[test]
    fn gcn_identity_and_averaging() {
        let h = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.5]]);
        let mut tape = Tape::new();
        let v = consts(&mut tape, &[Tensor::identity(2), h.clone(), Tensor::identity(2)]);
        let out = gcn_layer(&mut tape, v[0], v[1], v[2]).unwrap();
        assert_eq!(tape.value(out), &h);

        let q = Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
        let h = Tensor::from_rows(&[vec![1.0, -4.0], vec![3.0, 2.0]]);
        let mut tape = Tape::new();
        let v = consts(&mut tape, &[q, h, Tensor::identity(2)]);
        let out = gcn_layer(&mut tape, v[0], v[1], v[2]).unwrap();
        assert_eq!(tape.value(out).row(0), &[2.0, 0.0]);
        assert_eq!(tape.value(out).row(1), &[0.0, 0.0]);
    }

    fn encode(mode: Propagation, channels: usize, perm: Option<&[usize]>) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParameterStore::new();
        let gtn = GtnWeights::init(&mut store, &mut rng, channels, 2, 3).unwrap();
        let gcn = GcnStack::init(&mut store, &mut rng, 4, 6, 2).unwrap();
        if let Some(p) = perm {
            let a = store.value(gtn.alpha).clone();
            let m = 2 * 3;
            let mut data = Vec::new();
            for &c in p {
                data.extend_from_slice(&a.data()[c * m..(c + 1) * m]);
            }
            store.set_value(gtn.alpha, Tensor::new(vec![channels, 2, 3], data).unwrap()).unwrap();
        }
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::normal(&mut ChaCha8Rng::seed_from_u64(1), &[5, 4], 1.0));
        let s: Vec<Var> = (0..3)
            .map(|k| tape.constant(Tensor::uniform(&mut ChaCha8Rng::seed_from_u64(20 + k), &[5, 5], 0.0, 1.0)))
            .collect();
        let out = encode_with_gtn(&mut tape, &store, h, &s, Some(&gtn), &gcn, mode).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn encode_widths_per_mode() {
        assert_eq!(encode(Propagation::Channels, 3, None).shape(), &[5, 18]);
        assert_eq!(encode(Propagation::Intermediates, 3, None).shape(), &[5, 36]);
        assert_eq!(encode(Propagation::Structures, 3, None).shape(), &[5, 18]);
        assert_eq!(encode(Propagation::Channels, 1, None).shape(), &[5, 6]);
    }

    #[test]
    fn channel_permutation_permutes_blocks() {
        let base = encode(Propagation::Channels, 3, None);
        let perm = [2, 0, 1];
        let moved = encode(Propagation::Channels, 3, Some(&perm));
        for i in 0..5 {
            for (k, &c) in perm.iter().enumerate() {
                assert_eq!(&moved.row(i)[k * 6..(k + 1) * 6], &base.row(i)[c * 6..(c + 1) * 6]);
            }
        }
    }

    #[test]
    fn head_distribution_and_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        let head = RoleHead::init(&mut store, &mut rng, 6, 4, 7).unwrap();
        let mut tape = Tape::new();
        let r = tape.constant(Tensor::normal(&mut rng, &[1, 6], 1.0));
        let p = predict_role(&mut tape, &store, &head, r).unwrap();
        assert!((tape.value(p).sum() - 1.0).abs() < 1e-9);

        store.set_value(head.w2, Tensor::zeros(&[4, 7])).unwrap();
        let mut tape = Tape::new();
        let r = tape.constant(Tensor::normal(&mut rng, &[1, 6], 1.0));
        let p = predict_role(&mut tape, &store, &head, r).unwrap();
        assert!(tape.value(p).data().iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
        let l = loss_pred(&mut tape, p, 3).unwrap();
        assert!((tape.value(l).item() - 7f64.ln()).abs() < 1e-12);
        assert!(loss_pred(&mut tape, p, 7).is_err());
    }

    #[test]
    fn loss_matches_cross_entropy_and_floors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let raw = Tensor::uniform(&mut rng, &[1, 5], 0.01, 1.0);
            let z = raw.sum();
            let p = raw.map(|x| x / z);
            let gold = rng.gen_range(0..5);
            let mut tape = Tape::new();
            let v = tape.constant(p.clone());
            let l = loss_pred(&mut tape, v, gold).unwrap();
            assert!((tape.value(l).item() + p.get(0, gold).ln()).abs() < 1e-12);
        }
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]));
        let l0 = loss_pred(&mut tape, v, 0).unwrap();
        let l1 = loss_pred(&mut tape, v, 1).unwrap();
        assert_eq!(tape.value(l0).item(), 0.0);
        assert!((tape.value(l1).item() - 1e-12f64.ln().abs()).abs() < 1e-9);
    }
}
