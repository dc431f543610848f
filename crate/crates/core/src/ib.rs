//! Information-bottleneck regularizer: a discriminator scores whether a
//! pooled GTN output and a pooled earlier-layer summary come from the same
//! sentence.

use rand::Rng;

use crate::numeric::{Axis, NumericError, ParamId, ParameterStore, Tape, Tensor, Var};

/// Two-layer feed-forward scorer over `[h', h]` with a scalar output.
#[derive(Clone, Copy, Debug)]
pub struct Discriminator {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Discriminator {
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        input: usize,
        hidden: usize,
    ) -> Result<Self, NumericError> {
        Ok(Self {
            w1: store.insert("disc.W1", Tensor::glorot(rng, &[input, hidden]), false)?,
            b1: store.insert("disc.b1", Tensor::zeros(&[1, hidden]), false)?,
            w2: store.insert("disc.W2", Tensor::glorot(rng, &[hidden, 1]), false)?,
            b2: store.insert("disc.b2", Tensor::zeros(&[1, 1]), false)?,
        })
    }

    /// `D([x, y])` as a 1×1 node.
    pub fn score(&self, tape: &mut Tape, store: &ParameterStore, x: Var, y: Var) -> Result<Var, NumericError> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let xy = tape.concat(&[x, y], Axis::Cols)?;
        let hid = tape.matmul(xy, w1)?;
        let hid = tape.add_row(hid, b1)?;
        let hid = tape.relu(hid);
        let out = tape.matmul(hid, w2)?;
        tape.add_row(out, b2)
    }
}

/// Elementwise max over the token axis.
pub fn summarize(tape: &mut Tape, seq: Var) -> Result<Var, NumericError> {
    tape.max_pool(seq)
}

/// `softplus(1 − D([h', h])) + softplus(D([h', ĥ]))`.
pub fn ib_loss(
    tape: &mut Tape,
    store: &ParameterStore,
    disc: &Discriminator,
    h_prime: Var,
    h_pos: Var,
    h_neg: Var,
) -> Result<Var, NumericError> {
    let pos = disc.score(tape, store, h_prime, h_pos)?;
    let neg = disc.score(tape, store, h_prime, h_neg)?;
    let pos = tape.scale(pos, -1.0);
    let pos = tape.add_scalar(pos, 1.0);
    let a = tape.softplus(pos);
    let b = tape.softplus(neg);
    tape.add(a, b)
}

/// Negative partner for each batch position: `(b + 1) mod B`, or `None` when
/// that partner comes from the same sentence (always the case for `B = 1`).
pub fn negative_pairing<S: PartialEq>(sentences: &[S]) -> Vec<Option<usize>> {
    let b = sentences.len();
    (0..b)
        .map(|i| {
            let p = (i + 1) % b;
            (sentences[p] != sentences[i]).then_some(p)
        })
        .collect()
}

/// `L = L_pred + α_disc · L_disc`.
pub fn total_loss(tape: &mut Tape, l_pred: Var, l_disc: Var, alpha_disc: f64) -> Result<Var, NumericError> {
    let weighted = tape.scale(l_disc, alpha_disc);
    tape.add(l_pred, weighted)
}
