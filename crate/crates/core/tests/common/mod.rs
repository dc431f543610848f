#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsyngtn::numeric::{grad_check, Axis, NumericError, ParameterStore, Tape, Tensor, Var};
use semsyngtn::TrainConfig;

type Build = fn(&mut Tape, &[Var]) -> Result<Var, NumericError>;

struct Case {
    name: &'static str,
    /// Input shapes from `(m, k, n)`, each ≤ 8.
    shapes: fn(usize, usize, usize) -> Vec<Vec<usize>>,
    /// Inputs must be strictly positive.
    positive: bool,
    build: Build,
}

fn same2(m: usize, _: usize, n: usize) -> Vec<Vec<usize>> {
    vec![vec![m, n], vec![m, n]]
}

fn one(m: usize, _: usize, n: usize) -> Vec<Vec<usize>> {
    vec![vec![m, n]]
}

fn with_row(m: usize, _: usize, n: usize) -> Vec<Vec<usize>> {
    vec![vec![m, n], vec![1, n]]
}

const CASES: &[Case] = &[
    Case { name: "matmul", shapes: |m, k, n| vec![vec![m, k], vec![k, n]], positive: false, build: |t, x| t.matmul(x[0], x[1]) },
    Case { name: "transpose", shapes: one, positive: false, build: |t, x| Ok(t.transpose(x[0])) },
    Case { name: "add", shapes: same2, positive: false, build: |t, x| t.add(x[0], x[1]) },
    Case { name: "sub", shapes: same2, positive: false, build: |t, x| t.sub(x[0], x[1]) },
    Case { name: "mul", shapes: same2, positive: false, build: |t, x| t.mul(x[0], x[1]) },
    Case { name: "add_row", shapes: with_row, positive: false, build: |t, x| t.add_row(x[0], x[1]) },
    Case { name: "mul_row", shapes: with_row, positive: false, build: |t, x| t.mul_row(x[0], x[1]) },
    Case { name: "scale", shapes: one, positive: false, build: |t, x| Ok(t.scale(x[0], -1.7)) },
    Case { name: "add_scalar", shapes: one, positive: false, build: |t, x| Ok(t.add_scalar(x[0], 0.3)) },
    Case { name: "sigmoid", shapes: one, positive: false, build: |t, x| Ok(t.sigmoid(x[0])) },
    Case { name: "tanh", shapes: one, positive: false, build: |t, x| Ok(t.tanh(x[0])) },
    Case { name: "relu", shapes: one, positive: false, build: |t, x| Ok(t.relu(x[0])) },
    Case { name: "exp", shapes: one, positive: false, build: |t, x| Ok(t.exp(x[0])) },
    Case { name: "log", shapes: one, positive: true, build: |t, x| Ok(t.log(x[0])) },
    Case { name: "abs", shapes: one, positive: false, build: |t, x| Ok(t.abs(x[0])) },
    Case { name: "softplus", shapes: one, positive: false, build: |t, x| Ok(t.softplus(x[0])) },
    Case { name: "clamp_min", shapes: one, positive: false, build: |t, x| Ok(t.clamp_min(x[0], 0.05)) },
    Case { name: "softmax_cols", shapes: one, positive: false, build: |t, x| Ok(t.softmax(x[0], Axis::Cols)) },
    Case { name: "softmax_rows", shapes: one, positive: false, build: |t, x| Ok(t.softmax(x[0], Axis::Rows)) },
    Case { name: "concat_cols", shapes: |m, k, n| vec![vec![m, k], vec![m, n]], positive: false, build: |t, x| t.concat(&[x[0], x[1]], Axis::Cols) },
    Case { name: "concat_rows", shapes: |m, k, n| vec![vec![m, n], vec![k, n]], positive: false, build: |t, x| t.concat(&[x[0], x[1]], Axis::Rows) },
    Case {
        name: "slice_cols",
        shapes: one,
        positive: false,
        build: |t, x| {
            let n = t.shape(x[0])[1];
            t.slice(x[0], Axis::Cols, n / 3, n)
        },
    },
    Case {
        name: "slice_rows",
        shapes: one,
        positive: false,
        build: |t, x| {
            let m = t.shape(x[0])[0];
            t.slice(x[0], Axis::Rows, 0, m.div_ceil(2))
        },
    },
    Case { name: "row_sum", shapes: one, positive: false, build: |t, x| Ok(t.row_sum(x[0])) },
    Case { name: "sum", shapes: one, positive: false, build: |t, x| Ok(t.sum(x[0])) },
    Case { name: "max_pool", shapes: one, positive: false, build: |t, x| t.max_pool(x[0]) },
    Case {
        name: "gather",
        shapes: one,
        positive: false,
        build: |t, x| {
            let m = t.shape(x[0])[0];
            let idx: Vec<usize> = (0..m + 2).map(|i| (i * 5 + 1) % m).collect();
            t.gather(x[0], &idx)
        },
    },
    Case {
        name: "reshape",
        shapes: one,
        positive: false,
        build: |t, x| {
            let s = t.shape(x[0]).to_vec();
            t.reshape(x[0], &[1, s[0] * s[1]])
        },
    },
    Case { name: "row_normalize", shapes: one, positive: true, build: |t, x| Ok(t.row_normalize(x[0], 1e-8)) },
];

/// Names of every primitive covered by [`primitive_suite`].
pub fn primitive_names() -> Vec<&'static str> {
    CASES.iter().map(|c| c.name).collect()
}

/// Finite-difference check of every primitive for one seed, with random
/// shapes up to 8 and the output contracted against a random weight so
/// that all output entries carry gradient. Returns the worst relative error
/// per primitive.
pub fn primitive_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CASES
        .iter()
        .map(|case| {
            let (m, k, n) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8));
            let mut store = ParameterStore::new();
            let ids: Vec<_> = (case.shapes)(m, k, n)
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut t = Tensor::normal(&mut rng, s, 1.0);
                    if case.positive {
                        t = t.map(|v| v.abs() + 0.2);
                    }
                    store.insert(format!("x{i}"), t, false).unwrap()
                })
                .collect();
            let weight_seed = rng.gen::<u64>();
            let report = grad_check(&store, 1e-6, |tape, s| {
                let xs: Vec<Var> = ids.iter().map(|&id| tape.param(s, id)).collect();
                let out = (case.build)(tape, &xs)?;
                let mut wr = ChaCha8Rng::seed_from_u64(weight_seed);
                let w = tape.constant(Tensor::normal(&mut wr, tape.shape(out), 1.0));
                let prod = tape.mul(out, w)?;
                Ok(tape.sum(prod))
            })
            .unwrap_or_else(|e| panic!("{}: {e}", case.name));
            (case.name, report.max_rel_error)
        })
        .collect()
}

/// Small widths that keep a training epoch on a few hundred sentences
/// within seconds.
pub fn small_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    for (k, v) in [
        ("d_dist", "4"),
        ("dist_clip", "10"),
        ("d_len", "4"),
        ("len_max", "6"),
        ("d_h", "8"),
        ("lstm.layers", "1"),
        ("ff_hidden", "6"),
        ("key_dim", "6"),
        ("gcn.hidden", "6"),
        ("gcn.layers", "1"),
        ("gtn.channels", "2"),
        ("gtn.intermediates", "2"),
        ("head.hidden", "6"),
        ("disc.hidden", "6"),
        ("batch_size", "8"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}
