mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsyngtn::corpus::{
    dep_path_lengths, generate_synthetic_corpus, parse_corpus, validate_heads, write_corpus, SynthParams,
};
use semsyngtn::gtn::{gtn_intermediate, StructureStack};
use semsyngtn::harness::Counts;
use semsyngtn::ib::negative_pairing;
use semsyngtn::numeric::{Axis, Tape, Tensor};
use semsyngtn::structures::dep_adjacency;
use semsyngtn::TrainConfig;

/// Parent array of a random tree on `n` nodes.
fn random_heads(seed: u64, n: usize) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut heads = vec![-1i64; n];
    for k in 1..n {
        heads[order[k]] = order[rng.gen_range(0..k)] as i64;
    }
    heads
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthetic_corpus_is_deterministic_and_round_trips(seed in 0u64..1000, n in 1usize..30) {
        let p = SynthParams::default();
        let a = generate_synthetic_corpus(seed, n, &p).unwrap();
        let b = generate_synthetic_corpus(seed, n, &p).unwrap();
        prop_assert_eq!(&a, &b);
        let mut buf = Vec::new();
        write_corpus(&a, &mut buf).unwrap();
        let back = parse_corpus(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &a);
        for ex in &a.examples {
            prop_assert!(ex.validate().is_ok());
            prop_assert!((2..=5).contains(&ex.entities.len()));
            prop_assert_eq!(ex.events.len(), 1);
            validate_heads(&ex.heads).unwrap();
        }
    }

    #[test]
    fn planted_arguments_sit_two_hops_out(seed in 0u64..1000) {
        let p = SynthParams::default();
        let c = generate_synthetic_corpus(seed, 5, &p).unwrap();
        for ex in &c.examples {
            let ev = &ex.events[0];
            let len = dep_path_lengths(&ex.heads, ev.trigger_index).unwrap();
            for arg in &ev.arguments {
                let ent = &ex.entities[arg.entity];
                prop_assert!(len[ent.head_index] >= 2);
                // Some trigger dependent carries a form of the same cluster.
                let cluster = ex.tokens[ent.head_index].split('_').next().unwrap().to_string();
                let bridge = (0..ex.tokens.len()).any(|t| {
                    len[t] == 1 && ex.tokens[t].split('_').next() == Some(cluster.as_str())
                });
                prop_assert!(bridge);
            }
        }
    }

    #[test]
    fn path_length_one_iff_dependency_edge(seed in 0u64..10_000, n in 1usize..40) {
        let heads = random_heads(seed, n);
        let a = dep_adjacency(&heads).unwrap();
        for i in 0..n {
            let len = dep_path_lengths(&heads, i).unwrap();
            prop_assert_eq!(len[i], 0);
            for j in 0..n {
                prop_assert_eq!(a.get(i, j), a.get(j, i));
                prop_assert_eq!(a.get(i, j) == 1.0, len[j] == 1);
                prop_assert!(len[j] < n);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in 0u64..10_000, m in 1usize..8, n in 1usize..8, scale in 0.1f64..200.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::normal(&mut rng, &[m, n], scale));
        let s = tape.softmax(x, Axis::Cols);
        for r in 0..m {
            let row = tape.value(s).row(r);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn intermediate_is_a_convex_combination(seed in 0u64..10_000, n in 1usize..8, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let mats: Vec<Tensor> = (0..k).map(|_| Tensor::uniform(&mut rng, &[n, n], 0.0, 1.0)).collect();
        let vars: Vec<_> = mats.iter().map(|m| tape.constant(m.clone())).collect();
        let stack = StructureStack::new(&mut tape, &vars).unwrap();
        let alpha = tape.constant(Tensor::normal(&mut rng, &[1, k], 2.0));
        let q = gtn_intermediate(&mut tape, &stack, alpha).unwrap();
        let q = tape.value(q);
        for i in 0..n {
            for j in 0..n {
                let lo = mats.iter().map(|m| m.get(i, j)).fold(f64::INFINITY, f64::min);
                let hi = mats.iter().map(|m| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(q.get(i, j) >= lo - 1e-12 && q.get(i, j) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn f1_is_bounded_harmonic_mean(pairs in prop::collection::vec((0usize..4, 0usize..4), 0..60)) {
        let mut c = Counts::default();
        for (g, p) in pairs {
            c.add(g, p, 0);
        }
        let (p, r, f) = c.prf();
        prop_assert!(f <= p.max(r) + 1e-12);
        prop_assert!((0.0..=100.0).contains(&f));
        if p + r > 0.0 {
            prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-9);
        }
    }

    #[test]
    fn negatives_never_share_a_sentence(ids in prop::collection::vec(0u8..5, 1..40)) {
        let pairs = negative_pairing(&ids);
        prop_assert_eq!(pairs.len(), ids.len());
        for (i, p) in pairs.iter().enumerate() {
            match p {
                Some(j) => {
                    prop_assert_eq!(*j, (i + 1) % ids.len());
                    prop_assert_ne!(ids[*j], ids[i]);
                }
                None => prop_assert_eq!(ids[(i + 1) % ids.len()], ids[i]),
            }
        }
    }

    #[test]
    fn config_text_round_trips(seed in 0u64..1000, lr in 1e-5f64..1e-1, alpha in 0.0f64..2.0, gtn in any::<bool>()) {
        let mut c = TrainConfig::default();
        c.seed = seed;
        c.lr = lr;
        c.alpha_disc = alpha;
        c.use_gtn = gtn;
        let back = TrainConfig::parse(&c.to_kv_string()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back, c);
    }
}

#[test]
fn primitive_gradients_over_many_seeds() {
    for seed in 100..140 {
        for (name, err) in common::primitive_suite(seed) {
            assert!(err < 1e-6, "{name} seed {seed}: {err:e}");
        }
    }
}
