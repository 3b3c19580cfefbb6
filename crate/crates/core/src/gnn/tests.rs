use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::Tensor;

fn params(dim: usize, fc: usize, seed: u64) -> GnnParams<f64> {
    GnnParams::init(&mut ChaCha8Rng::seed_from_u64(seed), dim, fc)
}

/// Link layers set to the identity so `fc(h) = relu(h)`.
fn identity_link(dim: usize) -> GnnParams<f64> {
    let lin = || LinearParams {
        w: Tensor::identity(dim),
        b: Tensor::zeros(vec![dim]),
    };
    GnnParams {
        link: [lin(), lin()],
        gru: GruParams::zeros(dim, dim),
    }
}

fn graph(tape: &mut Tape<f64>, states: &[Vec<f64>]) -> DialogGraph {
    let vars = states.iter().map(|s| tape.constant_vec(s.clone())).collect();
    DialogGraph::new(vars).unwrap()
}

fn random_states(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

#[test]
fn identical_states_give_uniform_weights() {
    let p = params(4, 3, 0);
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);
    let mut g = graph(&mut tape, &vec![vec![0.3, -0.2, 1.0, 0.5]; 5]);
    link_weights(&mut tape, &mut g, &vars).unwrap();
    let w = g.weights(&tape).unwrap();
    for (i, row) in w.normalized.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let want = if i == j { 0.0 } else { 0.25 };
            assert!((x - want).abs() < 1e-15);
        }
    }
}

#[test]
fn hand_evaluated_three_node_graph() {
    let p = identity_link(2);
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);
    let mut g = graph(&mut tape, &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    link_weights(&mut tape, &mut g, &vars).unwrap();
    let w = g.weights(&tape).unwrap();
    assert_eq!(w.raw[0][2], 1.0);
    assert_eq!(w.raw[0][1], 0.0);
    assert_eq!(w.raw[1][2], 1.0);
    assert_eq!(w.normalized[2][..2], [0.5, 0.5]);
}

#[test]
fn messages_examples() {
    let mut tape = Tape::new();
    let mut g = graph(&mut tape, &[vec![1.0, 2.0], vec![3.0, -4.0], vec![0.0, 0.0]]);
    constant_weights(&mut tape, &mut g);
    let m = aggregate_messages(&mut tape, &g).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].0, 2);
    assert_eq!(tape.value(m[0].1), [2.0, -1.0]);

    let mut g = graph(&mut tape, &[vec![7.0, -1.5], vec![0.0, 0.0]]);
    constant_weights(&mut tape, &mut g);
    let m = aggregate_messages(&mut tape, &g).unwrap();
    assert_eq!(tape.value(m[0].1), [7.0, -1.5]);

    let g = graph(&mut tape, &[vec![1.0], vec![2.0]]);
    assert!(aggregate_messages(&mut tape, &g).is_err());
}

#[test]
fn messages_match_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = params(3, 3, 5);
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);
    let states = random_states(&mut rng, 4, 3);
    let mut g = graph(&mut tape, &states);
    link_weights(&mut tape, &mut g, &vars).unwrap();
    let w = g.weights(&tape).unwrap();
    let m = aggregate_messages(&mut tape, &g).unwrap()[0].1;
    let got = tape.value(m).to_vec();
    // Row 3 of the normalized matrix times the state matrix.
    for c in 0..3 {
        let want: f64 = (0..4).map(|j| w.normalized[3][j] * states[j][c]).sum();
        assert!((got[c] - want).abs() < 1e-12);
    }
}

#[test]
fn update_examples() {
    let mut tape = Tape::new();
    let p = GnnParams {
        link: identity_link(1).link,
        gru: GruParams::zeros(1, 1),
    };
    let vars = p.register(&mut tape, false);
    let mut g = graph(&mut tape, &[vec![3.0], vec![0.8]]);
    let before = g.states.clone();
    constant_weights(&mut tape, &mut g);
    update_states(&mut tape, &mut g, &vars, 0).unwrap();
    assert_eq!(g.states, before);
    update_states(&mut tape, &mut g, &vars, 1).unwrap();
    assert!((tape.value(g.query_state())[0] - 0.4).abs() < 1e-15);
    assert_eq!(g.states[0], before[0]);
}

#[test]
fn em_infer_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = params(3, 2, 9);
    let states = random_states(&mut rng, 4, 3);
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);

    let mut g = graph(&mut tape, &states);
    let before = g.states.clone();
    let cfg = InferenceConfig {
        outer_iters: 0,
        inner_steps: 2,
        variant: Variant::Full,
    };
    em_infer(&mut tape, &mut g, &vars, &cfg).unwrap();
    assert_eq!(g.states, before);
    assert!(g.raw.is_none());

    let cfg = InferenceConfig {
        outer_iters: 1,
        inner_steps: 1,
        variant: Variant::Full,
    };
    em_infer(&mut tape, &mut g, &vars, &cfg).unwrap();
    let mut h = graph(&mut tape, &states);
    link_weights(&mut tape, &mut h, &vars).unwrap();
    update_states(&mut tape, &mut h, &vars, 1).unwrap();
    assert_eq!(tape.value(g.query_state()), tape.value(h.query_state()));

    let mut n = graph(&mut tape, &states);
    let cfg = InferenceConfig {
        variant: Variant::NoIter,
        ..InferenceConfig::default()
    };
    em_infer(&mut tape, &mut n, &vars, &cfg).unwrap();
    assert!(n.raw.is_none());
    assert_eq!(tape.value(n.query_state()), &states[3][..]);
}

#[test]
fn constant_graph_ignores_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = params(3, 3, 1);
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);
    let mut g = graph(&mut tape, &random_states(&mut rng, 5, 3));
    let cfg = InferenceConfig {
        variant: Variant::ConstGraph,
        ..InferenceConfig::default()
    };
    em_infer(&mut tape, &mut g, &vars, &cfg).unwrap();
    let w = g.weights(&tape).unwrap();
    assert!(w.normalized[4][..4].iter().all(|&x| x == 0.25));
    assert!(w.raw[1][3] == 1.0 && w.raw[3][1] == 1.0);
}

#[test]
fn scoring_examples() {
    let mut tape = Tape::<f64>::new();
    let h = tape.constant_vec(vec![1.0, 0.0]);
    let a = tape.constant_vec(vec![1.0, 0.0]);
    let b = tape.constant_vec(vec![0.0, 1.0]);
    let (_, probs) = score_options(&mut tape, h, &[a, b]).unwrap();
    let e = std::f64::consts::E;
    let p = tape.value(probs);
    assert!((p[0] - e / (e + 1.0)).abs() < 1e-15 && (p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);

    let (scores, _) = score_options(&mut tape, h, &[b, a, b, a]).unwrap();
    let s = tape.value(scores).to_vec();
    assert_eq!(s[1], s[3]);
    assert_eq!(ranking(&s), [1, 3, 0, 2]);
    assert_eq!(gt_rank(&s, 3), 2);
    assert_eq!(gt_rank(&s, 0), 3);
    assert!(score_options(&mut tape, h, &[]).is_err());
    let c = tape.constant_vec(vec![1.0]);
    assert!(score_options(&mut tape, h, &[c]).is_err());
}

#[test]
fn variant_names_round_trip() {
    for v in [Variant::Full, Variant::ConstGraph, Variant::NoIter] {
        assert_eq!(Variant::parse(v.name()).unwrap(), v);
        assert_eq!(Variant::from_code(v.code()), Some(v));
    }
    assert!(Variant::parse("partial").is_err());
    assert_eq!(Variant::from_code(3), None);
    assert!(DialogGraph::new(vec![]).is_err());
}

#[test]
fn export_formats() {
    let w = WeightMatrices {
        raw: vec![vec![0.0, 2.0], vec![2.0, 0.0]],
        normalized: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    };
    let labels = vec!["a \"red\" dog".to_string(), "query".to_string()];
    let doc: serde_json::Value = serde_json::from_str(&structure_json(&labels, &w)).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(doc["normalized"][1][0], 1.0);
    let dot = structure_dot(&labels, &w);
    assert!(dot.starts_with("digraph dialog {") && dot.ends_with("}\n"));
    assert_eq!(dot.matches(" -> ").count(), 2);
    assert!(dot.contains(r#"label="a \"red\" dog""#));
}

/// Runs inference on a random graph and checks the structural invariants.
fn check_invariants(seed: u64, n: usize, dim: usize, fc: usize, variant: Variant) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = params(dim, fc, seed ^ 0xabc);
    let states = random_states(&mut rng, n, dim);
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);
    let mut g = graph(&mut tape, &states);
    let cfg = InferenceConfig {
        outer_iters: rng.gen_range(1..4),
        inner_steps: rng.gen_range(0..4),
        variant,
    };
    em_infer(&mut tape, &mut g, &vars, &cfg).unwrap();
    let w = g.weights(&tape).unwrap();
    for i in 0..n {
        let total: f64 = w.normalized[i].iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "receiver {i} sums to {total}");
        assert_eq!(w.normalized[i][i], 0.0);
        for j in 0..n {
            assert_eq!(w.raw[i][j].to_bits(), w.raw[j][i].to_bits());
        }
    }
    for (i, s) in states.iter().enumerate().take(n - 1) {
        let now = tape.value(g.states[i]);
        assert!(now.iter().zip(s).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn invariants_on_fifty_random_graphs() {
    for seed in 0..50 {
        check_invariants(seed, 2 + (seed as usize % 10), 1 + (seed as usize % 6), 1 + (seed as usize % 4), Variant::Full);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_hold_for_any_graph(seed in any::<u64>(), n in 2usize..12, dim in 1usize..8, fc in 1usize..6, c in 0u8..2) {
        let variant = if c == 0 { Variant::Full } else { Variant::ConstGraph };
        check_invariants(seed, n, dim, fc, variant);
    }

    #[test]
    fn history_order_does_not_change_the_query(seed in any::<u64>(), n in 3usize..9, dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = params(dim, dim, seed.wrapping_add(1));
        let states = random_states(&mut rng, n, dim);
        let mut perm: Vec<usize> = (1..n - 1).collect();
        perm.reverse();
        let shift = seed as usize % perm.len();
        perm.rotate_left(shift);
        let mut shuffled = vec![states[0].clone()];
        shuffled.extend(perm.iter().map(|&i| states[i].clone()));
        shuffled.push(states[n - 1].clone());

        let run = |s: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let vars = p.register(&mut tape, false);
            let mut g = graph(&mut tape, s);
            em_infer(&mut tape, &mut g, &vars, &InferenceConfig::default()).unwrap();
            tape.value(g.query_state()).to_vec()
        };
        let (a, b) = (run(&states), run(&shuffled));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}
