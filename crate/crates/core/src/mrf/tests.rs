use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn smooth_pair() -> Vec<f64> {
    vec![0.0, 1.0, 1.0, 0.0]
}

fn two_node() -> DiscreteMrf<f64> {
    DiscreteMrf::new(
        vec![2, 2],
        vec![vec![0.0; 2]; 2],
        vec![PairwisePotential {
            i: 0,
            j: 1,
            table: smooth_pair(),
        }],
    )
    .unwrap()
}

fn chain(n: usize) -> DiscreteMrf<f64> {
    let pairwise = (0..n - 1)
        .map(|k| PairwisePotential {
            i: k,
            j: k + 1,
            table: smooth_pair(),
        })
        .collect();
    DiscreteMrf::new(vec![2; n], vec![vec![0.0; 2]; n], pairwise).unwrap()
}

fn random_observation(rng: &mut ChaCha8Rng, mrf: &DiscreteMrf<f64>, p_obs: f64) -> Assignment {
    let states: Vec<Option<usize>> = mrf
        .cardinalities()
        .iter()
        .map(|&c| rng.gen_bool(p_obs).then(|| rng.gen_range(0..c)))
        .collect();
    Assignment::partial(&states)
}

/// Exhaustive MAP over full assignments consistent with the observation,
/// scanning in lexicographic order and keeping the first strict minimum.
fn oracle_map(mrf: &DiscreteMrf<f64>, observed: &Assignment) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_assignment(mrf, |s| {
        let consistent = (0..s.len()).all(|i| !observed.observed[i] || s[i] == observed.states[i]);
        if !consistent {
            return;
        }
        let e = mrf.energy(s);
        if best.as_ref().map_or(true, |(b, _)| e < *b) {
            best = Some((e, s.to_vec()));
        }
    })
    .unwrap();
    best.unwrap().1
}

#[test]
fn two_node_joint_matches_closed_form() {
    let joint = joint_prob_bruteforce(&two_node()).unwrap();
    // 1 / (2 + 2e⁻¹)
    assert!((joint.prob(&[0, 0]) - 0.365_529_289_0).abs() < 1e-9);
    assert!((joint.prob(&[0, 1]) - (-1f64).exp() * 0.365_529_289_0).abs() < 1e-9);
}

#[test]
fn zero_potentials_give_uniform_joint() {
    let mrf = DiscreteMrf::<f64>::new(vec![2, 3], vec![vec![0.0; 2], vec![0.0; 3]], vec![]).unwrap();
    let joint = joint_prob_bruteforce(&mrf).unwrap();
    assert!(joint.probs.iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
}

#[test]
fn joint_normalizes_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let n = rng.gen_range(1..=6);
        let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, n, 4, 0.5);
        let joint = joint_prob_bruteforce(&mrf).unwrap();
        assert!((joint.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let s = joint.states_at(joint.probs.len() - 1);
        assert_eq!(joint.index_of(&s), joint.probs.len() - 1);
    }
}

#[test]
fn enumeration_rejects_huge_state_spaces() {
    let n = 7;
    let mrf = DiscreteMrf::<f64>::new(vec![8; n], vec![vec![0.0; 8]; n], vec![]).unwrap();
    assert!(matches!(
        joint_prob_bruteforce(&mrf),
        Err(crate::Error::StateSpaceTooLarge { .. })
    ));
    // MAP only enumerates the unobserved part.
    let obs = Assignment::partial(&[Some(0), Some(1), Some(2), None, None, None, None]);
    assert!(map_bruteforce(&mrf, &obs).is_ok());
}

#[test]
fn smoothness_forces_agreement_with_observation() {
    let mrf = chain(4);
    let obs = Assignment::partial(&[Some(0), None, None, None]);
    assert_eq!(map_bruteforce(&mrf, &obs).unwrap().states, vec![0, 0, 0, 0]);
    let obs = Assignment::partial(&[Some(1), None, None, None]);
    let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
    assert_eq!(bp.assignment.states, vec![1, 1, 1, 1]);
}

#[test]
fn isolated_node_takes_argmin_of_weighted_unary() {
    let mut mrf = DiscreteMrf::<f64>::new(vec![3], vec![vec![0.4, -0.2, 0.1]], vec![]).unwrap();
    mrf.set_node_weight(0, 0.5);
    let obs = Assignment::hidden(1);
    assert_eq!(map_bruteforce(&mrf, &obs).unwrap().states, vec![1]);
    let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
    assert_eq!(bp.assignment.states, vec![1]);
    let expected: Vec<f64> = [0.4, -0.2, 0.1].iter().map(|&u: &f64| (-0.5 * u).exp()).collect();
    let max = expected.iter().cloned().fold(0.0, f64::max);
    for (b, e) in bp.beliefs[0].iter().zip(&expected) {
        assert!((b - e / max).abs() < 1e-15);
    }
}

#[test]
fn map_matches_exhaustive_enumeration_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let mrf: DiscreteMrf<f64> = random::random_tree(&mut rng, 5, 4);
        let obs = random_observation(&mut rng, &mrf, 0.4);
        assert_eq!(map_bruteforce(&mrf, &obs).unwrap().states, oracle_map(&mrf, &obs));
    }
}

#[test]
fn bp_is_exact_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..100 {
        let mrf: DiscreteMrf<f64> = random::random_tree(&mut rng, 6, 4);
        let obs = random_observation(&mut rng, &mrf, 0.3);
        let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
        assert!(bp.converged, "seed {seed}");
        assert_eq!(bp.assignment.states, oracle_map(&mrf, &obs), "seed {seed}");
    }
}

#[test]
fn bp_breaks_ties_lexicographically() {
    // No evidence and symmetric smoothness: every constant assignment is a MAP.
    let mrf = chain(5);
    let obs = Assignment::hidden(5);
    let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
    assert_eq!(bp.assignment.states, vec![0; 5]);
    assert_eq!(map_bruteforce(&mrf, &obs).unwrap().states, vec![0; 5]);

    // Repulsive pair with no evidence: (0,1) and (1,0) tie; per-node argmax
    // alone would decode the non-optimal (0,0).
    let mrf = DiscreteMrf::<f64>::new(
        vec![2, 2],
        vec![vec![0.0; 2]; 2],
        vec![PairwisePotential {
            i: 0,
            j: 1,
            table: vec![1.0, 0.0, 0.0, 1.0],
        }],
    )
    .unwrap();
    let bp = max_product_bp(&mrf, &Assignment::hidden(2), &BpConfig::default()).unwrap();
    assert_eq!(bp.assignment.states, vec![0, 1]);
}

#[test]
fn fully_observed_graph_is_returned_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 5, 3, 0.6);
    let obs = Assignment::full(vec![1, 0, 1, 1, 0]);
    let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
    assert_eq!(bp.assignment, obs);
    assert_eq!(bp.messages.iter().count(), 0);
}

#[test]
fn messages_are_positive_and_max_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 6, 4, 0.5);
        let obs = random_observation(&mut rng, &mrf, 0.3);
        let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
        for (_, m) in bp.messages.iter() {
            assert!(m.iter().all(|&v| v > 0.0 && v.is_finite()));
            assert_eq!(m.iter().cloned().fold(0.0, f64::max), 1.0);
        }
    }
}

#[test]
fn normalization_does_not_change_decoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 6, 4, 0.4);
        let obs = random_observation(&mut rng, &mrf, 0.3);
        let cfg = BpConfig {
            max_iters: 30,
            ..BpConfig::default()
        };
        let norm = max_product_bp(&mrf, &obs, &cfg).unwrap();
        let raw = max_product_bp(&mrf, &obs, &BpConfig { normalize: false, ..cfg }).unwrap();
        assert_eq!(norm.assignment, raw.assignment);
    }
}

#[test]
fn bp_rejects_zero_iterations() {
    let cfg = BpConfig {
        max_iters: 0,
        ..BpConfig::default()
    };
    assert!(max_product_bp(&two_node(), &Assignment::hidden(2), &cfg).is_err());
}

#[test]
fn stationary_point_leaves_weights_unchanged() {
    let mrf = DiscreteMrf::<f64>::new(
        vec![2, 2],
        vec![vec![0.0; 2]; 2],
        vec![PairwisePotential {
            i: 0,
            j: 1,
            table: vec![0.0; 4],
        }],
    )
    .unwrap()
    .with_edge_weight(0, 1, 0.3);
    let out = mstep_weights(&mrf, &Assignment::full(vec![1, 0]), &MStepConfig::default()).unwrap();
    assert_eq!(out, mrf);
}

#[test]
fn decoupled_pair_fits_near_zero_weight() {
    let pair = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = DiscreteMrf::<f64>::new(
        vec![2, 2, 2],
        vec![vec![0.0, 0.5], vec![0.3, 0.0], vec![0.0, 0.2]],
        vec![
            PairwisePotential { i: 0, j: 1, table: vec![0.0, 2.0, 2.0, 0.0] },
            PairwisePotential { i: 0, j: 2, table: pair(&mut rng) },
            PairwisePotential { i: 1, j: 2, table: pair(&mut rng) },
        ],
    )
    .unwrap()
    .with_edge_weight(0, 1, 0.0)
    .with_edge_weight(0, 2, 0.9)
    .with_edge_weight(1, 2, 0.8);
    let data = sample_bruteforce(&truth, 500, &mut rng).unwrap();

    let start = truth
        .clone()
        .with_edge_weight(0, 1, 0.5)
        .with_edge_weight(0, 2, 0.5)
        .with_edge_weight(1, 2, 0.5);
    let cfg = MStepConfig {
        steps: 300,
        lr: 1.0,
        fit_unary: false,
    };
    let fit = fit_weights(&start, &data, &cfg).unwrap();
    assert!(fit.mrf.edge_weight(0, 1) < 0.1, "w01 = {}", fit.mrf.edge_weight(0, 1));
    assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn mstep_never_decreases_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 4, 3, 0.7);
        let states = mrf.cardinalities().iter().map(|&c| rng.gen_range(0..c)).collect();
        let data = [Assignment::full(states)];
        let cfg = MStepConfig {
            steps: 50,
            lr: 2.0,
            fit_unary: true,
        };
        let fit = fit_weights(&mrf, &data, &cfg).unwrap();
        let direct: Vec<f64> = std::iter::once(&mrf)
            .chain(std::iter::once(&fit.mrf))
            .map(|m| joint_prob_bruteforce(m).unwrap().prob(&data[0].states).ln())
            .collect();
        assert!(direct[1] >= direct[0] - 1e-9);
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert_eq!(fit.trace.len(), 51);
    }
}

#[test]
fn frozen_unary_weights_stay_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 4, 3, 0.7);
    let cfg = MStepConfig {
        fit_unary: false,
        ..MStepConfig::default()
    };
    let out = mstep_weights(&mrf, &Assignment::full(vec![0; 4]), &cfg).unwrap();
    assert_eq!(out.node_weights(), mrf.node_weights());
}

#[test]
fn one_outer_iteration_is_e_step_then_m_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 5, 3, 0.5);
    let obs = Assignment::partial(&[Some(0), None, Some(1), None, None]);
    let cfg = EmConfig {
        outer_iters: 1,
        ..EmConfig::default()
    };
    let fit = em_fit(&mrf, &obs, &cfg).unwrap();

    let z = max_product_bp(&mrf, &obs, &cfg.bp).unwrap().assignment;
    let manual = mstep_weights(&mrf, &z.completed(), &cfg.mstep).unwrap();
    assert_eq!(fit.completion, z);
    assert_eq!(fit.mrf, manual);
}

#[test]
fn em_with_everything_observed_is_repeated_mstep() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 4, 3, 0.8);
    let obs = Assignment::full(vec![1, 0, 0, 1]);
    let cfg = EmConfig {
        outer_iters: 3,
        ..EmConfig::default()
    };
    let fit = em_fit(&mrf, &obs, &cfg).unwrap();
    let mut manual = mrf.clone();
    for _ in 0..3 {
        manual = mstep_weights(&manual, &obs, &cfg.mstep).unwrap();
    }
    assert_eq!(fit.completion, obs);
    assert_eq!(fit.mrf, manual);
}

#[test]
fn em_objective_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 5, 3, 0.6);
        let obs = random_observation(&mut rng, &mrf, 0.5);
        let cfg = EmConfig {
            outer_iters: 6,
            mstep: MStepConfig {
                steps: 5,
                ..MStepConfig::default()
            },
            ..EmConfig::default()
        };
        let fit = em_fit(&mrf, &obs, &cfg).unwrap();
        assert!(fit.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let direct = log_likelihood(&fit.mrf, &fit.completion.states).unwrap();
        assert!((direct - fit.objective_trace.last().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn json_round_trip_is_value_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let mrf: DiscreteMrf<f64> = random::random_graph(&mut rng, 5, 4, 0.5);
        let text = io::to_json(&mrf).unwrap();
        let back: DiscreteMrf<f64> = io::from_json(&text).unwrap();
        assert_eq!(back, mrf);
        assert_eq!(io::to_json(&back).unwrap(), text);
    }
}

#[test]
fn json_rejects_asymmetric_weights() {
    let text = r#"{"cardinalities":[2,2],"unary":[[0,0],[0,0]],
        "pairwise":[{"i":0,"j":1,"table":[[0,1],[1,0]]}],
        "weights":{"node":[1,1],"edge":[[0,0.5],[0.4,0]]}}"#;
    assert!(io::from_json::<f64>(text).is_err());
}

#[test]
fn bp_runs_in_single_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mrf: DiscreteMrf<f32> = random::random_tree(&mut rng, 5, 3);
    let obs = Assignment::partial(&[Some(1), None, None, None, None]);
    let bp = max_product_bp(&mrf, &obs, &BpConfig::default()).unwrap();
    assert_eq!(bp.assignment, map_bruteforce(&mrf, &obs).unwrap());
}
