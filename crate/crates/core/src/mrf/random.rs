//! Random model generators for verification and tests.

use rand::Rng;

use super::model::{Assignment, DiscreteMrf, PairwisePotential};
use crate::scalar::Scalar;

fn random_table<T: Scalar, R: Rng + ?Sized>(rng: &mut R, len: usize, scale: f64) -> Vec<T> {
    (0..len).map(|_| T::lit(rng.gen_range(0.0..scale))).collect()
}

fn build<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    cards: Vec<usize>,
    edges: Vec<(usize, usize)>,
    scale: f64,
) -> DiscreteMrf<T> {
    let unary = cards.iter().map(|&c| random_table(rng, c, scale)).collect();
    let pairwise = edges
        .into_iter()
        .map(|(a, b)| {
            let (i, j) = (a.min(b), a.max(b));
            PairwisePotential {
                i,
                j,
                table: random_table(rng, cards[i] * cards[j], scale),
            }
        })
        .collect();
    DiscreteMrf::new(cards, unary, pairwise).expect("generated model is valid")
}

fn random_cards<R: Rng + ?Sized>(rng: &mut R, n: usize, max_card: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(2..=max_card.max(2))).collect()
}

/// Random tree: node `k` attaches to a uniformly chosen earlier node.
/// Potentials are uniform in `[0, 2)` and weights uniform in `[0, 1]`.
pub fn random_tree<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, max_card: usize) -> DiscreteMrf<T> {
    let cards = random_cards(rng, n, max_card);
    let edges = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    let mut mrf = build(rng, cards, edges, 2.0);
    randomize_weights(&mut mrf, rng);
    mrf
}

/// Random graph with each pair connected independently with `edge_prob`.
pub fn random_graph<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    max_card: usize,
    edge_prob: f64,
) -> DiscreteMrf<T> {
    let cards = random_cards(rng, n, max_card);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(edge_prob) {
                edges.push((i, j));
            }
        }
    }
    let mut mrf = build(rng, cards, edges, 2.0);
    randomize_weights(&mut mrf, rng);
    mrf
}

fn randomize_weights<T: Scalar, R: Rng + ?Sized>(mrf: &mut DiscreteMrf<T>, rng: &mut R) {
    let edges: Vec<(usize, usize)> = mrf.pairwise().iter().map(|p| (p.i, p.j)).collect();
    for (i, j) in edges {
        mrf.set_edge_weight(i, j, T::lit(rng.gen_range(0.0..=1.0)));
    }
    for i in 0..mrf.n_nodes() {
        mrf.set_node_weight(i, T::lit(rng.gen_range(0.0..=1.0)));
    }
}

/// Observes each node independently with probability `p_obs` at a uniform state.
pub fn random_observation<T: Scalar, R: Rng + ?Sized>(rng: &mut R, mrf: &DiscreteMrf<T>, p_obs: f64) -> Assignment {
    let states: Vec<Option<usize>> = mrf
        .cardinalities()
        .iter()
        .map(|&c| rng.gen_bool(p_obs).then(|| rng.gen_range(0..c)))
        .collect();
    Assignment::partial(&states)
}
