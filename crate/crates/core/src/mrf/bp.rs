//! Synchronous max-product belief propagation with clamped observations.
//!
//! Factors are taken in the same energy semantics as the joint: a node
//! contributes `exp(−wᵢ φ_u(vᵢ))` and an edge `exp(−w_ij φ_p(vᵢ, vⱼ))`.
//! Messages are only maintained into unobserved nodes; an observed sender
//! maximizes over its single clamped state.

use super::model::{Assignment, DiscreteMrf};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative gap below which two belief entries count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest absolute message change.
    pub tol: f64,
    /// Rescale every message to max 1 after each update.
    pub normalize: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iters: 100,
            tol: 1e-10,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Directed {
    from: usize,
    to: usize,
    edge: usize,
    /// True when `to` is the row node `i` of the edge table.
    to_is_row: bool,
}

/// Directed messages `m_{j→i}` over the receiver's states.
#[derive(Debug, Clone)]
pub struct MessageSet<T> {
    directed: Vec<Directed>,
    values: Vec<Vec<T>>,
    active: Vec<bool>,
}

impl<T: Scalar> MessageSet<T> {
    /// Message from `from` to `to`, if that edge exists and `to` is unobserved.
    pub fn get(&self, from: usize, to: usize) -> Option<&[T]> {
        self.directed
            .iter()
            .position(|d| d.from == from && d.to == to)
            .filter(|&k| self.active[k])
            .map(|k| self.values[k].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[T])> {
        self.directed
            .iter()
            .zip(&self.values)
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|((d, v), _)| ((d.from, d.to), v.as_slice()))
    }
}

#[derive(Debug, Clone)]
pub struct BpResult<T> {
    /// `b(vᵢ) ∝ ψᵢ(vᵢ) Πⱼ m_{j→i}(vᵢ)`, scaled to max 1. Observed nodes get an
    /// indicator of their clamped state.
    pub beliefs: Vec<Vec<T>>,
    pub assignment: Assignment,
    pub messages: MessageSet<T>,
    pub converged: bool,
    pub iterations: usize,
}

struct Pass<T> {
    messages: MessageSet<T>,
    converged: bool,
    iterations: usize,
}

fn node_factor<T: Scalar>(mrf: &DiscreteMrf<T>, i: usize, s: usize) -> T {
    (-mrf.node_weight(i) * mrf.unary()[i][s]).exp()
}

fn edge_factor<T: Scalar>(mrf: &DiscreteMrf<T>, d: &Directed, v_to: usize, v_from: usize) -> T {
    let p = &mrf.pairwise()[d.edge];
    let phi = if d.to_is_row {
        mrf.pair_potential(d.edge, v_to, v_from)
    } else {
        mrf.pair_potential(d.edge, v_from, v_to)
    };
    (-mrf.edge_weight(p.i, p.j) * phi).exp()
}

fn run_pass<T: Scalar>(mrf: &DiscreteMrf<T>, observed: &Assignment, cfg: &BpConfig) -> Pass<T> {
    let cards = mrf.cardinalities();
    let mut directed = Vec::with_capacity(2 * mrf.pairwise().len());
    for (k, p) in mrf.pairwise().iter().enumerate() {
        directed.push(Directed {
            from: p.j,
            to: p.i,
            edge: k,
            to_is_row: true,
        });
        directed.push(Directed {
            from: p.i,
            to: p.j,
            edge: k,
            to_is_row: false,
        });
    }
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); mrf.n_nodes()];
    for (k, d) in directed.iter().enumerate() {
        incoming[d.to].push(k);
    }
    let active: Vec<bool> = directed.iter().map(|d| !observed.observed[d.to]).collect();
    let mut values: Vec<Vec<T>> = directed.iter().map(|d| vec![T::one(); cards[d.to]]).collect();

    let tol = T::lit(cfg.tol);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut next = values.clone();
        let mut delta = T::zero();
        for (k, d) in directed.iter().enumerate() {
            if !active[k] {
                continue;
            }
            let sender_states: Vec<usize> = if observed.observed[d.from] {
                vec![observed.states[d.from]]
            } else {
                (0..cards[d.from]).collect()
            };
            // Sender's unary times its incoming messages, excluding the receiver.
            let sender_term: Vec<T> = sender_states
                .iter()
                .map(|&vj| {
                    let mut t = node_factor(mrf, d.from, vj);
                    if !observed.observed[d.from] {
                        for &q in &incoming[d.from] {
                            if directed[q].from != d.to {
                                t *= values[q][vj];
                            }
                        }
                    }
                    t
                })
                .collect();
            let msg = &mut next[k];
            for (vi, out) in msg.iter_mut().enumerate() {
                *out = sender_states
                    .iter()
                    .zip(&sender_term)
                    .map(|(&vj, &t)| edge_factor(mrf, d, vi, vj) * t)
                    .fold(T::zero(), T::max);
            }
            if cfg.normalize {
                let max = msg.iter().copied().fold(T::zero(), T::max);
                if max > T::zero() {
                    msg.iter_mut().for_each(|v| *v /= max);
                }
            }
            for (a, b) in msg.iter().zip(&values[k]) {
                delta = delta.max((*a - *b).abs());
            }
        }
        values = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    Pass {
        messages: MessageSet {
            directed,
            values,
            active,
        },
        converged,
        iterations,
    }
}

fn beliefs<T: Scalar>(mrf: &DiscreteMrf<T>, observed: &Assignment, msgs: &MessageSet<T>) -> Vec<Vec<T>> {
    (0..mrf.n_nodes())
        .map(|i| {
            let card = mrf.cardinalities()[i];
            if observed.observed[i] {
                return (0..card)
                    .map(|s| if s == observed.states[i] { T::one() } else { T::zero() })
                    .collect();
            }
            let mut b: Vec<T> = (0..card).map(|s| node_factor(mrf, i, s)).collect();
            for (k, d) in msgs.directed.iter().enumerate() {
                if d.to == i && msgs.active[k] {
                    for (s, v) in b.iter_mut().enumerate() {
                        *v *= msgs.values[k][s];
                    }
                }
            }
            let max = b.iter().copied().fold(T::zero(), T::max);
            if max > T::zero() {
                b.iter_mut().for_each(|v| *v /= max);
            }
            b
        })
        .collect()
}

/// Smallest state within the tie tolerance of the maximum, and whether any
/// other state was also within it.
fn argmax_lowest<T: Scalar>(b: &[T]) -> (usize, bool) {
    let max = b.iter().copied().fold(T::neg_infinity(), T::max);
    let cut = max - max.abs() * T::lit(TIE_TOLERANCE);
    let mut hits = b.iter().enumerate().filter(|(_, &v)| v >= cut).map(|(s, _)| s);
    let first = hits.next().unwrap_or(0);
    (first, hits.next().is_some())
}

/// Max-product BP for the MAP completion of `observed`.
///
/// The decoded state of each unobserved node is the argmax of its belief with
/// the lowest index winning. If any belief is tied, nodes are instead fixed one
/// at a time in index order, re-running BP after each choice, so that tied
/// optima decode to the lexicographically smallest completion.
pub fn max_product_bp<T: Scalar>(
    mrf: &DiscreteMrf<T>,
    observed: &Assignment,
    cfg: &BpConfig,
) -> Result<BpResult<T>> {
    if cfg.max_iters == 0 {
        return Err(Error::Invalid("max_iters must be at least 1".into()));
    }
    mrf.check_states(&observed.states, &observed.observed)?;

    let pass = run_pass(mrf, observed, cfg);
    let beliefs = beliefs(mrf, observed, &pass.messages);
    let mut assignment = observed.clone();
    let mut tied = false;
    for i in observed.unobserved() {
        let (s, t) = argmax_lowest(&beliefs[i]);
        assignment.states[i] = s;
        tied |= t;
    }

    if tied {
        let mut clamp = observed.clone();
        for i in observed.unobserved() {
            let p = run_pass(mrf, &clamp, cfg);
            let b = self::beliefs(mrf, &clamp, &p.messages);
            let (s, _) = argmax_lowest(&b[i]);
            clamp.states[i] = s;
            clamp.observed[i] = true;
            assignment.states[i] = s;
        }
    }

    Ok(BpResult {
        beliefs,
        assignment,
        messages: pass.messages,
        converged: pass.converged,
        iterations: pass.iterations,
    })
}
