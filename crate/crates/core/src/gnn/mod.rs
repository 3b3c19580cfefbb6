//! Neural EM over dialog graphs with one unobserved node.

mod export;

pub use export::{structure_dot, structure_json, WeightMatrices};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GruVars, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{GruParams, LinearParams, LinearVars};
use crate::scalar::Scalar;

/// Link function (two fc layers with a ReLU between) and the GRU update.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams<T> {
    pub link: [LinearParams<T>; 2],
    pub gru: GruParams<T>,
}

#[derive(Debug, Clone)]
pub struct GnnVars {
    pub link: [LinearVars; 2],
    pub gru: GruVars,
}

impl<T: Scalar> GnnParams<T> {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, dim: usize, fc_dim: usize) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        GnnParams {
            link: [
                LinearParams::init(rng, dim, fc_dim, bound),
                LinearParams::init(rng, fc_dim, fc_dim, bound),
            ],
            gru: GruParams::init(rng, dim, dim, bound),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>, requires_grad: bool) -> GnnVars {
        GnnVars {
            link: [
                self.link[0].register(tape, requires_grad),
                self.link[1].register(tape, requires_grad),
            ],
            gru: self.gru.register(tape, requires_grad),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Incoming weights fixed at 1/(N-1); the link function is never used.
    ConstGraph,
    /// No EM iterations: options are scored against the initial query state.
    NoIter,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::ConstGraph => "const_graph",
            Variant::NoIter => "no_iter",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "const_graph" => Ok(Variant::ConstGraph),
            "no_iter" => Ok(Variant::NoIter),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Variant::Full => 0,
            Variant::ConstGraph => 1,
            Variant::NoIter => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Variant> {
        [Variant::Full, Variant::ConstGraph, Variant::NoIter].get(code as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceConfig {
    pub outer_iters: usize,
    pub inner_steps: usize,
    pub variant: Variant,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            outer_iters: 3,
            inner_steps: 2,
            variant: Variant::Full,
        }
    }
}

/// Node states and edge weights of one round. Node 0 is the caption, the last
/// node is the query; all other nodes are history.
#[derive(Debug, Clone)]
pub struct DialogGraph {
    pub states: Vec<Var>,
    pub observed: Vec<bool>,
    /// `raw[i][j]` for i != j; both orders hold the same variable.
    pub raw: Option<Vec<Vec<Option<Var>>>>,
    /// `normalized[i]` holds the weights of edges into node i, one per
    /// neighbor in increasing node order.
    pub normalized: Option<Vec<Var>>,
}

impl DialogGraph {
    pub fn new(states: Vec<Var>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Invalid(format!(
                "a dialog graph needs at least 2 nodes, got {}",
                states.len()
            )));
        }
        let mut observed = vec![true; states.len()];
        *observed.last_mut().expect("non-empty") = false;
        Ok(DialogGraph {
            states,
            observed,
            raw: None,
            normalized: None,
        })
    }

    /// Round index t; the graph has t+1 nodes.
    pub fn round(&self) -> usize {
        self.states.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.states.len()
    }

    pub fn query(&self) -> usize {
        self.states.len() - 1
    }

    pub fn query_state(&self) -> Var {
        self.states[self.query()]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        (0..self.states.len()).filter(move |&j| j != i)
    }

    /// Current weights as plain matrices, if any M-step has run.
    pub fn weights<T: Scalar>(&self, tape: &Tape<T>) -> Option<WeightMatrices> {
        let (raw, norm) = (self.raw.as_ref()?, self.normalized.as_ref()?);
        let n = self.n_nodes();
        let mut rm = vec![vec![0.0; n]; n];
        let mut nm = vec![vec![0.0; n]; n];
        for i in 0..n {
            for (slot, j) in self.neighbors(i).enumerate() {
                rm[i][j] = tape.scalar(raw[i][j].expect("off-diagonal")).as_f64();
                nm[i][j] = tape.value(norm[i])[slot].as_f64();
            }
        }
        Some(WeightMatrices {
            raw: rm,
            normalized: nm,
        })
    }
}

/// `fc(h) = W2 relu(W1 h + b1) + b2`.
pub fn link_transform<T: Scalar>(tape: &mut Tape<T>, p: &GnnVars, h: Var) -> Result<Var> {
    let a = p.link[0].apply(tape, h)?;
    let a = tape.relu(a);
    p.link[1].apply(tape, a)
}

/// M-step: raw weights are dot products of transformed states, each node's
/// incoming weights are softmax-normalized.
pub fn link_weights<T: Scalar>(tape: &mut Tape<T>, g: &mut DialogGraph, p: &GnnVars) -> Result<()> {
    let n = g.n_nodes();
    let mut f = Vec::with_capacity(n);
    for &h in &g.states {
        f.push(link_transform(tape, p, h)?);
    }
    let mut raw = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = tape.dot(f[i], f[j])?;
            raw[i][j] = Some(w);
            raw[j][i] = Some(w);
        }
    }
    let mut normalized = Vec::with_capacity(n);
    for i in 0..n {
        let incoming: Vec<Var> = g.neighbors(i).map(|j| raw[i][j].expect("off-diagonal")).collect();
        let stacked = tape.stack(&incoming)?;
        normalized.push(tape.softmax(stacked)?);
    }
    g.raw = Some(raw);
    g.normalized = Some(normalized);
    Ok(())
}

/// Constant-graph M-step: every raw weight 1, every incoming weight 1/(N-1).
pub fn constant_weights<T: Scalar>(tape: &mut Tape<T>, g: &mut DialogGraph) {
    let n = g.n_nodes();
    let one = tape.constant_vec(vec![T::one()]);
    let one = tape.sum(one);
    let raw = (0..n)
        .map(|i| (0..n).map(|j| (i != j).then_some(one)).collect())
        .collect();
    let share = T::one() / T::lit((n - 1) as f64);
    let normalized = (0..n).map(|_| tape.constant_vec(vec![share; n - 1])).collect();
    g.raw = Some(raw);
    g.normalized = Some(normalized);
}

/// Weighted sums of neighbor states for every unobserved node.
pub fn aggregate_messages<T: Scalar>(tape: &mut Tape<T>, g: &DialogGraph) -> Result<Vec<(usize, Var)>> {
    let norm = g
        .normalized
        .as_ref()
        .ok_or_else(|| Error::Invalid("edge weights have not been computed".into()))?;
    let mut out = Vec::new();
    for i in 0..g.n_nodes() {
        if g.observed[i] {
            continue;
        }
        let items: Vec<Var> = g.neighbors(i).map(|j| g.states[j]).collect();
        out.push((i, tape.weighted_sum(norm[i], &items)?));
    }
    Ok(out)
}

/// E-step: `steps` rounds of message aggregation and GRU updates of the
/// unobserved nodes. Observed states are never touched.
pub fn update_states<T: Scalar>(tape: &mut Tape<T>, g: &mut DialogGraph, p: &GnnVars, steps: usize) -> Result<()> {
    for _ in 0..steps {
        let messages = aggregate_messages(tape, g)?;
        for (i, m) in messages {
            g.states[i] = tape.gru_cell(g.states[i], m, &p.gru)?;
        }
    }
    Ok(())
}

pub fn em_infer<T: Scalar>(tape: &mut Tape<T>, g: &mut DialogGraph, p: &GnnVars, cfg: &InferenceConfig) -> Result<()> {
    if cfg.variant == Variant::NoIter {
        return Ok(());
    }
    for _ in 0..cfg.outer_iters {
        match cfg.variant {
            Variant::ConstGraph => constant_weights(tape, g),
            _ => link_weights(tape, g, p)?,
        }
        update_states(tape, g, p, cfg.inner_steps)?;
    }
    Ok(())
}

/// Dot-product scores of each option against the query state, and their softmax.
pub fn score_options<T: Scalar>(tape: &mut Tape<T>, h: Var, options: &[Var]) -> Result<(Var, Var)> {
    if options.is_empty() {
        return Err(Error::Invalid("no options to score".into()));
    }
    let mut scores = Vec::with_capacity(options.len());
    for &o in options {
        scores.push(tape.dot(h, o)?);
    }
    let scores = tape.stack(&scores)?;
    let probs = tape.softmax(scores)?;
    Ok((scores, probs))
}

/// Option indices by descending score, ties by lower index.
pub fn ranking<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// 1-based rank of `gt`: options scoring higher, or equal with a lower index, rank ahead.
pub fn gt_rank<T: Scalar>(scores: &[T], gt: usize) -> usize {
    let s = scores[gt];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &x)| x > s || (x == s && i < gt))
        .count()
}

#[cfg(test)]
mod tests;
