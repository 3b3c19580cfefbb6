use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest per-node state count.
pub const MAX_CARDINALITY: usize = 8;

/// Pairwise energy table for the edge `(i, j)`, `i < j`, stored row-major
/// with `vᵢ` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwisePotential<T> {
    pub i: usize,
    pub j: usize,
    pub table: Vec<T>,
}

/// Discrete MRF with weighted energies:
///
/// `p(v | W) ∝ exp(−Σᵢ wᵢ φ_u(vᵢ) − Σ_{i<j} w_ij φ_p(vᵢ, vⱼ))`.
///
/// Edge weights form a symmetric matrix with zero diagonal, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMrf<T> {
    cardinalities: Vec<usize>,
    unary: Vec<Vec<T>>,
    pairwise: Vec<PairwisePotential<T>>,
    edge_weights: Vec<T>,
    node_weights: Vec<T>,
}

impl<T: Scalar> DiscreteMrf<T> {
    /// Builds a model with every node weight and every listed edge weight at 1.
    pub fn new(
        cardinalities: Vec<usize>,
        unary: Vec<Vec<T>>,
        pairwise: Vec<PairwisePotential<T>>,
    ) -> Result<Self> {
        let n = cardinalities.len();
        if n == 0 {
            return Err(Error::InvalidModel("model has no nodes".into()));
        }
        for (i, &c) in cardinalities.iter().enumerate() {
            if c == 0 || c > MAX_CARDINALITY {
                return Err(Error::InvalidModel(format!(
                    "node {i} has cardinality {c}, expected 1..={MAX_CARDINALITY}"
                )));
            }
        }
        if unary.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} unary tables for {n} nodes",
                unary.len()
            )));
        }
        for (i, table) in unary.iter().enumerate() {
            if table.len() != cardinalities[i] {
                return Err(Error::InvalidModel(format!(
                    "unary table {i} has {} entries, cardinality is {}",
                    table.len(),
                    cardinalities[i]
                )));
            }
            if table.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("unary table {i} is not finite")));
            }
        }
        let mut seen = vec![false; n * n];
        for p in &pairwise {
            if p.i >= p.j || p.j >= n {
                return Err(Error::InvalidModel(format!(
                    "edge ({}, {}) must satisfy i < j < {n}",
                    p.i, p.j
                )));
            }
            if std::mem::replace(&mut seen[p.i * n + p.j], true) {
                return Err(Error::InvalidModel(format!("duplicate edge ({}, {})", p.i, p.j)));
            }
            if p.table.len() != cardinalities[p.i] * cardinalities[p.j] {
                return Err(Error::InvalidModel(format!(
                    "edge ({}, {}) table has {} entries, expected {}",
                    p.i,
                    p.j,
                    p.table.len(),
                    cardinalities[p.i] * cardinalities[p.j]
                )));
            }
            if p.table.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "edge ({}, {}) table is not finite",
                    p.i, p.j
                )));
            }
        }
        let mut edge_weights = vec![T::zero(); n * n];
        for p in &pairwise {
            edge_weights[p.i * n + p.j] = T::one();
            edge_weights[p.j * n + p.i] = T::one();
        }
        Ok(DiscreteMrf {
            cardinalities,
            unary,
            pairwise,
            edge_weights,
            node_weights: vec![T::one(); n],
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn unary(&self) -> &[Vec<T>] {
        &self.unary
    }

    pub fn pairwise(&self) -> &[PairwisePotential<T>] {
        &self.pairwise
    }

    pub fn edge_weight(&self, i: usize, j: usize) -> T {
        self.edge_weights[i * self.n_nodes() + j]
    }

    pub fn node_weight(&self, i: usize) -> T {
        self.node_weights[i]
    }

    pub fn node_weights(&self) -> &[T] {
        &self.node_weights
    }

    /// Row-major `n × n` weight matrix.
    pub fn edge_weight_matrix(&self) -> &[T] {
        &self.edge_weights
    }

    /// Sets `w_ij = w_ji`, clamped to `[0, 1]`. The diagonal stays zero.
    pub fn set_edge_weight(&mut self, i: usize, j: usize, w: T) {
        if i == j {
            return;
        }
        let n = self.n_nodes();
        let w = clamp_unit(w);
        self.edge_weights[i * n + j] = w;
        self.edge_weights[j * n + i] = w;
    }

    pub fn set_node_weight(&mut self, i: usize, w: T) {
        self.node_weights[i] = clamp_unit(w);
    }

    pub fn with_edge_weight(mut self, i: usize, j: usize, w: T) -> Self {
        self.set_edge_weight(i, j, w);
        self
    }

    /// `φ_p(vᵢ, vⱼ)` for the edge at `edge` in [`Self::pairwise`].
    #[inline]
    pub fn pair_potential(&self, edge: usize, vi: usize, vj: usize) -> T {
        let p = &self.pairwise[edge];
        p.table[vi * self.cardinalities[p.j] + vj]
    }

    /// Number of joint assignments, saturating on overflow.
    pub fn state_space_size(&self) -> u128 {
        self.cardinalities
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }

    /// `Σᵢ wᵢ φ_u(vᵢ) + Σ_{i<j} w_ij φ_p(vᵢ, vⱼ)` for a full assignment.
    pub fn energy(&self, states: &[usize]) -> T {
        let mut e = T::zero();
        for (i, &s) in states.iter().enumerate() {
            e += self.node_weights[i] * self.unary[i][s];
        }
        for (k, p) in self.pairwise.iter().enumerate() {
            e += self.edge_weight(p.i, p.j) * self.pair_potential(k, states[p.i], states[p.j]);
        }
        e
    }

    pub(crate) fn check_states(&self, states: &[usize], observed: &[bool]) -> Result<()> {
        if states.len() != self.n_nodes() || observed.len() != self.n_nodes() {
            return Err(Error::InvalidAssignment(format!(
                "assignment covers {} nodes, model has {}",
                states.len(),
                self.n_nodes()
            )));
        }
        for (i, (&s, &obs)) in states.iter().zip(observed).enumerate() {
            if obs && s >= self.cardinalities[i] {
                return Err(Error::InvalidAssignment(format!(
                    "node {i} state {s} exceeds cardinality {}",
                    self.cardinalities[i]
                )));
            }
        }
        Ok(())
    }
}

fn clamp_unit<T: Scalar>(w: T) -> T {
    if w.is_nan() {
        T::zero()
    } else {
        w.max(T::zero()).min(T::one())
    }
}

/// Per-node states plus an observation mask. Observed nodes form `x`,
/// the rest form `z`; state values at unobserved nodes are placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub states: Vec<usize>,
    pub observed: Vec<bool>,
}

impl Assignment {
    /// Every node observed.
    pub fn full(states: Vec<usize>) -> Self {
        let observed = vec![true; states.len()];
        Assignment { states, observed }
    }

    /// `None` marks an unobserved node.
    pub fn partial(states: &[Option<usize>]) -> Self {
        Assignment {
            states: states.iter().map(|s| s.unwrap_or(0)).collect(),
            observed: states.iter().map(Option::is_some).collect(),
        }
    }

    /// Nothing observed.
    pub fn hidden(n: usize) -> Self {
        Assignment {
            states: vec![0; n],
            observed: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn unobserved(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| !o)
            .map(|(i, _)| i)
    }

    /// Same states, all marked observed.
    pub fn completed(&self) -> Assignment {
        Assignment::full(self.states.clone())
    }
}
