//! Exhaustive enumeration: exact normalizer, MAP, expectations and sampling.
//!
//! Assignments are enumerated in lexicographic order with node 0 as the most
//! significant digit, which is also the MAP tie-break order.

use rand::Rng;

use super::model::{Assignment, DiscreteMrf};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Largest state space any enumeration will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

fn check_size(size: u128) -> Result<()> {
    if size > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Advances a mixed-radix counter over `free` positions; returns false on wrap.
fn advance(states: &mut [usize], free: &[usize], cards: &[usize]) -> bool {
    for &pos in free.iter().rev() {
        states[pos] += 1;
        if states[pos] < cards[pos] {
            return true;
        }
        states[pos] = 0;
    }
    false
}

/// Calls `f` on every full assignment in lexicographic order.
pub fn for_each_assignment<T: Scalar>(
    mrf: &DiscreteMrf<T>,
    mut f: impl FnMut(&[usize]),
) -> Result<()> {
    check_size(mrf.state_space_size())?;
    let free: Vec<usize> = (0..mrf.n_nodes()).collect();
    let mut states = vec![0; mrf.n_nodes()];
    loop {
        f(&states);
        if !advance(&mut states, &free, mrf.cardinalities()) {
            return Ok(());
        }
    }
}

/// Normalized joint distribution over all assignments.
#[derive(Debug, Clone)]
pub struct JointTable<T> {
    cardinalities: Vec<usize>,
    pub probs: Vec<T>,
    pub log_z: T,
}

impl<T: Scalar> JointTable<T> {
    /// Lexicographic index of a full assignment.
    pub fn index_of(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.cardinalities)
            .fold(0, |acc, (&s, &c)| acc * c + s)
    }

    pub fn prob(&self, states: &[usize]) -> T {
        self.probs[self.index_of(states)]
    }

    /// Inverse of [`Self::index_of`].
    pub fn states_at(&self, mut index: usize) -> Vec<usize> {
        let mut states = vec![0; self.cardinalities.len()];
        for (pos, &c) in self.cardinalities.iter().enumerate().rev() {
            states[pos] = index % c;
            index /= c;
        }
        states
    }
}

/// `p(v | W) = exp(−energy(v)) / Z` with `Z` by full enumeration.
pub fn joint_prob_bruteforce<T: Scalar>(mrf: &DiscreteMrf<T>) -> Result<JointTable<T>> {
    let mut neg_energy = Vec::new();
    for_each_assignment(mrf, |s| neg_energy.push(-mrf.energy(s)))?;
    let log_z = scalar::log_sum_exp(&neg_energy);
    let probs = neg_energy.iter().map(|&e| (e - log_z).exp()).collect();
    Ok(JointTable {
        cardinalities: mrf.cardinalities().to_vec(),
        probs,
        log_z,
    })
}

/// `ln Z` by enumeration.
pub fn log_partition<T: Scalar>(mrf: &DiscreteMrf<T>) -> Result<T> {
    let mut neg_energy = Vec::new();
    for_each_assignment(mrf, |s| neg_energy.push(-mrf.energy(s)))?;
    Ok(scalar::log_sum_exp(&neg_energy))
}

/// `log p(v | W)` of a full assignment.
pub fn log_likelihood<T: Scalar>(mrf: &DiscreteMrf<T>, states: &[usize]) -> Result<T> {
    Ok(-mrf.energy(states) - log_partition(mrf)?)
}

/// Most probable completion of the observed nodes. Among equal-energy
/// completions the lexicographically smallest state vector wins.
pub fn map_bruteforce<T: Scalar>(mrf: &DiscreteMrf<T>, observed: &Assignment) -> Result<Assignment> {
    mrf.check_states(&observed.states, &observed.observed)?;
    let free: Vec<usize> = observed.unobserved().collect();
    let size = free
        .iter()
        .fold(1u128, |acc, &i| acc.saturating_mul(mrf.cardinalities()[i] as u128));
    check_size(size)?;

    let mut states = observed.states.clone();
    for &i in &free {
        states[i] = 0;
    }
    let mut best = states.clone();
    let mut best_energy = mrf.energy(&states);
    while advance(&mut states, &free, mrf.cardinalities()) {
        let e = mrf.energy(&states);
        if e < best_energy {
            best_energy = e;
            best.copy_from_slice(&states);
        }
    }
    Ok(Assignment {
        states: best,
        observed: observed.observed.clone(),
    })
}

/// Model expectations of every potential, used by the weight gradient.
#[derive(Debug, Clone)]
pub struct PotentialExpectations<T> {
    /// `E[φ_u(vᵢ)]` per node.
    pub unary: Vec<T>,
    /// `E[φ_p(vᵢ, vⱼ)]` per entry of [`DiscreteMrf::pairwise`].
    pub pairwise: Vec<T>,
    pub log_z: T,
}

pub fn expected_potentials<T: Scalar>(mrf: &DiscreteMrf<T>) -> Result<PotentialExpectations<T>> {
    let joint = joint_prob_bruteforce(mrf)?;
    let mut unary = vec![T::zero(); mrf.n_nodes()];
    let mut pairwise = vec![T::zero(); mrf.pairwise().len()];
    let mut idx = 0;
    for_each_assignment(mrf, |s| {
        let p = joint.probs[idx];
        idx += 1;
        for (i, &si) in s.iter().enumerate() {
            unary[i] += p * mrf.unary()[i][si];
        }
        for (k, e) in mrf.pairwise().iter().enumerate() {
            pairwise[k] += p * mrf.pair_potential(k, s[e.i], s[e.j]);
        }
    })?;
    Ok(PotentialExpectations {
        unary,
        pairwise,
        log_z: joint.log_z,
    })
}

/// Draws independent full assignments from the enumerated joint.
pub fn sample_bruteforce<T: Scalar, R: Rng + ?Sized>(
    mrf: &DiscreteMrf<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Assignment>> {
    let joint = joint_prob_bruteforce(mrf)?;
    let mut cumulative = Vec::with_capacity(joint.probs.len());
    let mut acc = 0.0;
    for p in &joint.probs {
        acc += p.as_f64();
        cumulative.push(acc);
    }
    let total = acc;
    Ok((0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            Assignment::full(joint.states_at(idx))
        })
        .collect())
}
