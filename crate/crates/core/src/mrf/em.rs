//! Weight estimation and the EM loop with a MAP plug-in E-step.

use super::bp::{max_product_bp, BpConfig};
use super::bruteforce::{expected_potentials, log_partition};
use super::model::{Assignment, DiscreteMrf};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Halvings tried before a step is abandoned.
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStepConfig {
    pub steps: usize,
    pub lr: f64,
    /// Fit node weights `wᵢ` too; when false they stay fixed.
    pub fit_unary: bool,
}

impl Default for MStepConfig {
    fn default() -> Self {
        MStepConfig {
            steps: 50,
            lr: 0.5,
            fit_unary: true,
        }
    }
}

/// Mean `log p(v | W)` over complete assignments.
pub fn mean_log_likelihood<T: Scalar>(mrf: &DiscreteMrf<T>, data: &[Assignment]) -> Result<T> {
    let log_z = log_partition(mrf)?;
    let total: T = data.iter().map(|a| -mrf.energy(&a.states) - log_z).sum();
    Ok(total / T::lit(data.len() as f64))
}

fn check_data<T: Scalar>(mrf: &DiscreteMrf<T>, data: &[Assignment]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidAssignment("no completed assignments".into()));
    }
    for a in data {
        let all = vec![true; a.states.len()];
        mrf.check_states(&a.states, &all)?;
    }
    Ok(())
}

/// Gradient of the mean log-likelihood:
/// `∂/∂w_ij = −mean φ_p(vᵢ*, vⱼ*) + E_p[φ_p]` and likewise for `wᵢ`.
fn gradient<T: Scalar>(mrf: &DiscreteMrf<T>, data: &[Assignment]) -> Result<(Vec<T>, Vec<T>)> {
    let expect = expected_potentials(mrf)?;
    let inv = T::one() / T::lit(data.len() as f64);
    let mut g_unary = expect.unary.clone();
    let mut g_pair = expect.pairwise.clone();
    for a in data {
        for (i, &s) in a.states.iter().enumerate() {
            g_unary[i] -= inv * mrf.unary()[i][s];
        }
        for (k, e) in mrf.pairwise().iter().enumerate() {
            g_pair[k] -= inv * mrf.pair_potential(k, a.states[e.i], a.states[e.j]);
        }
    }
    Ok((g_unary, g_pair))
}

fn stepped<T: Scalar>(
    mrf: &DiscreteMrf<T>,
    g_unary: &[T],
    g_pair: &[T],
    lr: T,
    fit_unary: bool,
) -> DiscreteMrf<T> {
    let mut next = mrf.clone();
    for (k, e) in mrf.pairwise().iter().enumerate() {
        next.set_edge_weight(e.i, e.j, mrf.edge_weight(e.i, e.j) + lr * g_pair[k]);
    }
    if fit_unary {
        for (i, &g) in g_unary.iter().enumerate() {
            next.set_node_weight(i, mrf.node_weight(i) + lr * g);
        }
    }
    next
}

/// Result of [`fit_weights`].
#[derive(Debug, Clone)]
pub struct WeightFit<T> {
    pub mrf: DiscreteMrf<T>,
    /// Mean log-likelihood before the first step and after each step.
    pub trace: Vec<T>,
}

/// Projected gradient ascent on the mean log-likelihood of complete data.
///
/// Each step tries the full learning rate and halves it until the
/// log-likelihood does not decrease; if no step size helps, the weights stay
/// where they are, so the trace is non-decreasing.
pub fn fit_weights<T: Scalar>(
    mrf: &DiscreteMrf<T>,
    data: &[Assignment],
    cfg: &MStepConfig,
) -> Result<WeightFit<T>> {
    check_data(mrf, data)?;
    let mut current = mrf.clone();
    let mut ll = mean_log_likelihood(&current, data)?;
    let mut trace = vec![ll];
    for _ in 0..cfg.steps {
        let (g_unary, g_pair) = gradient(&current, data)?;
        let mut lr = T::lit(cfg.lr);
        for _ in 0..MAX_BACKTRACKS {
            let candidate = stepped(&current, &g_unary, &g_pair, lr, cfg.fit_unary);
            let cand_ll = mean_log_likelihood(&candidate, data)?;
            if cand_ll >= ll {
                current = candidate;
                ll = cand_ll;
                break;
            }
            lr = lr / T::lit(2.0);
        }
        trace.push(ll);
    }
    Ok(WeightFit { mrf: current, trace })
}

/// M-step for one completed assignment `x ∪ z*`.
pub fn mstep_weights<T: Scalar>(
    mrf: &DiscreteMrf<T>,
    completed: &Assignment,
    cfg: &MStepConfig,
) -> Result<DiscreteMrf<T>> {
    Ok(fit_weights(mrf, std::slice::from_ref(completed), cfg)?.mrf)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmConfig {
    pub outer_iters: usize,
    pub bp: BpConfig,
    pub mstep: MStepConfig,
}

#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub mrf: DiscreteMrf<T>,
    /// Completed assignment; observation mask as given.
    pub completion: Assignment,
    /// `log p(x, z* | W)` after every M-step.
    pub objective_trace: Vec<T>,
}

/// Alternates a max-product E-step with a weight M-step.
///
/// A BP completion that scores worse under the current weights than the
/// previous completion is discarded, which keeps the surrogate objective
/// monotone on loopy graphs where BP is not exact.
pub fn em_fit<T: Scalar>(
    mrf: &DiscreteMrf<T>,
    observed: &Assignment,
    cfg: &EmConfig,
) -> Result<EmFit<T>> {
    if cfg.outer_iters == 0 {
        return Err(Error::Invalid("outer_iters must be at least 1".into()));
    }
    let mut model = mrf.clone();
    let mut completion: Option<Assignment> = None;
    let mut trace = Vec::with_capacity(cfg.outer_iters);
    for _ in 0..cfg.outer_iters {
        let decoded = max_product_bp(&model, observed, &cfg.bp)?.assignment;
        let z = match completion.take() {
            Some(prev) if model.energy(&prev.states) < model.energy(&decoded.states) => prev,
            _ => decoded,
        };
        let full = z.completed();
        let fit = fit_weights(&model, std::slice::from_ref(&full), &cfg.mstep)?;
        model = fit.mrf;
        trace.push(*fit.trace.last().expect("trace holds the initial value"));
        completion = Some(z);
    }
    Ok(EmFit {
        mrf: model,
        completion: completion.expect("at least one iteration ran"),
        objective_trace: trace,
    })
}
