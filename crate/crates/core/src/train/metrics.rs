use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub mrr: f64,
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub mean_rank: f64,
    pub ndcg: f64,
    pub n_examples: usize,
}

/// Rank of the ground truth and, optionally, relevance of every option
/// listed in ranked order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedExample {
    pub rank: usize,
    pub ranked_relevance: Option<Vec<f64>>,
}

impl RankedExample {
    pub fn new(rank: usize) -> Self {
        RankedExample {
            rank,
            ranked_relevance: None,
        }
    }
}

fn dcg(rel: &[f64]) -> f64 {
    rel.iter().enumerate().map(|(i, r)| r / ((i + 2) as f64).log2()).sum()
}

fn ndcg(ex: &RankedExample) -> f64 {
    match &ex.ranked_relevance {
        None => 1.0 / ((ex.rank + 1) as f64).log2(),
        Some(rel) => {
            let mut ideal = rel.clone();
            ideal.sort_by(|a, b| b.total_cmp(a));
            let best = dcg(&ideal);
            if best > 0.0 {
                dcg(rel) / best
            } else {
                0.0
            }
        }
    }
}

/// Sums in sorted order so the result does not depend on example order.
fn mean(mut xs: Vec<f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / n
}

pub fn compute_metrics(examples: &[RankedExample]) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(Error::Invalid("no examples to evaluate".into()));
    }
    if examples.iter().any(|e| e.rank == 0) {
        return Err(Error::Invalid("ranks are 1-based".into()));
    }
    let recall = |k: usize| examples.iter().filter(|e| e.rank <= k).count() as f64 / examples.len() as f64;
    Ok(MetricsReport {
        mrr: mean(examples.iter().map(|e| 1.0 / e.rank as f64).collect()),
        r_at_1: recall(1),
        r_at_5: recall(5),
        r_at_10: recall(10),
        mean_rank: mean(examples.iter().map(|e| e.rank as f64).collect()),
        ndcg: mean(examples.iter().map(ndcg).collect()),
        n_examples: examples.len(),
    })
}

/// Overall report plus one per round number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub mrr: f64,
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub mean_rank: f64,
    pub ndcg: f64,
    pub n_examples: usize,
    pub per_round: BTreeMap<String, MetricsReport>,
}

impl EvalReport {
    /// `rounds[i]` is the 1-based round of `examples[i]`.
    pub fn build(examples: &[RankedExample], rounds: &[usize]) -> Result<Self> {
        let all = compute_metrics(examples)?;
        let mut grouped: BTreeMap<usize, Vec<RankedExample>> = BTreeMap::new();
        for (e, &r) in examples.iter().zip(rounds) {
            grouped.entry(r).or_default().push(e.clone());
        }
        let mut per_round = BTreeMap::new();
        for (r, exs) in grouped {
            per_round.insert(r.to_string(), compute_metrics(&exs)?);
        }
        Ok(EvalReport {
            mrr: all.mrr,
            r_at_1: all.r_at_1,
            r_at_5: all.r_at_5,
            r_at_10: all.r_at_10,
            mean_rank: all.mean_rank,
            ndcg: all.ndcg,
            n_examples: all.n_examples,
            per_round,
        })
    }

    pub fn summary(&self) -> MetricsReport {
        MetricsReport {
            mrr: self.mrr,
            r_at_1: self.r_at_1,
            r_at_5: self.r_at_5,
            r_at_10: self.r_at_10,
            mean_rank: self.mean_rank,
            ndcg: self.ndcg,
            n_examples: self.n_examples,
        }
    }
}
