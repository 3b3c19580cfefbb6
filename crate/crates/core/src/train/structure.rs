//! Agreement between learned incoming weights of the query node and planted dependencies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Incoming weights of one query node over nodes 0..t-1 with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSample {
    pub dialog: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Mann-Whitney AUC, ties counted as one half. `None` when one class is empty.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Per-round AUC averaged within each dialog, then across dialogs. Rounds
/// with a single label class are skipped.
pub fn structure_auc(samples: &[StructureSample]) -> Option<f64> {
    let mut per_dialog: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for s in samples {
        if let Some(a) = roc_auc(&s.scores, &s.labels) {
            per_dialog.entry(s.dialog).or_default().push(a);
        }
    }
    if per_dialog.is_empty() {
        return None;
    }
    let means: Vec<f64> = per_dialog.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    Some(means.iter().sum::<f64>() / means.len() as f64)
}

/// AUC under `n_perm` within-round shuffles of the labels, sorted ascending.
pub fn permutation_null(samples: &[StructureSample], n_perm: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = (0..n_perm)
        .filter_map(|_| {
            let shuffled: Vec<StructureSample> = samples
                .iter()
                .map(|s| {
                    let mut labels = s.labels.clone();
                    labels.shuffle(&mut rng);
                    StructureSample {
                        labels,
                        ..s.clone()
                    }
                })
                .collect();
            structure_auc(&shuffled)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Nearest-rank quantile of ascending data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    Some(sorted[idx])
}
