//! Relabels answer retrieval as next-question retrieval.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::schema::{Dialog, DialogDataset, Round};
use crate::encoder::{tokenize, MAX_ANSWER_TOKENS, MAX_QUESTION_TOKENS};

#[derive(Debug, Clone, PartialEq)]
pub struct VisdialQ {
    pub dataset: DialogDataset,
    /// Dialogs dropped for having fewer than two rounds.
    pub skipped: usize,
}

/// Text of a history node in the transformed dataset.
pub fn qa_pair_text(question: &str, answer: &str) -> String {
    let q = tokenize(question, MAX_QUESTION_TOKENS).join(" ");
    let a = tokenize(answer, MAX_ANSWER_TOKENS).join(" ");
    format!("{q} | {a}")
}

/// Round r of a transformed dialog carries QA pair r as its question and
/// question r+1 as its answer; options are questions drawn from the whole
/// dataset. A dialog with T rounds yields T-1 rounds.
pub fn to_visdialq(ds: &DialogDataset, seed: u64) -> VisdialQ {
    let mut pool: Vec<&str> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for d in &ds.dialogs {
        for r in &d.rounds {
            if seen.insert(r.question.as_str()) {
                pool.push(&r.question);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skipped = 0;
    let mut dialogs = Vec::new();
    for d in &ds.dialogs {
        if d.rounds.len() < 2 {
            skipped += 1;
            continue;
        }
        let rounds = d
            .rounds
            .windows(2)
            .map(|w| {
                let (cur, next) = (&w[0], &w[1]);
                let k = next.options.len().min(pool.len()).max(1);
                let others: Vec<&str> = pool.iter().copied().filter(|q| *q != next.question).collect();
                let mut options: Vec<String> = others
                    .choose_multiple(&mut rng, k - 1)
                    .map(|q| q.to_string())
                    .collect();
                let gt_index = rand::Rng::gen_range(&mut rng, 0..=options.len());
                options.insert(gt_index, next.question.clone());
                Round {
                    question: qa_pair_text(&cur.question, &cur.answer),
                    answer: next.question.clone(),
                    options,
                    gt_index,
                    relevance: None,
                    planted_deps: next.planted_deps.clone(),
                }
            })
            .collect();
        dialogs.push(Dialog {
            caption: d.caption.clone(),
            context_feature: d.context_feature.clone(),
            rounds,
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} dialog(s) with fewer than two rounds");
    }
    VisdialQ {
        dataset: DialogDataset { dialogs },
        skipped,
    }
}
