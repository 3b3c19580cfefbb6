use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogDataset {
    pub dialogs: Vec<Dialog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialog {
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_feature: Option<Vec<f64>>,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Round {
    pub question: String,
    pub answer: String,
    pub options: Vec<String>,
    pub gt_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Vec<f64>>,
    /// Node indices this round truly depends on. Evaluation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_deps: Option<Vec<usize>>,
}

fn violation(dialog: usize, round: Option<usize>, field: &'static str, message: String) -> Error {
    Error::Schema {
        dialog,
        round,
        field,
        message,
    }
}

impl DialogDataset {
    /// Checks every invariant. Round numbers in errors are 1-based.
    pub fn validate(&self) -> Result<()> {
        let mut context_len: Option<(usize, usize)> = None;
        for (d, dialog) in self.dialogs.iter().enumerate() {
            if let Some(ctx) = &dialog.context_feature {
                if ctx.iter().any(|x| !x.is_finite()) {
                    return Err(violation(d, None, "context_feature", "non-finite entry".into()));
                }
                match context_len {
                    None => context_len = Some((d, ctx.len())),
                    Some((first, len)) if len != ctx.len() => {
                        return Err(violation(
                            d,
                            None,
                            "context_feature",
                            format!("length {} differs from dialog {first} (length {len})", ctx.len()),
                        ))
                    }
                    _ => {}
                }
            }
            for (r, round) in dialog.rounds.iter().enumerate() {
                let t = r + 1;
                let k = round.options.len();
                if k == 0 {
                    return Err(violation(d, Some(t), "options", "empty option list".into()));
                }
                if round.gt_index >= k {
                    return Err(violation(
                        d,
                        Some(t),
                        "gt_index",
                        format!("{} is not below the option count {k}", round.gt_index),
                    ));
                }
                if round.options[round.gt_index] != round.answer {
                    return Err(violation(
                        d,
                        Some(t),
                        "options",
                        format!("options[{}] does not equal the answer", round.gt_index),
                    ));
                }
                if let Some(rel) = &round.relevance {
                    if rel.len() != k {
                        return Err(violation(
                            d,
                            Some(t),
                            "relevance",
                            format!("length {} but {k} options", rel.len()),
                        ));
                    }
                    if let Some(bad) = rel.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                        return Err(violation(d, Some(t), "relevance", format!("entry {bad} outside [0, 1]")));
                    }
                }
                if let Some(deps) = &round.planted_deps {
                    if let Some(bad) = deps.iter().find(|&&j| j > t) {
                        return Err(violation(
                            d,
                            Some(t),
                            "planted_deps",
                            format!("node {bad} out of range for {} nodes", t + 1),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_examples(&self) -> usize {
        self.dialogs.iter().map(|d| d.rounds.len()).sum()
    }

    /// Splits off the last `fraction` of dialogs (at least one when there are two or more).
    pub fn split_tail(&self, fraction: f64) -> (DialogDataset, DialogDataset) {
        let n = self.dialogs.len();
        let mut tail = ((n as f64) * fraction).round() as usize;
        if n >= 2 {
            tail = tail.clamp(1, n - 1);
        } else {
            tail = 0;
        }
        let (head, rest) = self.dialogs.split_at(n - tail);
        (
            DialogDataset { dialogs: head.to_vec() },
            DialogDataset { dialogs: rest.to_vec() },
        )
    }
}
