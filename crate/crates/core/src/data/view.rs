//! What the model is allowed to see of a round. `planted_deps` is left out.

use serde::{Deserialize, Serialize};

use super::schema::DialogDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Answer retrieval: history nodes are QA pairs, the query node is the question.
    #[default]
    Visdial,
    /// Next-question retrieval over a transformed dataset: history nodes are the
    /// rounds' question fields up to and including the current one, the query
    /// node is seeded from the caption.
    Visdialq,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Visdial => "visdial",
            Mode::Visdialq => "visdialq",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "visdial" => Ok(Mode::Visdial),
            "visdialq" => Ok(Mode::Visdialq),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryNode<'a> {
    pub question: &'a str,
    pub answer: Option<&'a str>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuerySource<'a> {
    Question(&'a str),
    Caption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleView<'a> {
    pub dialog: usize,
    /// 1-based round index within the dataset's dialog.
    pub round: usize,
    pub caption: &'a str,
    pub context: Option<&'a [f64]>,
    pub history: Vec<HistoryNode<'a>>,
    pub query: QuerySource<'a>,
    pub options: &'a [String],
    pub gt_index: usize,
    pub relevance: Option<&'a [f64]>,
}

impl ExampleView<'_> {
    /// Caption, history nodes and the query node.
    pub fn node_count(&self) -> usize {
        self.history.len() + 2
    }
}

pub fn example_view(ds: &DialogDataset, dialog: usize, round: usize, mode: Mode) -> Result<ExampleView<'_>> {
    let d = ds.dialogs.get(dialog).ok_or(Error::Index {
        what: "dialog",
        index: dialog,
        size: ds.dialogs.len(),
    })?;
    if round == 0 || round > d.rounds.len() {
        return Err(Error::Index {
            what: "round",
            index: round,
            size: d.rounds.len(),
        });
    }
    let r = &d.rounds[round - 1];
    let (history, query) = match mode {
        Mode::Visdial => (
            d.rounds[..round - 1]
                .iter()
                .map(|h| HistoryNode {
                    question: &h.question,
                    answer: Some(&h.answer),
                })
                .collect(),
            QuerySource::Question(&r.question),
        ),
        Mode::Visdialq => (
            d.rounds[..round]
                .iter()
                .map(|h| HistoryNode {
                    question: &h.question,
                    answer: None,
                })
                .collect(),
            QuerySource::Caption,
        ),
    };
    Ok(ExampleView {
        dialog,
        round,
        caption: &d.caption,
        context: d.context_feature.as_deref(),
        history,
        query,
        options: &r.options,
        gt_index: r.gt_index,
        relevance: r.relevance.as_deref(),
    })
}

/// All (dialog, round) pairs in dataset order.
pub fn example_index(ds: &DialogDataset) -> Vec<(usize, usize)> {
    ds.dialogs
        .iter()
        .enumerate()
        .flat_map(|(d, dialog)| (1..=dialog.rounds.len()).map(move |r| (d, r)))
        .collect()
}
