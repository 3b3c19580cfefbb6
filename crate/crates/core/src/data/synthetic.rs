//! Synthetic dialogs with planted dependencies.
//!
//! Every node (caption = 0, history round j = j) introduces one entity with
//! one attribute. Round k names the entities of its dependencies and the
//! answer is the sorted set of their attributes, so only the referred nodes
//! carry the information needed to answer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schema::{Dialog, DialogDataset, Round};
use crate::error::{Error, Result};

pub const DEFAULT_ENTITIES: &[&str] = &[
    "dog", "cat", "car", "tree", "house", "boat", "bird", "horse", "chair", "table", "lamp",
    "kite", "train", "bus", "ball", "cup", "hat", "bike", "door", "clock", "fence", "truck",
    "plate", "bench", "sign", "shirt", "phone", "book", "bag", "cake",
];

pub const DEFAULT_ATTRIBUTES: &[&str] = &[
    "red", "blue", "green", "yellow", "black", "white", "brown", "pink", "large", "small",
    "old", "new", "wooden", "shiny", "striped", "dotted",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_dialogs: usize,
    pub rounds: usize,
    pub entities: Vec<String>,
    pub attributes: Vec<String>,
    pub dep_prob: f64,
    pub max_deps: usize,
    pub k_options: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_dialogs: 600,
            rounds: 5,
            entities: DEFAULT_ENTITIES.iter().map(|s| s.to_string()).collect(),
            attributes: DEFAULT_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
            dep_prob: 0.35,
            max_deps: 3,
            k_options: 20,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let nodes = self.rounds + 1;
        if self.entities.len() < nodes || self.attributes.len() < nodes {
            return Err(Error::Config(format!(
                "{} rounds need at least {nodes} entities and attributes",
                self.rounds
            )));
        }
        if !(0.0..=1.0).contains(&self.dep_prob) {
            return Err(Error::Config(format!("dep_prob {} outside [0, 1]", self.dep_prob)));
        }
        if self.max_deps == 0 || self.k_options == 0 {
            return Err(Error::Config("max_deps and k_options must be positive".into()));
        }
        let mut all: Vec<&String> = self.entities.iter().chain(&self.attributes).collect();
        all.sort();
        all.dedup();
        if all.len() != self.entities.len() + self.attributes.len() {
            return Err(Error::Config("entity and attribute tokens must be distinct".into()));
        }
        if all.iter().any(|t| t.is_empty() || t.chars().any(|c| !c.is_ascii_lowercase())) {
            return Err(Error::Config("tokens must be lowercase ascii words".into()));
        }
        Ok(())
    }
}

/// The answer function: sorted attributes of the referred nodes.
pub fn answer_from_attributes(attrs: &[&str]) -> String {
    let mut sorted = attrs.to_vec();
    sorted.sort_unstable();
    sorted.join(" ")
}

pub fn caption_text(entity: &str, attribute: &str) -> String {
    format!("a {attribute} {entity}")
}

pub fn question_text(entity: &str, attribute: &str, referred: &[&str]) -> String {
    format!("what about {} ? the {entity} is {attribute} .", referred.join(" and "))
}

fn jaccard(a: &str, b: &str) -> f64 {
    let a: Vec<&str> = a.split(' ').collect();
    let b: Vec<&str> = b.split(' ').collect();
    let inter = a.iter().filter(|t| b.contains(t)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<DialogDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dialogs = (0..spec.n_dialogs).map(|_| gen_dialog(spec, &mut rng)).collect();
    Ok(DialogDataset { dialogs })
}

fn gen_dialog(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Dialog {
    let nodes = spec.rounds + 1;
    let entities: Vec<&str> = spec.entities.choose_multiple(rng, nodes).map(String::as_str).collect();
    let attrs: Vec<&str> = spec.attributes.choose_multiple(rng, nodes).map(String::as_str).collect();

    let rounds = (1..=spec.rounds)
        .map(|k| {
            let mut deps: Vec<usize> = (0..k).filter(|_| rng.gen_bool(spec.dep_prob)).collect();
            if deps.is_empty() {
                deps.push(0);
            }
            if deps.len() > spec.max_deps {
                deps.shuffle(rng);
                deps.truncate(spec.max_deps);
                deps.sort_unstable();
            }
            let referred: Vec<&str> = deps.iter().map(|&j| entities[j]).collect();
            let dep_attrs: Vec<&str> = deps.iter().map(|&j| attrs[j]).collect();
            let answer = answer_from_attributes(&dep_attrs);
            let mut options = distractors(spec, rng, &attrs, deps.len(), &answer);
            let gt_index = rng.gen_range(0..=options.len());
            options.insert(gt_index, answer.clone());
            let relevance = options
                .iter()
                .enumerate()
                .map(|(i, o)| if i == gt_index { 1.0 } else { 0.5 * jaccard(o, &answer) })
                .collect();
            Round {
                question: question_text(entities[k], attrs[k], &referred),
                answer,
                options,
                gt_index,
                relevance: Some(relevance),
                planted_deps: Some(deps),
            }
        })
        .collect();

    Dialog {
        caption: caption_text(entities[0], attrs[0]),
        context_feature: None,
        rounds,
    }
}

/// `k_options - 1` distinct wrong answers rearranging this dialog's attributes; the
/// global attribute list is only used once the local combinations run out.
fn distractors(
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
    dialog_attrs: &[&str],
    gt_len: usize,
    answer: &str,
) -> Vec<String> {
    let want = spec.k_options - 1;
    let max_len = spec.max_deps.min(spec.attributes.len());
    let mut out: Vec<String> = Vec::with_capacity(want);
    let mut attempts = 0usize;
    while out.len() < want {
        attempts += 1;
        let local = attempts < 50 * spec.k_options;
        let pool = if local { dialog_attrs.len() } else { spec.attributes.len() };
        let len = if rng.gen_bool(0.7) { gt_len } else { rng.gen_range(1..=max_len) }.min(pool);
        let mut picked: Vec<&str> = Vec::with_capacity(len);
        while picked.len() < len {
            let tok = if local {
                *dialog_attrs.choose(rng).expect("non-empty")
            } else {
                spec.attributes.choose(rng).expect("non-empty").as_str()
            };
            if !picked.contains(&tok) {
                picked.push(tok);
            }
        }
        let cand = answer_from_attributes(&picked);
        if cand != answer && !out.contains(&cand) {
            out.push(cand);
        }
        if attempts > 10_000 * spec.k_options {
            // Option space exhausted; fall back to numbered fillers.
            let filler = format!("none {}", out.len());
            if !out.contains(&filler) {
                out.push(filler);
            }
        }
    }
    out
}
