//! Reference scorers for synthetic datasets. They read the text templates of
//! the generator directly and bypass any model.

use super::schema::{DialogDataset, Round};
use super::synthetic::answer_from_attributes;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    /// Reads planted_deps and applies the generator's answer function.
    Generator,
    /// Sees only the caption and the current question.
    HistoryBlind,
}

impl Oracle {
    pub fn parse(s: &str) -> Result<Oracle> {
        match s {
            "generator" => Ok(Oracle::Generator),
            "history-blind" => Ok(Oracle::HistoryBlind),
            other => Err(Error::Config(format!("unknown oracle `{other}`"))),
        }
    }
}

fn not_synthetic(what: &str, text: &str) -> Error {
    Error::Invalid(format!("{what} `{text}` does not follow the synthetic template"))
}

/// (entity, attribute) of a caption "a <attr> <entity>".
fn parse_caption(text: &str) -> Result<(&str, &str)> {
    let toks: Vec<&str> = text.split(' ').collect();
    match toks.as_slice() {
        ["a", attr, entity] => Ok((entity, attr)),
        _ => Err(not_synthetic("caption", text)),
    }
}

struct ParsedQuestion<'a> {
    attribute: &'a str,
    referred: Vec<&'a str>,
}

fn parse_question(text: &str) -> Result<ParsedQuestion<'_>> {
    let toks: Vec<&str> = text.split(' ').collect();
    let n = toks.len();
    let shape_ok = n >= 9
        && toks[..2] == ["what", "about"]
        && toks[n - 6..n - 4] == ["?", "the"]
        && toks[n - 3] == "is"
        && toks[n - 1] == ".";
    if !shape_ok {
        return Err(not_synthetic("question", text));
    }
    let referred = toks[2..n - 6].iter().copied().filter(|t| *t != "and").collect();
    Ok(ParsedQuestion {
        attribute: toks[n - 2],
        referred,
    })
}

fn indicator(options: &[String], keep: impl Fn(&str) -> bool) -> Vec<f64> {
    options.iter().map(|o| if keep(o) { 1.0 } else { 0.0 }).collect()
}

fn generator_scores(caption_attr: &str, rounds: &[Round], t: usize) -> Result<Vec<f64>> {
    let round = &rounds[t - 1];
    let deps = round
        .planted_deps
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("round {t} has no planted_deps")))?;
    let mut attrs = Vec::with_capacity(deps.len());
    for &j in deps {
        attrs.push(if j == 0 {
            caption_attr
        } else {
            parse_question(&rounds[j - 1].question)?.attribute
        });
    }
    let answer = answer_from_attributes(&attrs);
    Ok(indicator(&round.options, |o| o == answer))
}

fn history_blind_scores(caption: (&str, &str), round: &Round) -> Result<Vec<f64>> {
    let (caption_entity, caption_attr) = caption;
    let q = parse_question(&round.question)?;
    let caption_dep = q.referred.contains(&caption_entity);
    Ok(indicator(&round.options, |o| {
        let toks: Vec<&str> = o.split(' ').collect();
        toks.len() == q.referred.len()
            && toks.contains(&caption_attr) == caption_dep
            && !toks.contains(&q.attribute)
    }))
}

/// Option scores for every example in dataset order.
pub fn oracle_scores(ds: &DialogDataset, oracle: Oracle) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(ds.n_examples());
    for d in &ds.dialogs {
        let caption = parse_caption(&d.caption)?;
        for t in 1..=d.rounds.len() {
            out.push(match oracle {
                Oracle::Generator => generator_scores(caption.1, &d.rounds, t)?,
                Oracle::HistoryBlind => history_blind_scores(caption, &d.rounds[t - 1])?,
            });
        }
    }
    Ok(out)
}
