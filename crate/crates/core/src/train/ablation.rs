use std::fmt::Write;

use serde::Serialize;

use super::metrics::MetricsReport;
use super::trainer::{evaluate, prepare_dataset, train_split};
use crate::config::RunConfig;
use crate::data::DialogDataset;
use crate::error::{Error, Result};
use crate::gnn::Variant;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblationVariant {
    pub name: String,
    pub variant: Variant,
    pub outer_iters: usize,
}

impl AblationVariant {
    pub fn full_3iter() -> Self {
        Self::n_iter(3).named("full_3iter")
    }

    pub fn const_graph(outer_iters: usize) -> Self {
        AblationVariant {
            name: "const_graph".into(),
            variant: Variant::ConstGraph,
            outer_iters,
        }
    }

    pub fn no_iter() -> Self {
        AblationVariant {
            name: "no_iter".into(),
            variant: Variant::NoIter,
            outer_iters: 0,
        }
    }

    pub fn n_iter(n: usize) -> Self {
        AblationVariant {
            name: format!("n_iter_{n}"),
            variant: Variant::Full,
            outer_iters: n,
        }
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Accepts `full_3iter`, `const_graph`, `no_iter` and `n_iter_<n>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full_3iter" => Ok(Self::full_3iter()),
            "const_graph" => Ok(Self::const_graph(3)),
            "no_iter" => Ok(Self::no_iter()),
            _ => s
                .strip_prefix("n_iter_")
                .and_then(|n| n.parse().ok())
                .map(Self::n_iter)
                .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`"))),
        }
    }

    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        RunConfig {
            variant: self.variant,
            outer_iters: self.outer_iters,
            ..cfg.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, name: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.variant == name).map(|r| &r.report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>9}  {:>7}\n",
            "variant", "mrr", "r@1", "r@5", "r@10", "mean_rank", "ndcg"
        );
        for r in &self.rows {
            let m = &r.report;
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}  {:>9.3}  {:>7.4}",
                r.variant, m.mrr, m.r_at_1, m.r_at_5, m.r_at_10, m.mean_rank, m.ndcg
            );
        }
        out
    }
}

/// Trains every variant from the same seed on `train` and evaluates on `eval`.
pub fn run_ablation<T: Scalar>(
    train: &DialogDataset,
    eval: &DialogDataset,
    cfg: &RunConfig,
    variants: &[AblationVariant],
) -> Result<AblationTable> {
    let train = prepare_dataset(train, cfg.mode, cfg.seed);
    let eval = prepare_dataset(eval, cfg.mode, cfg.seed);
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let vcfg = v.apply(cfg);
        let outcome = train_split::<T>(&train, None, &vcfg, |_| {})?;
        let report = evaluate(&outcome.model, &eval, cfg.mode)?.summary();
        log::info!("{}: mrr {:.4}", v.name, report.mrr);
        rows.push(AblationRow {
            variant: v.name.clone(),
            report,
        });
    }
    Ok(AblationTable { rows })
}
