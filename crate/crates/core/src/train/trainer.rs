use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, LrSchedule, OptimizerState};
use super::metrics::{compute_metrics, EvalReport, MetricsReport, RankedExample};
use super::structure::StructureSample;
use crate::config::RunConfig;
use crate::data::{example_index, example_view, to_visdialq, DialogDataset, Mode};
use crate::encoder::{build_vocab, dataset_tokens, encode_example, EncodedExample, Vocabulary};
use crate::error::{Error, Result};
use crate::gnn::{gt_rank, ranking};
use crate::model::Model;
use crate::scalar::Scalar;

/// Fraction of dialogs held out for validation, taken from the end.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub log: Vec<EpochLog>,
}

/// Applies the next-question relabeling in `visdialq` mode.
pub fn prepare_dataset(ds: &DialogDataset, mode: Mode, seed: u64) -> DialogDataset {
    match mode {
        Mode::Visdial => ds.clone(),
        Mode::Visdialq => to_visdialq(ds, seed).dataset,
    }
}

pub fn encode_dataset(
    ds: &DialogDataset,
    mode: Mode,
    vocab: &Vocabulary,
    max_options: Option<usize>,
) -> Result<Vec<EncodedExample>> {
    example_index(ds)
        .into_iter()
        .map(|(d, r)| Ok(encode_example(&example_view(ds, d, r, mode)?, vocab, max_options)))
        .collect()
}

/// Splits off the validation tail and trains on the rest.
pub fn train<T: Scalar>(ds: &DialogDataset, cfg: &RunConfig) -> Result<TrainOutcome<T>> {
    let prepared = prepare_dataset(ds, cfg.mode, cfg.seed);
    let (head, tail) = prepared.split_tail(VALIDATION_FRACTION);
    let val = (!tail.dialogs.is_empty()).then_some(&tail);
    train_split(&head, val, cfg, |_| {})
}

/// Trains on an already prepared dataset. `on_epoch` sees every log entry as
/// soon as it exists, starting with the untrained model as epoch 0.
pub fn train_split<T: Scalar>(
    train: &DialogDataset,
    val: Option<&DialogDataset>,
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let vocab = build_vocab(&dataset_tokens(train), 1)?;
    let context_dim = train.dialogs.first().and_then(|d| d.context_feature.as_ref().map(Vec::len));
    let mut model = Model::<T>::init(vocab, cfg.clone(), context_dim);
    let examples = encode_dataset(train, cfg.mode, &model.vocab, Some(cfg.k_options))?;
    if examples.is_empty() {
        return Err(Error::Invalid("training set has no examples".into()));
    }
    let val_examples = match val {
        Some(v) => Some(encode_dataset(v, cfg.mode, &model.vocab, Some(cfg.k_options))?),
        None => None,
    };
    let val_metrics = |m: &Model<T>| -> Result<Option<MetricsReport>> {
        match &val_examples {
            Some(v) if !v.is_empty() => Ok(Some(compute_metrics(&rank_examples(m, v)?)?)),
            _ => Ok(None),
        }
    };

    let n_batches = examples.len().div_ceil(cfg.batch_size);
    let schedule = LrSchedule {
        base: cfg.lr_base,
        floor: cfg.lr_floor,
        total_steps: (cfg.epochs * n_batches) as u64,
    };
    let mut st = OptimizerState::<T>::new(&model.param_sizes(), schedule);

    let initial: Vec<T> = examples.par_iter().map(|ex| model.loss(ex)).collect::<Result<_>>()?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: mean(&initial),
        lr: schedule.lr(0),
        val: val_metrics(&model)?,
    }];
    on_epoch(&log[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(examples.len());
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(T, Vec<Vec<T>>)> = batch
                .par_iter()
                .map(|&i| model.loss_and_grads(&examples[i]))
                .collect::<Result<_>>()?;
            let scale = T::one() / T::lit(batch.len() as f64);
            let mut grads: Vec<Vec<T>> = model.param_sizes().iter().map(|&n| vec![T::zero(); n]).collect();
            for (loss, g) in &results {
                losses.push(*loss);
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, &x) in acc.iter_mut().zip(gi) {
                        *a += x;
                    }
                }
            }
            for g in grads.iter_mut().flatten() {
                *g *= scale;
            }
            let lr = st.schedule.lr(st.step);
            adam_step(&mut model.named_tensors_mut(), &grads, &mut st)?;
            log::trace!("step {} lr {lr:.3e}", st.step);
        }
        let entry = EpochLog {
            epoch,
            train_loss: mean(&losses),
            lr: st.schedule.lr(st.step.saturating_sub(1)),
            val: val_metrics(&model)?,
        };
        log::info!("epoch {epoch}: train loss {:.5}", entry.train_loss);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}

fn mean<T: Scalar>(xs: &[T]) -> f64 {
    xs.iter().map(|x| x.as_f64()).sum::<f64>() / xs.len().max(1) as f64
}

fn ranked(scores: &[f64], gt: usize, relevance: Option<&[f64]>) -> RankedExample {
    RankedExample {
        rank: gt_rank(scores, gt),
        ranked_relevance: relevance.map(|rel| ranking(scores).into_iter().map(|i| rel[i]).collect()),
    }
}

pub fn rank_examples<T: Scalar>(model: &Model<T>, examples: &[EncodedExample]) -> Result<Vec<RankedExample>> {
    examples
        .par_iter()
        .map(|ex| {
            let inf = model.infer(ex, false)?;
            let scores: Vec<f64> = inf.scores.iter().map(|s| s.as_f64()).collect();
            Ok(ranked(&scores, ex.gt_index, ex.relevance.as_deref()))
        })
        .collect()
}

/// Evaluates a model on a prepared dataset.
pub fn evaluate<T: Scalar>(model: &Model<T>, ds: &DialogDataset, mode: Mode) -> Result<EvalReport> {
    let examples = encode_dataset(ds, mode, &model.vocab, Some(model.config.k_options))?;
    let ranked = rank_examples(model, &examples)?;
    let rounds: Vec<usize> = examples.iter().map(|e| e.round).collect();
    EvalReport::build(&ranked, &rounds)
}

/// Evaluates externally produced option scores, one list per example in dataset order.
pub fn evaluate_scores(ds: &DialogDataset, scores: &[Vec<f64>]) -> Result<EvalReport> {
    let index = example_index(ds);
    if index.len() != scores.len() {
        return Err(Error::Invalid(format!(
            "{} score lists for {} examples",
            scores.len(),
            index.len()
        )));
    }
    let mut ranked_all = Vec::with_capacity(index.len());
    let mut rounds = Vec::with_capacity(index.len());
    for (&(d, r), s) in index.iter().zip(scores) {
        let round = &ds.dialogs[d].rounds[r - 1];
        if s.len() != round.options.len() {
            return Err(Error::Invalid(format!("dialog {d} round {r}: score count differs from options")));
        }
        ranked_all.push(ranked(s, round.gt_index, round.relevance.as_deref()));
        rounds.push(r);
    }
    EvalReport::build(&ranked_all, &rounds)
}

/// Incoming weights of each query node against its planted dependencies.
/// Rounds without planted dependencies are skipped.
pub fn structure_samples<T: Scalar>(model: &Model<T>, ds: &DialogDataset, mode: Mode) -> Result<Vec<StructureSample>> {
    let index = example_index(ds);
    index
        .par_iter()
        .filter_map(|&(d, r)| {
            let deps = ds.dialogs[d].rounds[r - 1].planted_deps.as_ref()?;
            Some((d, r, deps))
        })
        .map(|(d, r, deps)| {
            let ex = encode_example(&example_view(ds, d, r, mode)?, &model.vocab, Some(model.config.k_options));
            let inf = model.infer(&ex, true)?;
            let w = inf.weights.expect("weights requested");
            let q = ex.node_count() - 1;
            Ok(StructureSample {
                dialog: d,
                scores: w.normalized[q][..q].to_vec(),
                labels: (0..q).map(|j| deps.contains(&j)).collect(),
            })
        })
        .collect()
}
