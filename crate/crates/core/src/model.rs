//! Encoder and graph network combined into one trainable retrieval model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{GruVars, Tape, Var};
use crate::config::RunConfig;
use crate::encoder::{encode_sequence, init_node_states, EncodedExample, EncoderParams, EncoderVars, Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::nn::LinearVars;
use crate::gnn::{em_infer, link_weights, score_options, DialogGraph, GnnParams, GnnVars, WeightMatrices};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const EMBEDDING: &str = "encoder.embedding";

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub vocab: Vocabulary,
    pub config: RunConfig,
    pub encoder: EncoderParams<T>,
    pub gnn: GnnParams<T>,
}

pub struct ModelVars {
    pub encoder: EncoderVars,
    pub gnn: GnnVars,
    /// Leaves in [`Model::named_tensors`] order.
    pub params: Vec<Var>,
}

pub struct Forward {
    pub graph: DialogGraph,
    pub scores: Var,
    pub probs: Var,
    pub loss: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference<T> {
    pub scores: Vec<T>,
    pub probs: Vec<T>,
    pub weights: Option<WeightMatrices>,
}

impl<T: Scalar> Model<T> {
    pub fn init(vocab: Vocabulary, config: RunConfig, context_dim: Option<usize>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = EncoderParams::init(&mut rng, vocab.len(), config.dim, context_dim);
        let gnn = GnnParams::init(&mut rng, config.dim, config.fc_dim);
        Model {
            vocab,
            config,
            encoder,
            gnn,
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![(EMBEDDING.to_string(), &self.encoder.embedding)];
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("encoder.gru{l}.{n}"), t)));
        }
        if let Some(f) = &self.encoder.fusion {
            out.extend(f.tensors().into_iter().map(|(n, t)| (format!("encoder.fusion.{n}"), t)));
        }
        for (l, link) in self.gnn.link.iter().enumerate() {
            out.extend(link.tensors().into_iter().map(|(n, t)| (format!("gnn.link{l}.{n}"), t)));
        }
        out.extend(self.gnn.gru.tensors().into_iter().map(|(n, t)| (format!("gnn.gru.{n}"), t)));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![(EMBEDDING.to_string(), &mut self.encoder.embedding)];
        for (l, layer) in self.encoder.layers.iter_mut().enumerate() {
            out.extend(layer.tensors_mut().into_iter().map(|(n, t)| (format!("encoder.gru{l}.{n}"), t)));
        }
        if let Some(f) = &mut self.encoder.fusion {
            out.extend(f.tensors_mut().into_iter().map(|(n, t)| (format!("encoder.fusion.{n}"), t)));
        }
        for (l, link) in self.gnn.link.iter_mut().enumerate() {
            out.extend(link.tensors_mut().into_iter().map(|(n, t)| (format!("gnn.link{l}.{n}"), t)));
        }
        out.extend(self.gnn.gru.tensors_mut().into_iter().map(|(n, t)| (format!("gnn.gru.{n}"), t)));
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.named_tensors().iter().map(|(_, t)| t.len()).collect()
    }

    pub fn register(&self, tape: &mut Tape<T>, requires_grad: bool) -> ModelVars {
        let leaves: Vec<Var> = self
            .named_tensors()
            .into_iter()
            .map(|(_, t)| tape.leaf(t, requires_grad))
            .collect();
        self.vars_from(leaves)
    }

    /// Wraps leaves given in [`Model::named_tensors`] order.
    pub fn vars_from(&self, params: Vec<Var>) -> ModelVars {
        let it = &mut params.iter().copied();
        let embedding = take(it);
        let layers = [take_gru(it), take_gru(it)];
        let fusion = self.encoder.fusion.as_ref().map(|_| take_linear(it));
        let link = [take_linear(it), take_linear(it)];
        let gru_update = take_gru(it);
        ModelVars {
            encoder: EncoderVars {
                embedding,
                layers,
                fusion,
                dim: self.encoder.dim(),
            },
            gnn: GnnVars {
                link,
                gru: gru_update,
            },
            params,
        }
    }

    fn check_context(&self, ex: &EncodedExample) -> Result<()> {
        let want = self.encoder.context_dim();
        let got = ex.context.as_ref().map(Vec::len);
        if want != got {
            return Err(Error::Invalid(format!(
                "dialog {} has context length {got:?} but the model expects {want:?}",
                ex.dialog
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<T>, vars: &ModelVars, ex: &EncodedExample) -> Result<Forward> {
        self.check_context(ex)?;
        let mut graph = init_node_states(tape, &vars.encoder, ex)?;
        em_infer(tape, &mut graph, &vars.gnn, &self.config.inference())?;
        let mut options = Vec::with_capacity(ex.options.len());
        for o in &ex.options {
            options.push(encode_sequence(tape, &vars.encoder, o)?);
        }
        let (scores, probs) = score_options(tape, graph.query_state(), &options)?;
        let loss = tape.cross_entropy(scores, ex.gt_index)?;
        Ok(Forward {
            graph,
            scores,
            probs,
            loss,
        })
    }

    /// Cross-entropy loss of one example and its gradient per named tensor.
    pub fn loss_and_grads(&self, ex: &EncodedExample) -> Result<(T, Vec<Vec<T>>)> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, true);
        let fwd = self.forward(&mut tape, &vars, ex)?;
        tape.backward(fwd.loss)?;
        let dim = self.encoder.dim();
        let grads = vars
            .params
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let mut g = tape.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); tape.value(v).len()]);
                if k == 0 {
                    // The padding row stays at zero.
                    g[PAD as usize * dim..(PAD as usize + 1) * dim].fill(T::zero());
                }
                g
            })
            .collect();
        Ok((tape.scalar(fwd.loss), grads))
    }

    pub fn loss(&self, ex: &EncodedExample) -> Result<T> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let fwd = self.forward(&mut tape, &vars, ex)?;
        Ok(tape.scalar(fwd.loss))
    }

    /// Scores, probabilities and final edge weights. With `with_weights`, a
    /// graph that never ran an M-step gets link weights computed on its final
    /// states for display only.
    pub fn infer(&self, ex: &EncodedExample, with_weights: bool) -> Result<Inference<T>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let mut fwd = self.forward(&mut tape, &vars, ex)?;
        if with_weights && fwd.graph.normalized.is_none() {
            link_weights(&mut tape, &mut fwd.graph, &vars.gnn)?;
        }
        Ok(Inference {
            scores: tape.value(fwd.scores).to_vec(),
            probs: tape.value(fwd.probs).to_vec(),
            weights: if with_weights { fwd.graph.weights(&tape) } else { None },
        })
    }

    /// Rebuilds a model from named tensors. Missing, unknown or misshaped
    /// tensors are rejected.
    pub fn from_named(vocab: Vocabulary, config: RunConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut map: std::collections::BTreeMap<String, Tensor<T>> = std::collections::BTreeMap::new();
        for (name, t) in tensors {
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
            }
        }
        let context_dim = match map.get("encoder.fusion.w") {
            Some(w) if w.shape().len() == 2 && w.shape()[1] > config.dim => Some(w.shape()[1] - config.dim),
            Some(w) => {
                return Err(Error::Checkpoint(format!(
                    "tensor `encoder.fusion.w` has shape {:?}",
                    w.shape()
                )))
            }
            None => None,
        };
        let mut model = Model::init(vocab, config, context_dim);
        for (name, slot) in model.named_tensors_mut() {
            let t = map
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("tensor `{name}` has non-finite values")));
            }
            *slot = t;
        }
        if let Some(name) = map.keys().next() {
            return Err(Error::Checkpoint(format!("unknown tensor `{name}`")));
        }
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let tensors = self.named_tensors().into_iter().map(|(n, t)| (n, t.cast())).collect();
        Model::from_named(self.vocab.clone(), self.config.clone(), tensors).expect("same layout")
    }
}

fn take(it: &mut impl Iterator<Item = Var>) -> Var {
    it.next().expect("one leaf per named tensor")
}

fn take_linear(it: &mut impl Iterator<Item = Var>) -> LinearVars {
    LinearVars { w: take(it), b: take(it) }
}

fn take_gru(it: &mut impl Iterator<Item = Var>) -> GruVars {
    GruVars {
        w_z: take(it),
        u_z: take(it),
        b_z: take(it),
        w_r: take(it),
        u_r: take(it),
        b_r: take(it),
        w_h: take(it),
        u_h: take(it),
        b_h: take(it),
    }
}
