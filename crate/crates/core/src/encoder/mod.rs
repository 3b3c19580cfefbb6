//! Text preprocessing, sequence encoding and node-state initialization.

mod tokenize;
mod vocab;

pub use tokenize::{tokenize, MAX_ANSWER_TOKENS, MAX_CAPTION_TOKENS, MAX_QUESTION_TOKENS, SEPARATOR};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use rand::Rng;

use crate::autodiff::{GruVars, Tape, Var};
use crate::data::{DialogDataset, ExampleView, HistoryNode, QuerySource};
use crate::error::{Error, Result};
use crate::gnn::DialogGraph;
use crate::nn::{GruParams, LinearParams, LinearVars};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Embedding table, two stacked GRU layers and the optional context fusion layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub embedding: Tensor<T>,
    pub layers: [GruParams<T>; 2],
    pub fusion: Option<LinearParams<T>>,
}

#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub embedding: Var,
    pub layers: [GruVars; 2],
    pub fusion: Option<LinearVars>,
    pub dim: usize,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, vocab_size: usize, dim: usize, context_dim: Option<usize>) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        // Unit-scale embeddings; the 1/sqrt(d) bound left token inputs too small to train.
        let mut embedding = Tensor::uniform(vec![vocab_size, dim], 1.0, rng);
        embedding.values_mut()[..dim].fill(T::zero());
        let layers = [
            GruParams::init(rng, dim, dim, bound),
            GruParams::init(rng, dim, dim, bound),
        ];
        let fusion = context_dim.map(|c| LinearParams::init(rng, dim + c, dim, bound));
        EncoderParams {
            embedding,
            layers,
            fusion,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.shape()[1]
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.fusion.as_ref().map(|f| f.w.shape()[1] - self.dim())
    }

    pub fn register(&self, tape: &mut Tape<T>, requires_grad: bool) -> EncoderVars {
        EncoderVars {
            embedding: tape.leaf(&self.embedding, requires_grad),
            layers: [
                self.layers[0].register(tape, requires_grad),
                self.layers[1].register(tape, requires_grad),
            ],
            fusion: self.fusion.as_ref().map(|f| f.register(tape, requires_grad)),
            dim: self.dim(),
        }
    }
}

/// Final top-layer state after reading `ids`. Padding ids are skipped, so an
/// empty or all-padding sequence gives the zero vector.
pub fn encode_sequence<T: Scalar>(tape: &mut Tape<T>, p: &EncoderVars, ids: &[u32]) -> Result<Var> {
    let vocab_size = tape.shape(p.embedding)[0];
    let mut h0 = tape.zeros(p.dim);
    let mut h1 = h0;
    for &id in ids {
        if id as usize >= vocab_size {
            return Err(Error::Index {
                what: "token id",
                index: id as usize,
                size: vocab_size,
            });
        }
        if id == PAD {
            continue;
        }
        let x = tape.row(p.embedding, id as usize)?;
        h0 = tape.gru_cell(h0, x, &p.layers[0])?;
        h1 = tape.gru_cell(h1, h0, &p.layers[1])?;
    }
    Ok(h1)
}

/// `relu(fc([a; ctx]))` when a context vector is given, `a` otherwise.
pub fn fuse<T: Scalar>(tape: &mut Tape<T>, p: &EncoderVars, a: Var, ctx: Option<Var>) -> Result<Var> {
    match (ctx, &p.fusion) {
        (None, _) => Ok(a),
        (Some(c), Some(f)) => {
            let joined = tape.concat(&[a, c])?;
            let y = f.apply(tape, joined)?;
            Ok(tape.relu(y))
        }
        (Some(c), None) => Err(Error::Shape {
            op: "fuse",
            left: vec![p.dim],
            right: tape.shape(c).to_vec(),
        }),
    }
}

/// Token ids of one example, ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub dialog: usize,
    pub round: usize,
    pub caption: Vec<u32>,
    pub history: Vec<Vec<u32>>,
    /// `None` seeds the query node from the caption.
    pub query: Option<Vec<u32>>,
    pub options: Vec<Vec<u32>>,
    pub gt_index: usize,
    pub relevance: Option<Vec<f64>>,
    pub context: Option<Vec<f64>>,
    /// Dataset option index of each kept option.
    pub option_ids: Vec<usize>,
}

impl EncodedExample {
    pub fn node_count(&self) -> usize {
        self.history.len() + 2
    }
}

fn history_tokens(node: &HistoryNode<'_>) -> Vec<String> {
    match node.answer {
        Some(a) => {
            let mut toks = tokenize(node.question, MAX_QUESTION_TOKENS);
            toks.push(SEPARATOR.to_string());
            toks.extend(tokenize(a, MAX_ANSWER_TOKENS));
            toks
        }
        None => tokenize(node.question, MAX_QUESTION_TOKENS + 1 + MAX_ANSWER_TOKENS),
    }
}

/// Every token sequence the encoder reads from a dataset, for vocabulary building.
pub fn dataset_tokens(ds: &DialogDataset) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for d in &ds.dialogs {
        out.push(tokenize(&d.caption, MAX_CAPTION_TOKENS));
        for r in &d.rounds {
            out.push(tokenize(&r.question, MAX_QUESTION_TOKENS + 1 + MAX_ANSWER_TOKENS));
            out.push(tokenize(&r.answer, MAX_ANSWER_TOKENS));
            for o in &r.options {
                out.push(tokenize(o, MAX_ANSWER_TOKENS));
            }
        }
    }
    out
}

/// Tokenizes a view. With `max_options`, keeps the ground truth plus the
/// first other options up to that count.
pub fn encode_example(view: &ExampleView<'_>, vocab: &Vocabulary, max_options: Option<usize>) -> EncodedExample {
    let ids = |text: &str, max: usize| vocab.ids(&tokenize(text, max));
    let keep = max_options.unwrap_or(usize::MAX).max(1);
    let mut option_ids: Vec<usize> = (0..view.options.len())
        .filter(|&i| i != view.gt_index)
        .take(keep - 1)
        .collect();
    option_ids.push(view.gt_index);
    option_ids.sort_unstable();
    let gt_index = option_ids.iter().position(|&i| i == view.gt_index).expect("gt kept");
    EncodedExample {
        dialog: view.dialog,
        round: view.round,
        caption: ids(view.caption, MAX_CAPTION_TOKENS),
        history: view.history.iter().map(|h| vocab.ids(&history_tokens(h))).collect(),
        query: match view.query {
            QuerySource::Question(q) => Some(ids(q, MAX_QUESTION_TOKENS)),
            QuerySource::Caption => None,
        },
        options: option_ids.iter().map(|&i| ids(&view.options[i], MAX_ANSWER_TOKENS)).collect(),
        gt_index,
        relevance: view.relevance.map(|r| option_ids.iter().map(|&i| r[i]).collect()),
        context: view.context.map(|c| c.to_vec()),
        option_ids,
    }
}

/// Builds the dialog graph: caption, history nodes, then the unobserved query node.
pub fn init_node_states<T: Scalar>(tape: &mut Tape<T>, p: &EncoderVars, ex: &EncodedExample) -> Result<DialogGraph> {
    let ctx = ex
        .context
        .as_ref()
        .map(|c| tape.constant_vec(c.iter().map(|&x| T::lit(x)).collect()));
    let mut states = Vec::with_capacity(ex.node_count());
    let caption = encode_sequence(tape, p, &ex.caption)?;
    let caption = fuse(tape, p, caption, ctx)?;
    states.push(caption);
    for h in &ex.history {
        let e = encode_sequence(tape, p, h)?;
        states.push(fuse(tape, p, e, ctx)?);
    }
    let query = match &ex.query {
        Some(q) => {
            let e = encode_sequence(tape, p, q)?;
            fuse(tape, p, e, ctx)?
        }
        None => caption,
    };
    states.push(query);
    DialogGraph::new(states)
}
