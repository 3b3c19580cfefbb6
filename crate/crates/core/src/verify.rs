//! Self-check suites: finite-difference gradients and exact MRF inference.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, GruVars, Tape, Var};
use crate::config::RunConfig;
use crate::data::{example_view, gen_synthetic, Mode, SyntheticSpec};
use crate::encoder::{build_vocab, dataset_tokens, encode_example};
use crate::error::{Error, Result};
use crate::gnn::{link_weights, DialogGraph, GnnParams, Variant};
use crate::model::Model;
use crate::mrf::{self, random, BpConfig, EmConfig, MStepConfig};
use crate::tensor::Tensor;

pub const PRIMITIVE_TOL: f64 = 1e-6;
pub const COMPOSITE_TOL: f64 = 1e-4;
pub const SEEDS: u64 = 10;
/// Parameter spread of end-to-end instances relative to the training init
/// (embeddings excluded).
pub const END_TO_END_SCALE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Mrf,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        match s {
            "gradcheck" => Ok(Suite::Gradcheck),
            "mrf" => Ok(Suite::Mrf),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!("unknown suite `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Gradcheck | Suite::All) {
        out.extend(gradcheck_suite());
    }
    if matches!(suite, Suite::Mrf | Suite::All) {
        out.extend(mrf_suite());
    }
    out
}

pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  result  {:>7}  detail\n", "check", "secs");
    for r in results {
        out.push_str(&format!(
            "{:<width$}  {:<6}  {:>7.2}  {}\n",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    out
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape, values).expect("sized")
}

/// Values bounded away from zero, so no ReLU sits on its kink.
fn off_kink(rng: &mut ChaCha8Rng, n: usize) -> Tensor<f64> {
    let values = (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(1e-2..1.0);
            if rng.gen_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::vector(values)
}

/// Scalar `<v, c>` for a fixed random `c`, so every output coordinate matters.
fn project(tape: &mut Tape<f64>, v: Var, c: &[f64]) -> Result<Var> {
    let c = tape.constant_vec(c.to_vec());
    tape.dot(v, c)
}

fn gru_vars(v: &[Var]) -> GruVars {
    GruVars {
        w_z: v[0],
        u_z: v[1],
        b_z: v[2],
        w_r: v[3],
        u_r: v[4],
        b_r: v[5],
        w_h: v[6],
        u_h: v[7],
        b_h: v[8],
    }
}

pub const PRIMITIVES: [&str; 17] = [
    "linear",
    "add",
    "sub",
    "mul",
    "affine",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "dot",
    "sum",
    "stack",
    "concat",
    "weighted_sum",
    "row",
    "gru_cell",
    "cross_entropy",
];

/// Gradient check of one primitive operation at the instance drawn from `seed`.
pub fn check_primitive(op: &str, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = &c;
    match op {
        "linear" => {
            let inputs = vec![
                rand_tensor(&mut rng, vec![3], 1.0),
                rand_tensor(&mut rng, vec![4, 3], 1.0),
                rand_tensor(&mut rng, vec![4], 1.0),
            ];
            grad_check(
                |t, v| {
                    let y = t.linear(v[0], v[1], v[2])?;
                    project(t, y, &c[..4])
                },
                &inputs,
            )
        }
        "add" | "sub" | "mul" => {
            let inputs = vec![rand_tensor(&mut rng, vec![5], 2.0), rand_tensor(&mut rng, vec![5], 2.0)];
            grad_check(
                |t, v| {
                    let y = match op {
                        "add" => t.add(v[0], v[1])?,
                        "sub" => t.sub(v[0], v[1])?,
                        _ => t.mul(v[0], v[1])?,
                    };
                    project(t, y, &c[..5])
                },
                &inputs,
            )
        }
        "affine" => {
            let inputs = vec![rand_tensor(&mut rng, vec![5], 2.0)];
            grad_check(
                |t, v| {
                    let y = t.affine(v[0], 1.7, -0.3);
                    project(t, y, &c[..5])
                },
                &inputs,
            )
        }
        "relu" | "sigmoid" | "tanh" => {
            let inputs = vec![if op == "relu" {
                off_kink(&mut rng, 6)
            } else {
                rand_tensor(&mut rng, vec![6], 3.0)
            }];
            grad_check(
                |t, v| {
                    let y = match op {
                        "relu" => t.relu(v[0]),
                        "sigmoid" => t.sigmoid(v[0]),
                        _ => t.tanh(v[0]),
                    };
                    project(t, y, &c[..6])
                },
                &inputs,
            )
        }
        "softmax" => {
            let inputs = vec![rand_tensor(&mut rng, vec![5], 2.0)];
            grad_check(
                |t, v| {
                    let y = t.softmax(v[0])?;
                    project(t, y, &c[..5])
                },
                &inputs,
            )
        }
        "dot" => {
            let inputs = vec![rand_tensor(&mut rng, vec![5], 2.0), rand_tensor(&mut rng, vec![5], 2.0)];
            grad_check(|t, v| t.dot(v[0], v[1]), &inputs)
        }
        "sum" => {
            let inputs = vec![rand_tensor(&mut rng, vec![5], 2.0)];
            grad_check(
                |t, v| {
                    let sq = t.mul(v[0], v[0])?;
                    Ok(t.sum(sq))
                },
                &inputs,
            )
        }
        "stack" => {
            let inputs: Vec<Tensor<f64>> = (0..3).map(|_| Tensor::scalar(rng.gen_range(-2.0..2.0))).collect();
            grad_check(
                |t, v| {
                    let y = t.stack(v)?;
                    project(t, y, &c[..3])
                },
                &inputs,
            )
        }
        "concat" => {
            let inputs = vec![rand_tensor(&mut rng, vec![2], 2.0), rand_tensor(&mut rng, vec![3], 2.0)];
            grad_check(
                |t, v| {
                    let y = t.concat(v)?;
                    project(t, y, &c[..5])
                },
                &inputs,
            )
        }
        "weighted_sum" => {
            let mut inputs = vec![rand_tensor(&mut rng, vec![3], 1.0)];
            inputs.extend((0..3).map(|_| rand_tensor(&mut rng, vec![4], 2.0)));
            grad_check(
                |t, v| {
                    let y = t.weighted_sum(v[0], &v[1..])?;
                    project(t, y, &c[..4])
                },
                &inputs,
            )
        }
        "row" => {
            let inputs = vec![rand_tensor(&mut rng, vec![5, 3], 2.0)];
            let idx = rng.gen_range(0..5);
            grad_check(
                |t, v| {
                    let y = t.row(v[0], idx)?;
                    project(t, y, &c[..3])
                },
                &inputs,
            )
        }
        "gru_cell" => {
            let d = 4;
            let mut inputs = vec![rand_tensor(&mut rng, vec![d], 1.0), rand_tensor(&mut rng, vec![d], 1.0)];
            for _ in 0..3 {
                inputs.push(rand_tensor(&mut rng, vec![d, d], 1.0));
                inputs.push(rand_tensor(&mut rng, vec![d, d], 1.0));
                inputs.push(rand_tensor(&mut rng, vec![d], 1.0));
            }
            grad_check(
                |t, v| {
                    let y = t.gru_cell(v[0], v[1], &gru_vars(&v[2..]))?;
                    project(t, y, &c[..d])
                },
                &inputs,
            )
        }
        "cross_entropy" => {
            let inputs = vec![rand_tensor(&mut rng, vec![6], 3.0)];
            let target = rng.gen_range(0..6);
            grad_check(|t, v| t.cross_entropy(v[0], target), &inputs)
        }
        other => Err(Error::Config(format!("unknown operation `{other}`"))),
    }
}

/// Link weights and their per-receiver softmax on a random 4-node graph.
pub fn check_link_weights(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, k) = (4, 3, 3);
    let gnn: GnnParams<f64> = GnnParams::init(&mut rng, d, k);
    let mut inputs: Vec<Tensor<f64>> = (0..n).map(|_| rand_tensor(&mut rng, vec![d], 1.0)).collect();
    for l in &gnn.link {
        inputs.push(l.w.clone());
        inputs.push(l.b.clone());
    }
    let c: Vec<f64> = (0..n * (n - 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    grad_check(
        |t, v| {
            let mut g = DialogGraph::new(v[..n].to_vec())?;
            let vars = crate::gnn::GnnVars {
                link: [
                    crate::nn::LinearVars { w: v[n], b: v[n + 1] },
                    crate::nn::LinearVars { w: v[n + 2], b: v[n + 3] },
                ],
                gru: gru_vars(&[v[0]; 9]),
            };
            link_weights(t, &mut g, &vars)?;
            let norm = g.normalized.as_ref().expect("computed");
            let mut parts = Vec::with_capacity(n);
            for (i, &w) in norm.iter().enumerate() {
                parts.push(project(t, w, &c[i * (n - 1)..(i + 1) * (n - 1)])?);
            }
            let parts = t.stack(&parts)?;
            Ok(t.sum(parts))
        },
        &inputs,
    )
}

/// Cross-entropy loss of a small model through encoding, EM inference and scoring,
/// checked against every model parameter.
pub fn check_end_to_end(seed: u64, variant: Variant, with_context: bool) -> Result<GradCheckReport> {
    let spec = SyntheticSpec {
        n_dialogs: 1,
        rounds: 3,
        k_options: 4,
        seed,
        ..SyntheticSpec::default()
    };
    let mut ds = gen_synthetic(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    if with_context {
        ds.dialogs[0].context_feature = Some((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let vocab = build_vocab(&dataset_tokens(&ds), 1)?;
    let cfg = RunConfig {
        dim: 4,
        fc_dim: 3,
        outer_iters: 2,
        inner_steps: 2,
        variant,
        seed,
        ..RunConfig::default()
    };
    let mut model: Model<f64> = Model::init(vocab, cfg, with_context.then_some(3));
    // At the default init scale most gradients are around 1e-9, where the
    // central difference is dominated by rounding. Doubling the spread keeps
    // the instance in a regime where the comparison means something. The
    // embedding table already starts at unit scale and is left alone.
    for (name, t) in model.named_tensors_mut() {
        if name == crate::model::EMBEDDING {
            continue;
        }
        for v in t.values_mut() {
            *v *= END_TO_END_SCALE;
        }
    }
    let round = rng.gen_range(1..=3);
    let ex = encode_example(&example_view(&ds, 0, round, Mode::Visdial)?, &model.vocab, None);
    let inputs: Vec<Tensor<f64>> = model.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    grad_check(
        |t, v| {
            let vars = model.vars_from(v.to_vec());
            Ok(model.forward(t, &vars, &ex)?.loss)
        },
        &inputs,
    )
}

fn seeds_check(
    name: &str,
    tol: f64,
    f: impl Fn(u64) -> Result<GradCheckReport>,
) -> CheckResult {
    timed(name, || {
        let mut worst: f64 = 0.0;
        let mut kinks = 0;
        for seed in 0..SEEDS {
            let r = f(seed)?;
            if let Some((i, c)) = r.non_finite {
                return Ok((false, format!("seed {seed}: non-finite at input {i} coordinate {c}")));
            }
            worst = worst.max(r.max_rel_error);
            kinks += r.skipped_kinks;
        }
        Ok((
            worst < tol,
            format!("max rel err {worst:.2e} (tol {tol:.0e}, {SEEDS} seeds, {kinks} kink coords skipped)"),
        ))
    })
}

pub fn gradcheck_suite() -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = PRIMITIVES
        .iter()
        .map(|op| seeds_check(op, PRIMITIVE_TOL, |s| check_primitive(op, s)))
        .collect();
    out.push(seeds_check("gnn.link_weights", COMPOSITE_TOL, check_link_weights));
    out.push(seeds_check("model.em_infer", COMPOSITE_TOL, |s| {
        check_end_to_end(s, Variant::Full, false)
    }));
    out.push(seeds_check("model.const_graph", COMPOSITE_TOL, |s| {
        check_end_to_end(s, Variant::ConstGraph, false)
    }));
    out.push(seeds_check("model.context_fusion", COMPOSITE_TOL, |s| {
        check_end_to_end(s, Variant::Full, true)
    }));
    out
}

/// Max-product decoding against enumeration on random trees.
pub fn check_bp_trees(instances: usize, seed: u64) -> Result<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matched = 0;
    for _ in 0..instances {
        let model: mrf::DiscreteMrf<f64> = random::random_tree(&mut rng, 6, 4);
        let obs = random::random_observation(&mut rng, &model, 0.3);
        let bp = mrf::max_product_bp(&model, &obs, &BpConfig::default())?;
        if bp.assignment.states == mrf::map_bruteforce(&model, &obs)?.states {
            matched += 1;
        }
    }
    Ok((matched, instances))
}

/// Largest drop of the EM surrogate objective between consecutive outer iterations.
pub fn check_em_monotone(instances: usize, outer_iters: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_drop: f64 = 0.0;
    for _ in 0..instances {
        let model: mrf::DiscreteMrf<f64> = random::random_graph(&mut rng, 5, 3, 0.6);
        let obs = random::random_observation(&mut rng, &model, 0.5);
        let cfg = EmConfig {
            outer_iters,
            mstep: MStepConfig {
                steps: 10,
                ..MStepConfig::default()
            },
            ..EmConfig::default()
        };
        let fit = mrf::em_fit(&model, &obs, &cfg)?;
        for w in fit.objective_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    Ok(worst_drop)
}

pub fn mrf_suite() -> Vec<CheckResult> {
    vec![
        timed("mrf.bp_trees", || {
            let (ok, n) = check_bp_trees(100, 0)?;
            Ok((ok == n, format!("{ok}/{n} random trees decode the exact MAP")))
        }),
        timed("mrf.joint_normalized", || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let model: mrf::DiscreteMrf<f64> = random::random_graph(&mut rng, 5, 4, 0.5);
                let table = mrf::joint_prob_bruteforce(&model)?;
                worst = worst.max((table.probs.iter().sum::<f64>() - 1.0).abs());
            }
            Ok((worst <= 1e-12, format!("max |sum - 1| = {worst:.1e} over 50 models")))
        }),
        timed("mrf.mstep_monotone", || {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let model: mrf::DiscreteMrf<f64> = random::random_graph(&mut rng, 4, 3, 0.7);
                let data = mrf::sample_bruteforce(&model, 1, &mut rng)?;
                let fit = mrf::fit_weights(&model, &data, &MStepConfig::default())?;
                for w in fit.trace.windows(2) {
                    worst = worst.max(w[0] - w[1]);
                }
            }
            Ok((worst <= 1e-9, format!("largest per-step decrease {worst:.1e} over 20 instances")))
        }),
        timed("mrf.em_monotone", || {
            let drop = check_em_monotone(20, 10, 3)?;
            Ok((drop <= 1e-9, format!("largest objective decrease {drop:.1e} over 20 instances")))
        }),
    ]
}
