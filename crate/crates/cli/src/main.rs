use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use emgnn::checkpoint;
use emgnn::data::{
    example_view, gen_synthetic, load_dataset, oracle_scores, save_dataset, write_atomic, Mode, Oracle, SyntheticSpec,
};
use emgnn::encoder::encode_example;
use emgnn::gnn::{ranking, structure_dot, structure_json, Variant};
use emgnn::train::{
    evaluate, evaluate_scores, permutation_null, prepare_dataset, quantile, run_ablation, structure_auc,
    structure_samples, train_split, AblationVariant, EpochLog, VALIDATION_FRACTION,
};
use emgnn::verify::{format_table, run_suite, Suite};
use emgnn::{Error, RunConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "emgnn", version, about = "Structure inference with EM graph networks on dialog retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a per-epoch metrics log.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or a reference oracle) and write a metrics report.
    Eval(EvalArgs),
    /// Rank the options of one round and export the inferred structure.
    Infer(InferArgs),
    /// Run the gradient and MRF self-check suites.
    Verify(VerifyArgs),
    /// Generate a synthetic dataset with planted dependencies.
    GenSynthetic(GenArgs),
    /// Train several ablation variants and compare them on held-out data.
    Ablate(AblateArgs),
    /// Score learned edge weights against planted dependencies.
    Structure(StructureArgs),
}

/// Run settings. Values come from the built-in defaults, then the config
/// file, then `EMGNN_SEED`, then flags given on the command line.
#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON run configuration; every key is required.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = RunConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = RunConfig::default().fc_dim)]
    fc_dim: usize,
    #[arg(long, default_value_t = RunConfig::default().outer_iters)]
    outer_iters: usize,
    #[arg(long, default_value_t = RunConfig::default().inner_steps)]
    inner_steps: usize,
    /// full | const_graph | no_iter
    #[arg(long, default_value_t = RunConfig::default().variant.name().to_string())]
    variant: String,
    #[arg(long, default_value_t = RunConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = RunConfig::default().lr_base)]
    lr_base: f64,
    #[arg(long, default_value_t = RunConfig::default().lr_floor)]
    lr_floor: f64,
    #[arg(long, default_value_t = RunConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = RunConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = RunConfig::default().k_options)]
    k_options: usize,
    /// visdial | visdialq
    #[arg(long, default_value_t = RunConfig::default().mode.name().to_string())]
    mode: String,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset (.json or .json.gz).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Metrics log (JSON lines); defaults to <out>.metrics.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Checkpoint to evaluate; not needed with --oracle.
    #[arg(long, required_unless_present = "oracle")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// visdial | visdialq; defaults to the checkpoint's mode.
    #[arg(long)]
    mode: Option<String>,
    /// Metrics report to write.
    #[arg(long)]
    report: PathBuf,
    /// Score with a reference oracle instead of a model: generator | history-blind.
    #[arg(long)]
    oracle: Option<String>,
}

#[derive(clap::Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Dialog index (0-based).
    #[arg(long)]
    dialog: usize,
    /// Round index (1-based).
    #[arg(long)]
    round: usize,
    /// Structure export; `.dot` writes a digraph, anything else JSON.
    #[arg(long)]
    export_structure: Option<PathBuf>,
    /// visdial | visdialq; defaults to the checkpoint's mode.
    #[arg(long)]
    mode: Option<String>,
    /// Number of ranked options to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = ["gradcheck", "mrf", "all"])]
    suite: String,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().n_dialogs)]
    dialogs: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().rounds)]
    rounds: usize,
    /// Number of entity tokens, taken from the front of the built-in list
    #[arg(long, default_value_t = SyntheticSpec::default().entities.len())]
    entities: usize,
    /// Number of attribute tokens, taken from the front of the built-in list
    #[arg(long, default_value_t = SyntheticSpec::default().attributes.len())]
    attributes: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().dep_prob)]
    dep_prob: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().max_deps)]
    max_deps: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().k_options)]
    k_options: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    seed: u64,
}

#[derive(clap::Args)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    /// Comma-separated: full_3iter, const_graph, no_iter, n_iter_<n>.
    #[arg(long, default_value = "full_3iter,const_graph,no_iter")]
    variants: String,
    /// JSON table to write; the plain-text table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(clap::Args)]
struct StructureArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Label permutations for the null distribution.
    #[arg(long, default_value_t = 200)]
    permutations: usize,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Index { .. } => EXIT_USAGE,
            Error::Schema { .. } | Error::Checkpoint(_) | Error::Json(_) | Error::Io { .. } | Error::InvalidModel(_) => {
                EXIT_INTEGRITY
            }
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn explicit(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn resolve_config(args: &ConfigArgs, m: &ArgMatches) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    macro_rules! flag {
        ($field:ident, $id:literal) => {
            if explicit(m, $id) {
                cfg.$field = args.$field.clone();
            }
        };
    }
    flag!(dim, "dim");
    flag!(fc_dim, "fc_dim");
    flag!(outer_iters, "outer_iters");
    flag!(inner_steps, "inner_steps");
    flag!(batch_size, "batch_size");
    flag!(lr_base, "lr_base");
    flag!(lr_floor, "lr_floor");
    flag!(epochs, "epochs");
    flag!(seed, "seed");
    flag!(k_options, "k_options");
    if explicit(m, "variant") {
        cfg.variant = Variant::parse(&args.variant)?;
    }
    if explicit(m, "mode") {
        cfg.mode = Mode::parse(&args.mode)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: &TrainArgs, m: &ArgMatches) -> CmdResult {
    let cfg = resolve_config(&args.config, m)?;
    let ds = load_dataset(&args.data)?;
    let prepared = prepare_dataset(&ds, cfg.mode, cfg.seed);
    let (head, tail) = prepared.split_tail(VALIDATION_FRACTION);
    let val = (!tail.dialogs.is_empty()).then_some(&tail);
    let mut lines = String::new();
    let outcome = train_split::<f64>(&head, val, &cfg, |entry: &EpochLog| {
        let line = serde_json::to_string(entry).expect("plain data serializes");
        eprintln!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    })?;
    checkpoint::save(&outcome.model, &args.out)?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".metrics.jsonl");
        PathBuf::from(p)
    });
    write_atomic(&log_path, lines.as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn resolve_mode(flag: &Option<String>, default: Mode) -> Result<Mode, Error> {
    flag.as_deref().map(Mode::parse).transpose().map(|m| m.unwrap_or(default))
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let report = if let Some(name) = &args.oracle {
        let oracle = Oracle::parse(name)?;
        if resolve_mode(&args.mode, Mode::Visdial)? != Mode::Visdial {
            return Err(Error::Config("oracles are defined for visdial mode only".into()).into());
        }
        let ds = load_dataset(&args.data)?;
        evaluate_scores(&ds, &oracle_scores(&ds, oracle)?)?
    } else {
        let model = checkpoint::load(args.ckpt.as_ref().expect("required by clap"))?;
        let mode = resolve_mode(&args.mode, model.config.mode)?;
        let ds = load_dataset(&args.data)?;
        let prepared = prepare_dataset(&ds, mode, model.config.seed);
        evaluate(&model, &prepared, mode)?
    };
    let json = serde_json::to_string_pretty(&report).expect("plain data serializes");
    write_atomic(&args.report, json.as_bytes())?;
    println!(
        "mrr {:.4}  r@1 {:.4}  r@5 {:.4}  r@10 {:.4}  mean rank {:.3}  ndcg {:.4}  n {}",
        report.mrr, report.r_at_1, report.r_at_5, report.r_at_10, report.mean_rank, report.ndcg, report.n_examples
    );
    Ok(())
}

fn node_labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i {
            0 => "caption".to_string(),
            i if i + 1 == n => "query".to_string(),
            i => format!("round {i}"),
        })
        .collect()
}

fn cmd_infer(args: &InferArgs) -> CmdResult {
    let model = checkpoint::load(&args.ckpt)?;
    let mode = resolve_mode(&args.mode, model.config.mode)?;
    let ds = load_dataset(&args.data)?;
    let prepared = prepare_dataset(&ds, mode, model.config.seed);
    let view = example_view(&prepared, args.dialog, args.round, mode)?;
    let ex = encode_example(&view, &model.vocab, Some(model.config.k_options));
    let inf = model.infer(&ex, args.export_structure.is_some())?;
    for (rank, i) in ranking(&inf.scores).into_iter().take(args.top).enumerate() {
        let marker = if i == ex.gt_index { "*" } else { " " };
        println!(
            "{:>3}{marker} p={:.4}  score={:+.4}  {}",
            rank + 1,
            inf.probs[i],
            inf.scores[i],
            view.options[ex.option_ids[i]]
        );
    }
    if let Some(path) = &args.export_structure {
        let w = inf.weights.expect("weights requested");
        let labels = node_labels(ex.node_count());
        let text = if path.extension().is_some_and(|e| e == "dot") {
            structure_dot(&labels, &w)
        } else {
            structure_json(&labels, &w)
        };
        write_atomic(path, text.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    let results = run_suite(Suite::parse(&args.suite)?);
    print!("{}", format_table(&results));
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: "verification failed".into(),
        })
    }
}

fn cmd_gen(args: &GenArgs) -> CmdResult {
    let base = SyntheticSpec::default();
    if args.entities > base.entities.len() || args.attributes > base.attributes.len() {
        return Err(Error::Config(format!(
            "at most {} entities and {} attributes are built in",
            base.entities.len(),
            base.attributes.len()
        ))
        .into());
    }
    let spec = SyntheticSpec {
        n_dialogs: args.dialogs,
        entities: base.entities[..args.entities].to_vec(),
        attributes: base.attributes[..args.attributes].to_vec(),
        rounds: args.rounds,
        dep_prob: args.dep_prob,
        max_deps: args.max_deps,
        k_options: args.k_options,
        seed: args.seed,
    };
    let ds = gen_synthetic(&spec)?;
    save_dataset(&ds, &args.out)?;
    println!("wrote {} dialogs to {}", ds.dialogs.len(), args.out.display());
    Ok(())
}

fn cmd_ablate(args: &AblateArgs, m: &ArgMatches) -> CmdResult {
    let cfg = resolve_config(&args.config, m)?;
    let variants = args
        .variants
        .split(',')
        .map(|s| AblationVariant::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let train = load_dataset(&args.train)?;
    let eval = load_dataset(&args.eval)?;
    let table = run_ablation::<f64>(&train, &eval, &cfg, &variants)?;
    print!("{}", table.to_text());
    if let Some(path) = &args.out {
        write_atomic(path, table.to_json().as_bytes())?;
    }
    Ok(())
}

fn cmd_structure(args: &StructureArgs) -> CmdResult {
    let model = checkpoint::load(&args.ckpt)?;
    let ds = load_dataset(&args.data)?;
    let prepared = prepare_dataset(&ds, model.config.mode, model.config.seed);
    let samples = structure_samples(&model, &prepared, model.config.mode)?;
    let auc = structure_auc(&samples).ok_or_else(|| Error::Invalid("no round has both label classes".into()))?;
    let null = permutation_null(&samples, args.permutations, model.config.seed);
    let p95 = quantile(&null, 0.95).unwrap_or(f64::NAN);
    println!("structure auc {auc:.4}  null 95th percentile {p95:.4}  ({} rounds)", samples.len());
    Ok(())
}

fn run() -> CmdResult {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand required");
    match &cli.command {
        Command::Train(a) => cmd_train(a, sub),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Verify(a) => cmd_verify(a),
        Command::GenSynthetic(a) => cmd_gen(a),
        Command::Ablate(a) => cmd_ablate(a, sub),
        Command::Structure(a) => cmd_structure(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
