use std::fs::{self, File};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use triage_core::features::{extract_graph, write_graph};
use triage_core::harness::{
    build_reference_index, embed_dataset, load_dataset, load_sample_file, run_evaluation, sweep_samples, synth_dataset,
    train_pipeline, triage_dataset, Dataset, EngineConfig, SynthSpec,
};
use triage_core::model::{
    episodic_train, init_embedder, pretrain_base, read_checkpoint, write_checkpoint, EmbedderParams,
};
use triage_core::triage::{read_index, threshold_sweep, triage, write_index, ReferenceIndex, TriageConfig, Verdict};
use triage_core::{Embedder32, Error, ReferenceIndex32};

#[derive(Parser)]
#[command(
    name = "triage-engine",
    version,
    about = "Few-shot malware triage over entropy graphs"
)]
struct Cli {
    /// Flat `key = value` file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; falls back to TRIAGE_ENGINE_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert binaries to entropy graphs (ENTG files).
    Extract(ExtractArgs),
    /// Pretrain the embedder on the base split.
    Pretrain(PretrainArgs),
    /// Episodic meta-training of the last block and dense layers.
    MetaTrain(MetaTrainArgs),
    /// Embed a labeled tree into a reference index (TIDX).
    Index(IndexArgs),
    /// Triage unseen files against a reference index.
    Triage(TriageArgs),
    /// Few-shot evaluation on the novel split.
    Eval(EvalArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Classified/risk-pool fractions across decision thresholds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    segment_len: Option<usize>,
    #[arg(long)]
    augment_min: Option<usize>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    train_way: Option<usize>,
    #[arg(long)]
    train_shot: Option<usize>,
    #[arg(long)]
    train_query: Option<usize>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also run episodic meta-training after pretraining.
    #[arg(long)]
    meta: bool,
    #[command(flatten)]
    data_opts: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct MetaTrainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to overwriting `--model`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data_opts: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write `sample_id,class_id,v0..` rows for every indexed sample.
    #[arg(long)]
    embeddings_csv: Option<PathBuf>,
    #[command(flatten)]
    data_opts: DataArgs,
}

#[derive(Args)]
struct DecisionArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// rank | lime
    #[arg(long)]
    ratio_source: Option<String>,
    #[arg(long)]
    lime_lambda: Option<f64>,
    /// plus | minus
    #[arg(long)]
    lime_sign: Option<String>,
}

#[derive(Args)]
struct TriageArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// A file, or a directory searched recursively.
    #[arg(long)]
    input: PathBuf,
    /// JSON lines, one record per sample; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    segment_len: Option<usize>,
    #[command(flatten)]
    decision: DecisionArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    way: Option<usize>,
    #[arg(long)]
    shot: Option<usize>,
    #[arg(long)]
    query: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// base | episode
    #[arg(long)]
    memory_seed: Option<String>,
    /// Append the report as one JSON line; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    data_opts: DataArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 40)]
    per_class: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Labeled tree; classes absent from the index count as novel.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.45,0.4,0.3")]
    thresholds: Vec<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    data_opts: DataArgs,
    #[command(flatten)]
    decision: DecisionArgs,
}

fn set<V: ToString>(cfg: &mut EngineConfig, key: &str, value: &Option<V>) -> Result<()> {
    if let Some(v) = value {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

impl DataArgs {
    fn apply(&self, cfg: &mut EngineConfig) -> Result<()> {
        set(cfg, "segment_len", &self.segment_len)?;
        set(cfg, "augment_min", &self.augment_min)?;
        set(cfg, "split_seed", &self.split_seed)
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut EngineConfig) -> Result<()> {
        set(cfg, "learning_rate", &self.learning_rate)?;
        set(cfg, "batch_size", &self.batch_size)?;
        set(cfg, "epochs", &self.epochs)?;
        set(cfg, "episodes", &self.episodes)?;
        set(cfg, "tau", &self.tau)?;
        set(cfg, "train_way", &self.train_way)?;
        set(cfg, "train_shot", &self.train_shot)?;
        set(cfg, "train_query", &self.train_query)
    }
}

impl DecisionArgs {
    fn apply(&self, cfg: &mut EngineConfig) -> Result<()> {
        set(cfg, "k", &self.k)?;
        set(cfg, "threshold", &self.threshold)?;
        set(cfg, "ratio_source", &self.ratio_source)?;
        set(cfg, "lime_lambda", &self.lime_lambda)?;
        set(cfg, "lime_sign", &self.lime_sign)
    }
}

fn load_prepared(root: &Path, cfg: &EngineConfig, seed: u64) -> Result<Dataset> {
    let data = load_dataset(root, cfg.segment_len)?;
    Ok(data.prepare(Some(cfg.augment_min), cfg.pixel_mean, cfg.pixel_std, seed)?)
}

fn read_model(path: &Path) -> Result<EmbedderParams<f64>> {
    let f = File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    Ok(read_checkpoint(std::io::BufReader::new(f))?)
}

fn save_model(params: &EmbedderParams<f64>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

/// JSON lines to a file, or stdout.
fn emit(path: Option<&Path>, append: bool, lines: &[serde_json::Value]) -> Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            fs::OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(p)
                .with_context(|| format!("opening report {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    for l in lines {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn files_under(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    if out.is_empty() {
        bail!(Error::EmptyInput(format!("no files under {}", path.display())));
    }
    Ok(out)
}

fn extract(args: &ExtractArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let write = |graph: &triage_core::features::EntropyGraph, rel: &str| -> Result<()> {
        let path = args.out.join(format!("{}.entg", rel.replace('#', "_")));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        write_graph(graph, &mut w)?;
        w.flush()?;
        Ok(())
    };
    let has_class_dirs = args.input.is_dir()
        && fs::read_dir(&args.input)?
            .filter_map(|e| e.ok())
            .any(|e| e.path().is_dir());
    if has_class_dirs {
        let data = load_prepared(&args.input, cfg, seed)?;
        for s in &data.samples {
            write(&s.graph, &s.id)?;
        }
        info!("wrote {} graphs across {} classes", data.len(), data.class_count());
    } else {
        for path in files_under(&args.input)? {
            let bytes = fs::read(&path)?;
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let graph =
                extract_graph(&bytes, cfg.segment_len, name.clone())?.normalize(cfg.pixel_mean, cfg.pixel_std)?;
            write(&graph, &name)?;
        }
    }
    Ok(())
}

fn pretrain(args: &PretrainArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    let (base, _) = load_prepared(&args.data, cfg, seed)?.split(cfg.split_seed);
    let params = if args.meta {
        train_pipeline(&base, cfg, seed)?.params
    } else {
        let init = init_embedder::<f64>(&cfg.architecture(base.class_count()), seed)?;
        let out = pretrain_base(init, &base, &cfg.train_config(seed))?;
        if let (Some(first), Some(last)) = (out.loss_trace.first(), out.loss_trace.last()) {
            info!("pretraining loss {first:.4} -> {last:.4}");
        }
        out.params
    };
    save_model(&params, &args.out)
}

fn meta_train(args: &MetaTrainArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    let params = read_model(&args.model)?;
    let (base, _) = load_prepared(&args.data, cfg, seed)?.split(cfg.split_seed);
    let out = episodic_train(params.with_meta_mask(), &base, &cfg.train_config(seed))?;
    save_model(&out.params, args.out.as_ref().unwrap_or(&args.model))
}

fn write_embeddings_csv(path: &Path, data: &Dataset, emb: &[Vec<f32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (s, e) in data.samples.iter().zip(emb) {
        write!(w, "{},{}", s.id, s.class)?;
        for v in e {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn index(args: &IndexArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    let params: Embedder32 = read_model(&args.model)?.cast();
    let data = load_prepared(&args.data, cfg, seed)?;
    if let Some(csv) = &args.embeddings_csv {
        write_embeddings_csv(csv, &data, &embed_dataset(&params, &data)?)?;
    }
    let idx = build_reference_index(&params, &data)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    write_index(&idx, &mut w)?;
    w.flush()?;
    info!("indexed {} vectors of dimension {}", idx.len(), idx.dim());
    Ok(())
}

fn read_reference_index(path: &Path) -> Result<ReferenceIndex32> {
    let f = File::open(path).with_context(|| format!("opening index {}", path.display()))?;
    Ok(read_index(std::io::BufReader::new(f))?)
}

fn decision_record(id: &str, d: &triage_core::triage::TriageDecision, idx: &ReferenceIndex<f32>) -> serde_json::Value {
    let name = |c: usize| idx.classes()[c].clone();
    let verdict = match d.verdict {
        Verdict::Class(c) => json!(name(c)),
        Verdict::RiskPool => json!("risk_pool"),
    };
    json!({
        "sample": id,
        "verdict": verdict,
        "threshold": d.threshold,
        "ratio_source": d.ratio_source,
        "ratios": d.ratios.iter().map(|(c, r)| json!({"class": name(*c), "ratio": r})).collect::<Vec<_>>(),
        "hits": d.hits.iter().map(|h| json!({"rank": h.rank, "row": h.row, "class": name(h.class), "score": h.score})).collect::<Vec<_>>(),
        "lime_weights": d.lime_weights,
    })
}

fn triage_files(args: &TriageArgs, cfg: &EngineConfig) -> Result<()> {
    let params: Embedder32 = read_model(&args.model)?.cast();
    let idx = read_reference_index(&args.index)?;
    let tc = cfg.triage_config();
    tc.validate()?;
    let mut records = Vec::new();
    for path in files_under(&args.input)? {
        let id = path.strip_prefix(&args.input).unwrap_or(&path).display().to_string();
        let id = if id.is_empty() { path.display().to_string() } else { id };
        let graph = load_sample_file(&path, cfg.segment_len, &id)?;
        let graph = if graph.normalized {
            graph
        } else {
            graph.normalize(cfg.pixel_mean, cfg.pixel_std)?
        };
        let d = triage(&idx, &params.embed(&graph)?, &tc)?;
        records.push(decision_record(&id, &d, &idx));
    }
    emit(args.report.as_deref(), false, &records)
}

fn eval(args: &EvalArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    let params = read_model(&args.model)?;
    let (base, novel) = load_prepared(&args.data, cfg, seed)?.split(cfg.split_seed);
    let report = run_evaluation(&params, &novel, Some(&base), cfg, seed)?;
    emit(args.report.as_deref(), true, &[serde_json::to_value(&report)?])
}

fn synth(args: &SynthArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        classes: args.classes,
        per_class: args.per_class,
        seed,
        segment_len: cfg.segment_len,
        ..SynthSpec::default()
    };
    let data = synth_dataset(&spec, &args.out)?;
    info!("wrote {} files in {} classes", data.len(), data.class_count());
    Ok(())
}

fn sweep(args: &SweepArgs, cfg: &EngineConfig, seed: u64) -> Result<()> {
    // reject bad thresholds before the expensive part
    for &threshold in &args.thresholds {
        TriageConfig {
            threshold,
            ..cfg.triage_config()
        }
        .validate()?;
    }
    let params: Embedder32 = read_model(&args.model)?.cast();
    let idx = read_reference_index(&args.index)?;
    let data = load_prepared(&args.data, cfg, seed)?;
    let decisions = triage_dataset(&params, &idx, &data, &cfg.triage_config())?;
    let rows = threshold_sweep(&sweep_samples(&idx, &data, &decisions), &args.thresholds)?;
    let lines = rows
        .iter()
        .map(serde_json::to_value)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    emit(args.report.as_deref(), false, &lines)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    set(&mut cfg, "seed", &cli.seed)?;
    match &cli.command {
        Command::Extract(a) => a.data.apply(&mut cfg)?,
        Command::Pretrain(a) => {
            a.data_opts.apply(&mut cfg)?;
            a.train.apply(&mut cfg)?;
        }
        Command::MetaTrain(a) => {
            a.data_opts.apply(&mut cfg)?;
            a.train.apply(&mut cfg)?;
        }
        Command::Index(a) => a.data_opts.apply(&mut cfg)?,
        Command::Triage(a) => {
            set(&mut cfg, "segment_len", &a.segment_len)?;
            a.decision.apply(&mut cfg)?;
        }
        Command::Eval(a) => {
            a.data_opts.apply(&mut cfg)?;
            set(&mut cfg, "way", &a.way)?;
            set(&mut cfg, "shot", &a.shot)?;
            set(&mut cfg, "query", &a.query)?;
            set(&mut cfg, "eval_episodes", &a.episodes)?;
            set(&mut cfg, "tau", &a.tau)?;
            set(&mut cfg, "memory_seed", &a.memory_seed)?;
        }
        Command::Synth(_) => {}
        Command::Sweep(a) => {
            a.data_opts.apply(&mut cfg)?;
            a.decision.apply(&mut cfg)?;
        }
    }
    cfg.validate()?;
    let seed = cfg.resolved_seed()?;
    info!("config hash {} seed {seed}", cfg.hash());
    match &cli.command {
        Command::Extract(a) => extract(a, &cfg, seed),
        Command::Pretrain(a) => pretrain(a, &cfg, seed),
        Command::MetaTrain(a) => meta_train(a, &cfg, seed),
        Command::Index(a) => index(a, &cfg, seed),
        Command::Triage(a) => triage_files(a, &cfg),
        Command::Eval(a) => eval(a, &cfg, seed),
        Command::Synth(a) => synth(a, &cfg, seed),
        Command::Sweep(a) => sweep(a, &cfg, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == ErrorKind::BrokenPipe)
            }) =>
        {
            // downstream reader went away, as with `| head`
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .chain()
                .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
