use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use plausible_attention::corpus::{
    load_corpus, read_jsonl, write_jsonl, CachingTagger, CorpusName, LoadOptions, ProcessTagger,
    Split, Tagger,
};
use plausible_attention::heuristic::{
    align_heuristics, build_heuristic_maps, read_heuristics, write_heuristics, FilterConfig,
    FrequencyTable, HeuristicRecord, WeightSource,
};
use plausible_attention::metrics::{write_example_csv, write_report};
use plausible_attention::model::{load_checkpoint, load_glove};
use plausible_attention::objective::ConstraintKind;
use plausible_attention::render::{build_document, render, Format, HeatmapHeader};
use plausible_attention::report::{report, ReportFilter};
use plausible_attention::trainer::{
    evaluate_examples, load_split, sweep, train_one, with_mode, Dataset, ExperimentConfig,
    ResultStore, RunConfig,
};

#[derive(Parser)]
#[command(name = "plaus", version, about = "Attention plausibility experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed (train, sweep) or the synthetic corpus seed (ingest).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single worker thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source corpus split to canonical JSONL.
    Ingest(IngestArgs),
    /// Build heuristic maps for a canonical JSONL corpus.
    Heuristics(HeuristicsArgs),
    /// Train one run from the config.
    Train,
    /// Train every grid cell not yet in the result store.
    Sweep,
    /// Evaluate a checkpoint on a split.
    Evaluate(EvaluateArgs),
    /// Render attention heatmaps.
    Render(RenderArgs),
    /// Write long and seed-aggregated CSV tables from the result store.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: CorpusName,
    /// Directory with the source files (ignored for `synthetic`).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    split: Split,
    /// External tagger command, e.g. "python3 tools/spacy_tagger.py".
    #[arg(long)]
    tagger: Option<String>,
    /// Tagger cache file, read and extended.
    #[arg(long)]
    tagger_cache: Option<PathBuf>,
    #[arg(long)]
    max_tokens: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Nli,
}

#[derive(Args)]
struct HeuristicsArgs {
    /// Canonical JSONL corpus.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    task: TaskArg,
    /// Frequency table CSV; built from `--corpus` when absent.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Also write the frequency table used.
    #[arg(long)]
    table_out: Option<PathBuf>,
    /// GloVe-format embeddings (nli).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Fail unless the checkpoint vocabulary has this hash.
    #[arg(long)]
    vocab_hash: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split of the checkpoint's corpus to render.
    #[arg(long, default_value = "val")]
    split: String,
    /// Render these canonical JSONL examples instead of a split.
    #[arg(long)]
    examples: Option<PathBuf>,
    /// Heuristic maps (JSONL) to show alongside.
    #[arg(long)]
    heuristics: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: Format,
    /// Show raw attention values instead of min-max scaled ones.
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value_t = 20)]
    limit: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Result store; defaults to the config's results_dir, then `results`.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<CorpusName>,
    #[arg(long)]
    constraint: Option<ConstraintKind>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    split: Option<String>,
    /// Repeatable; macro_f, auprc, recall, specificity or entropy.
    #[arg(long = "metric")]
    metrics: Vec<String>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required"))?;
    let mut cfg =
        ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if cli.deterministic {
        cfg.training.deterministic = true;
    }
    if let Some(seed) = cli.seed {
        cfg.training.seeds = vec![seed];
    }
    Ok(cfg)
}

fn store_root(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.results_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| anyhow!("--out is required"))
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let out = required_out(cli)?;
    let mut synthetic = match &cli.config {
        Some(_) => load_config(cli)?.corpus.synthetic,
        None => Default::default(),
    };
    if let Some(seed) = cli.seed {
        synthetic.seed = seed;
    }
    let live: Option<Box<dyn Tagger>> = match &args.tagger {
        Some(cmd) => {
            let mut parts = cmd.split_whitespace().map(String::from);
            let program = parts
                .next()
                .ok_or_else(|| anyhow!("empty --tagger command"))?;
            Some(Box::new(ProcessTagger::spawn(
                &program,
                &parts.collect::<Vec<_>>(),
            )?))
        }
        None => None,
    };
    let mut tagger = match (&args.tagger_cache, live) {
        (Some(path), live) => Some(CachingTagger::with_cache_file(path, live)?),
        (None, Some(live)) => Some(CachingTagger::new(Default::default(), Some(live))),
        (None, None) => None,
    };
    let dir = args.input.clone().unwrap_or_default();
    if args.corpus != CorpusName::Synthetic && args.input.is_none() {
        bail!("--in is required for corpus {}", args.corpus);
    }
    let loaded = load_corpus(
        args.corpus,
        &dir,
        args.split,
        LoadOptions {
            tagger: tagger.as_mut().map(|t| t as &mut dyn Tagger),
            max_tokens: args.max_tokens,
            synthetic,
            ..Default::default()
        },
    )?;
    if let Some(t) = &tagger {
        t.persist()?;
    }
    write_jsonl(out, &loaded.examples)?;
    println!("{} examples -> {}", loaded.examples.len(), out.display());
    eprintln!("warnings: {}", serde_json::to_string(&loaded.warnings)?);
    Ok(())
}

fn heuristics(cli: &Cli, args: &HeuristicsArgs) -> Result<()> {
    let out = required_out(cli)?;
    let filter = match &cli.config {
        Some(_) => load_config(cli)?.corpus.filter,
        None => FilterConfig::default(),
    };
    let examples = read_jsonl(&args.corpus)?;
    let table;
    let embeddings;
    let source = match args.task {
        TaskArg::Classification => {
            table = match &args.table {
                Some(p) => FrequencyTable::load_csv(p)?,
                None => FrequencyTable::build(&examples)?,
            };
            if let Some(p) = &args.table_out {
                table.save_csv(p)?;
            }
            WeightSource::Frequency(&table)
        }
        TaskArg::Nli => {
            let path = args
                .embeddings
                .as_ref()
                .ok_or_else(|| anyhow!("--embeddings is required for nli"))?;
            embeddings = load_glove(path, None)?;
            WeightSource::Similarity(&embeddings)
        }
    };
    let maps = build_heuristic_maps(&examples, source, &filter)?;
    let degenerate = maps.iter().flatten().filter(|m| m.degenerate).count();
    let records: Vec<HeuristicRecord> = examples
        .iter()
        .zip(maps)
        .map(|(ex, m)| HeuristicRecord {
            id: ex.id.clone(),
            heuristic: m.into_iter().map(|h| h.values).collect(),
        })
        .collect();
    write_heuristics(out, &records)?;
    println!(
        "{} maps ({degenerate} degenerate segments) -> {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn train(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    cfg.validate()?;
    let seed = cfg.training.seeds.first().copied().unwrap_or(0);
    let run = cfg.run(seed);
    let needs_heuristics =
        run.constraint.is_active() && run.constraint.kind == ConstraintKind::SemiSupervised;
    let data = Dataset::prepare(&cfg.corpus, needs_heuristics)?;
    let store = ResultStore::new(store_root(cli, Some(&cfg)));
    let paths = store.paths(&run.hash());
    let record = with_mode(cfg.training.deterministic, || {
        train_one(&run, &data, Some(&paths))
    })?;
    println!("{}", serde_json::to_string_pretty(&summary(&record))?);
    if record.is_completed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("run failed, see {}", paths.record().display());
        Ok(ExitCode::from(1))
    }
}

fn summary(r: &plausible_attention::trainer::RunRecord) -> serde_json::Value {
    serde_json::json!({
        "config_hash": r.config_hash,
        "status": r.status,
        "best_epoch": r.best_epoch,
        "results": r.results,
    })
}

fn sweep_cmd(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let store = ResultStore::new(store_root(cli, Some(&cfg)));
    let outcome = sweep(&cfg, &store)?;
    println!(
        "{} cells: {} trained, {} skipped, {} failed -> {}",
        outcome.records.len(),
        outcome.trained,
        outcome.skipped,
        outcome.failed,
        store.root().display()
    );
    Ok(ExitCode::from(outcome.exit_code() as u8))
}

/// The run config stored inside a checkpoint.
fn checkpoint_run(experiment: &serde_json::Value) -> Result<RunConfig> {
    serde_json::from_value(experiment.clone()).context("checkpoint does not carry a run config")
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    if let Some(expected) = &args.vocab_hash {
        if *expected != ck.vocab_hash {
            return Err(plausible_attention::Error::VocabularyMismatch {
                expected: expected.clone(),
                found: ck.vocab_hash,
            }
            .into());
        }
    }
    let corpus = match &cli.config {
        Some(_) => load_config(cli)?.corpus,
        None => checkpoint_run(&ck.experiment)?.corpus,
    };
    let examples = load_split(&corpus, &args.split)?;
    let eval = with_mode(cli.deterministic, || {
        evaluate_examples(&ck.network, &ck.vocabulary, &examples)
    })?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_report(&dir.join("metrics.json"), &eval.report)?;
            write_example_csv(&dir.join("examples.csv"), &eval.per_example)?;
            println!("report -> {}", dir.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&eval.report)?),
    }
    Ok(())
}

fn render_cmd(cli: &Cli, args: &RenderArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let run = checkpoint_run(&ck.experiment)?;
    let mut examples = match &args.examples {
        Some(p) => read_jsonl(p)?,
        None => {
            let corpus = match &cli.config {
                Some(_) => load_config(cli)?.corpus,
                None => run.corpus.clone(),
            };
            load_split(&corpus, &args.split)?
        }
    };
    examples.truncate(args.limit);
    let heuristics = match &args.heuristics {
        Some(p) => Some(align_heuristics(&examples, &read_heuristics(p)?)?),
        None => None,
    };
    let header = HeatmapHeader {
        constraint: run.constraint.kind.as_str().to_string(),
        lambda: run.constraint.lambda,
        scaled: !args.raw,
    };
    let doc = build_document(
        &ck.network,
        &ck.vocabulary,
        &examples,
        heuristics.as_deref(),
        header,
    )?;
    let text = render(&doc, args.format);
    match &cli.out {
        Some(p) => {
            File::create(p)
                .and_then(|mut f| f.write_all(text.as_bytes()))
                .with_context(|| format!("writing {}", p.display()))?;
            println!("{} examples -> {}", doc.rows.len(), p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn report_cmd(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let cfg = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let root = args
        .store
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.results_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("results"));
    let filter = ReportFilter {
        corpus: args.corpus,
        constraint: args.constraint,
        layers: args.layers,
        split: args.split.clone(),
        metrics: args.metrics.clone(),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    let files = report(&ResultStore::new(root), &filter, &out)?;
    println!(
        "{} runs, {} rows -> {}, {}",
        files.n_runs,
        files.n_rows,
        files.long.display(),
        files.aggregated.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a).map(|_| ExitCode::SUCCESS),
        Command::Heuristics(a) => heuristics(cli, a).map(|_| ExitCode::SUCCESS),
        Command::Train => train(cli),
        Command::Sweep => sweep_cmd(cli),
        Command::Evaluate(a) => evaluate(cli, a).map(|_| ExitCode::SUCCESS),
        Command::Render(a) => render_cmd(cli, a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => report_cmd(cli, a).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
