use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mailtopics_core::cluster::Algorithm;
use mailtopics_core::embedding::{save_embeddings, ProviderMode};
use mailtopics_core::eval::{npmi_coherence_detailed, topic_diversity, EvalReport};
use mailtopics_core::ingest::{ingest, read_sources, write_corpus_jsonl, SourceDoc};
use mailtopics_core::labeler::LabelerMode;
use mailtopics_core::pipeline::{
    generate_synthetic_corpus, prepare, run_grid, run_pipeline, write_grid_csv, write_grid_runs_csv, Failure,
    PipelineConfig, PipelineError, Stage, SynthConfig,
};
use mailtopics_core::topics::{english_stopwords, load_stopwords, tokenize, TopicModel};

#[derive(Parser)]
#[command(name = "mailtopics", version, about = "Topic discovery over email corpora")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON pipeline configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Message directory or JSONL corpus.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Embedding file, or an http(s) endpoint to request them from.
    #[arg(long)]
    embeddings: Option<String>,
    /// Label topics from their keywords instead of calling a service.
    #[arg(long)]
    stub_labeler: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter a corpus; writes corpus.jsonl and ledger.json.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full pipeline once.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        min_cluster_size: Option<usize>,
    },
    /// Evaluate every algorithm × size pair over several seeded runs.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "hdbscan_eom,hdbscan_leaf,optics_xi")]
        algorithm: Vec<Algorithm>,
        #[arg(long, value_delimiter = ',', default_value = "50,100,150")]
        min_cluster_size: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
    },
    /// Write a synthetic corpus with embeddings and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        templates: usize,
        #[arg(long, default_value_t = 100)]
        docs_per_template: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Score a run's topics.json against a reference corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        min_cluster_size: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest { common } => cmd_ingest(&common),
        Command::Run {
            common,
            algorithm,
            min_cluster_size,
        } => cmd_run(&common, algorithm, min_cluster_size),
        Command::Grid {
            common,
            algorithm,
            min_cluster_size,
            runs,
        } => cmd_grid(&common, &algorithm, &min_cluster_size, runs),
        Command::Synth {
            out,
            templates,
            docs_per_template,
            seed,
        } => cmd_synth(&out, templates, docs_per_template, seed),
        Command::Eval {
            common,
            topics,
            algorithm,
            min_cluster_size,
        } => cmd_eval(&common, &topics, algorithm, min_cluster_size),
    }
}

fn io_at(stage: Stage) -> impl Fn(std::io::Error) -> PipelineError {
    move |e| PipelineError::new(stage, Failure::Io(e))
}

fn build_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(input) = &common.input {
        cfg.input = Some(input.clone());
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if common.stub_labeler {
        cfg.labeler.mode = LabelerMode::Stub;
    }
    if let Some(source) = &common.embeddings {
        if source.starts_with("http://") || source.starts_with("https://") {
            cfg.provider.mode = ProviderMode::Remote;
            cfg.provider.endpoint_url = Some(source.clone());
        } else {
            cfg.provider.mode = ProviderMode::File;
            cfg.provider.file_path = Some(PathBuf::from(source));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_input(cfg: &PipelineConfig) -> Result<Vec<SourceDoc>, PipelineError> {
    let input = cfg.input.as_deref().ok_or_else(|| {
        PipelineError::new(Stage::Ingest, Failure::Other("no input given (--input or config \"input\")".into()))
    })?;
    read_sources(input).map_err(|e| PipelineError::new(Stage::Ingest, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(Stage::Output))?;
    }
    fs::write(path, bytes).map_err(io_at(Stage::Output))
}

fn cmd_ingest(common: &Common) -> Result<(), PipelineError> {
    let cfg = build_config(common)?;
    let sources = load_input(&cfg)?;
    let outcome = ingest(&sources, &cfg.ingest).map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let mut corpus = Vec::new();
    write_corpus_jsonl(&outcome.docs, &mut corpus).map_err(io_at(Stage::Output))?;
    write_file(&cfg.output_dir.join("corpus.jsonl"), &corpus)?;
    let ledger = serde_json::to_vec_pretty(&outcome.ledger).map_err(|e| PipelineError::new(Stage::Output, e))?;
    write_file(&cfg.output_dir.join("ledger.json"), &ledger)?;
    let l = &outcome.ledger;
    println!(
        "{} of {} documents retained (unparsable {}, empty {}, blocklisted {}, too long {})",
        l.retained, l.input_count, l.unparsable, l.empty, l.blocklisted_subject, l.too_long
    );
    Ok(())
}

fn cmd_run(common: &Common, algorithm: Option<Algorithm>, size: Option<usize>) -> Result<(), PipelineError> {
    let mut cfg = build_config(common)?;
    if let Some(a) = algorithm {
        cfg.cluster.algorithm = a;
    }
    if let Some(s) = size {
        cfg.cluster.min_cluster_size = s;
    }
    cfg.validate()?;
    let report = run_pipeline(&cfg)?;
    let e = &report.eval;
    println!(
        "{} documents, {} topics, {} outliers; coherence {:.4}, diversity {:.4}, quality {:.4}",
        report.n_documents, e.n_topics, report.n_outliers, e.coherence, e.diversity, e.quality
    );
    if report.reduction.fell_back_to_pca {
        println!("reduction fell back to pca (trustworthiness {:.3})", report.reduction.trustworthiness.unwrap_or(0.0));
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_grid(common: &Common, algorithms: &[Algorithm], sizes: &[usize], runs: usize) -> Result<(), PipelineError> {
    let cfg = build_config(common)?;
    let sources = load_input(&cfg)?;
    let prepared = prepare(&cfg, &sources, None)?;
    let result = run_grid(&prepared, &cfg, algorithms, sizes, runs);

    let csv_err = |e: csv::Error| PipelineError::new(Stage::Output, e);
    let mut aggregated = Vec::new();
    write_grid_csv(&result, &mut aggregated).map_err(csv_err)?;
    let mut raw = Vec::new();
    write_grid_runs_csv(&result, &mut raw).map_err(csv_err)?;
    write_file(&cfg.output_dir.join("grid.csv"), &aggregated)?;
    write_file(&cfg.output_dir.join("grid_runs.csv"), &raw)?;

    let mut out = std::io::stdout().lock();
    for (a, s, r) in &result.aggregated {
        let line = match r {
            Some(r) => format!(
                "{a:<13} {s:>4}  topics {:>6.1}  coherence {:.4}  diversity {:.4}  quality {:.4}  runs {}",
                r.n_topics, r.coherence, r.diversity, r.quality, r.runs_averaged
            ),
            None => format!("{a:<13} {s:>4}  all runs failed"),
        };
        writeln!(out, "{line}").map_err(io_at(Stage::Output))?;
    }
    let failed = result.raw.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        writeln!(out, "{failed} run(s) failed; see grid_runs.csv").map_err(io_at(Stage::Output))?;
    }
    Ok(())
}

fn cmd_synth(out: &Path, templates: usize, docs_per_template: usize, seed: u64) -> Result<(), PipelineError> {
    let corpus = generate_synthetic_corpus(&SynthConfig {
        n_templates: templates,
        docs_per_template,
        seed,
        ..SynthConfig::default()
    });
    let mut lines = Vec::new();
    let mut truth = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::new(Stage::Output, e);
    truth.write_record(["id", "template", "name"]).map_err(csv_err)?;
    for (src, &t) in corpus.sources.iter().zip(&corpus.truth) {
        if let SourceDoc::Fields { id, subject, body } = src {
            let rec = serde_json::json!({"id": id, "subject": subject, "body": body});
            writeln!(lines, "{rec}").map_err(io_at(Stage::Output))?;
        }
        truth
            .write_record([src.id(), &t.to_string(), &corpus.template_names[t]])
            .map_err(csv_err)?;
    }
    let truth = truth.into_inner().map_err(|e| PipelineError::new(Stage::Output, e.into_error()))?;
    write_file(&out.join("corpus.jsonl"), &lines)?;
    write_file(&out.join("truth.csv"), &truth)?;
    save_embeddings(&out.join("embeddings.emb"), &corpus.embeddings)
        .map_err(|e| PipelineError::new(Stage::Embeddings, e))?;
    println!(
        "{} documents from {} templates written to {}",
        corpus.sources.len(),
        corpus.template_names.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    common: &Common,
    topics_path: &Path,
    algorithm: Option<Algorithm>,
    size: Option<usize>,
) -> Result<(), PipelineError> {
    let cfg = build_config(common)?;
    let text = fs::read_to_string(topics_path).map_err(io_at(Stage::Eval))?;
    let topics: Vec<TopicModel> = serde_json::from_str(&text).map_err(|e| PipelineError::new(Stage::Eval, e))?;

    let sources = load_input(&cfg)?;
    let outcome = ingest(&sources, &cfg.ingest).map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let mut stopwords = english_stopwords();
    for path in &cfg.stopwords {
        stopwords.extend(load_stopwords(path).map_err(|e| PipelineError::new(Stage::Topics, e))?);
    }
    let reference: Vec<Vec<String>> = outcome.docs.iter().map(|d| tokenize(&d.full_text, &stopwords)).collect();

    let words: Vec<Vec<String>> = topics
        .iter()
        .map(|t| t.keywords().into_iter().take(cfg.eval.top_n_words).collect())
        .collect();
    let coherence =
        npmi_coherence_detailed(&words, &reference, &cfg.eval).map_err(|e| PipelineError::new(Stage::Eval, e))?;
    for w in &coherence.missing_words {
        log::warn!("{w:?} does not occur in the reference corpus");
    }
    let report = EvalReport::new(
        algorithm.unwrap_or(cfg.cluster.algorithm),
        size.unwrap_or(cfg.cluster.min_cluster_size),
        topics.len() as f64,
        coherence.overall,
        topic_diversity(&words),
    );
    let json = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::new(Stage::Output, e))?;
    println!("{json}");
    Ok(())
}
