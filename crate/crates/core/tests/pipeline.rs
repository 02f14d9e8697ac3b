use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mailtopics_core::cluster::{Algorithm, ClusterParams};
use mailtopics_core::embedding::{load_embeddings, save_embeddings};
use mailtopics_core::labeler::LabelerMode;
use mailtopics_core::pipeline::{
    generate_synthetic_corpus, prepare, reduce_stage, analyze, run_on, run_pipeline, run_prepared,
    seeded_reduce_config, write_outputs, PipelineConfig, Stage, SynthConfig, SyntheticCorpus, REPORT_COLUMNS,
};
use mailtopics_core::ingest::SourceDoc;

fn small_corpus() -> SyntheticCorpus {
    generate_synthetic_corpus(&SynthConfig {
        n_templates: 4,
        docs_per_template: 60,
        ..SynthConfig::default()
    })
}

fn config(out: &Path, algorithm: Algorithm) -> PipelineConfig {
    PipelineConfig {
        cluster: ClusterParams::new(algorithm, 20),
        output_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (headers, rows)
}

#[test]
fn full_synthetic_run_meets_schema() {
    let corpus = generate_synthetic_corpus(&SynthConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        output_dir: dir.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    let report = run_on(&cfg, &corpus.sources, Some(corpus.embeddings.clone())).unwrap();
    assert!(report.eval.n_topics >= 10.0, "{} topics", report.eval.n_topics);
    assert_eq!(report.rows.len() as f64, report.eval.n_topics);
    assert!(report.rows.iter().all(|r| r.cluster_id >= 0));
    assert!(report.label_fallbacks.is_empty());

    let (headers, rows) = read_csv(&dir.path().join("report.csv"));
    assert_eq!(headers, REPORT_COLUMNS);
    assert_eq!(rows.len(), report.rows.len());
    for (row, want) in rows.iter().zip(&report.rows) {
        assert_eq!(row[1].split(' ').count(), 4);
        assert!(row[2].starts_with("['") && row[2].ends_with("']"));
        assert!(row[4].starts_with('{') && row[4].ends_with('}'));
        assert_eq!(row[3], want.semantic_meaning);
    }

    let (_, assignments) = read_csv(&dir.path().join("assignments.csv"));
    assert_eq!(assignments.len(), 1200);
    let outliers = assignments.iter().filter(|r| r[1] == "-1").count();
    assert_eq!(outliers, report.n_outliers);

    for name in ["report.json", "ledger.json", "topics.json", "lexicon.json", "run_meta.json"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let svg = fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("#b0b0b0") || outliers == 0);
    assert!(!dir.path().join("reachability.csv").exists());
}

#[test]
fn optics_run_writes_reachability() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        scatter: false,
        ..config(dir.path(), Algorithm::OpticsXi)
    };
    run_on(&cfg, &corpus.sources, Some(corpus.embeddings.clone())).unwrap();
    let (headers, rows) = read_csv(&dir.path().join("reachability.csv"));
    assert_eq!(headers.len(), 3);
    assert_eq!(rows.len(), 240);
    assert!(!dir.path().join("scatter.svg").exists());
}

#[test]
fn reads_jsonl_and_embedding_file() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corpus.jsonl");
    let mut lines = String::new();
    for src in &corpus.sources {
        let SourceDoc::Fields { id, subject, body } = src else {
            panic!("synthetic sources are field records")
        };
        lines.push_str(&serde_json::json!({"id": id, "subject": subject, "body": body}).to_string());
        lines.push('\n');
    }
    fs::write(&input, lines).unwrap();
    let emb = dir.path().join("corpus.emb");
    save_embeddings(&emb, &corpus.embeddings).unwrap();

    let mut cfg = config(&dir.path().join("out"), Algorithm::HdbscanEom);
    cfg.input = Some(input);
    cfg.provider.file_path = Some(emb);
    let from_files = run_pipeline(&cfg).unwrap();
    // the file stores single precision, so compare against what it holds
    let ids: Vec<String> = corpus.sources.iter().map(|s| s.id().to_string()).collect();
    let stored = load_embeddings(cfg.provider.file_path.as_ref().unwrap(), &ids).unwrap();
    let direct = run_on(&cfg, &corpus.sources, Some(stored)).unwrap();
    assert_eq!(from_files, direct);
    assert_eq!(from_files.ledger.retained, 240);
}

#[test]
fn replayed_labels_fill_semantic_meaning() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("labels.json");
    let labels: BTreeMap<String, String> = (0..10).map(|i| (i.to_string(), format!("Recorded label {i}"))).collect();
    fs::write(&fixture, serde_json::to_string(&labels).unwrap()).unwrap();

    let mut cfg = config(&dir.path().join("out"), Algorithm::HdbscanEom);
    cfg.labeler.mode = LabelerMode::Remote;
    cfg.labeler_fixture = Some(fixture);
    let report = run_on(&cfg, &corpus.sources, Some(corpus.embeddings.clone())).unwrap();
    assert!(!report.rows.is_empty());
    for row in &report.rows {
        assert_eq!(row.semantic_meaning, format!("Recorded label {}", row.cluster_id));
    }
}

#[test]
fn unreachable_labeler_falls_back_to_stub() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir.path().join("out"), Algorithm::HdbscanEom);
    cfg.scatter = false;
    cfg.labeler.mode = LabelerMode::Remote;
    cfg.labeler.endpoint_url = Some("http://127.0.0.1:9/complete".into());
    cfg.labeler.retries = 0;
    cfg.labeler.timeout_s = 2;
    let report = run_on(&cfg, &corpus.sources, Some(corpus.embeddings.clone())).unwrap();
    assert_eq!(report.label_fallbacks.len(), report.rows.len());
    for row in &report.rows {
        let words: Vec<&str> = row.keywords.iter().take(3).map(String::as_str).collect();
        assert_eq!(row.semantic_meaning.to_lowercase(), words.join(" "));
    }
}

#[test]
fn failed_write_removes_partial_outputs() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        scatter: false,
        ..config(dir.path(), Algorithm::HdbscanEom)
    };
    let prepared = prepare(&cfg, &corpus.sources, Some(corpus.embeddings.clone())).unwrap();
    let (reduced, info) = reduce_stage(&prepared.embeddings, &seeded_reduce_config(&cfg), 0.8).unwrap();
    let analysis = analyze(&prepared, &cfg, &reduced, &info).unwrap();
    let artifacts = run_prepared(&prepared, &cfg, analysis).unwrap();

    // a directory where a file should go makes the third write fail
    fs::create_dir(dir.path().join("assignments.csv")).unwrap();
    let err = write_outputs(dir.path(), &artifacts).unwrap_err();
    assert_eq!(err.stage, Stage::Output);
    assert!(!dir.path().join("report.json").exists());
    assert!(!dir.path().join("report.csv").exists());
}

#[test]
fn errors_name_their_stage() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Algorithm::HdbscanEom);

    let blocked: Vec<SourceDoc> = (0..3)
        .map(|i| SourceDoc::Fields {
            id: format!("d{i}"),
            subject: "Spam digest".into(),
            body: "body".into(),
        })
        .collect();
    let err = run_on(&cfg, &blocked, None).unwrap_err();
    assert_eq!(err.stage, Stage::Ingest);
    assert!(err.to_string().starts_with("stage ingest:"));

    let err = run_on(&cfg, &corpus.sources, None).unwrap_err();
    assert_eq!(err.stage, Stage::Embeddings);

    let bad = PipelineConfig {
        cluster: ClusterParams::new(Algorithm::HdbscanEom, 1),
        ..cfg
    };
    assert_eq!(run_on(&bad, &corpus.sources, None).unwrap_err().stage, Stage::Config);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}
