use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mailtopics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mailtopics"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mailtopics(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    ok(&["synth", "--out", p(dir), "--templates", "4", "--docs-per-template", "60"]);
}

#[test]
fn synth_then_run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    assert_eq!(fs::read_to_string(data.join("corpus.jsonl")).unwrap().lines().count(), 240);
    assert_eq!(fs::read_to_string(data.join("truth.csv")).unwrap().lines().count(), 241);

    let out = tmp.path().join("run");
    let (corpus, emb) = (data.join("corpus.jsonl"), data.join("embeddings.emb"));
    let args = [
        "run",
        "--input",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--min-cluster-size",
        "20",
        "--stub-labeler",
        "--out",
        p(&out),
    ];
    let stdout = ok(&args);
    assert!(stdout.contains("240 documents, 4 topics"), "{stdout}");
    for name in ["report.json", "report.csv", "assignments.csv", "ledger.json", "scatter.svg"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let first = fs::read(out.join("report.json")).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["config"]["cluster"]["min_cluster_size"], 20);
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);

    let eval = ok(&[
        "eval",
        "--input",
        p(&data.join("corpus.jsonl")),
        "--topics",
        p(&out.join("topics.json")),
        "--min-cluster-size",
        "20",
    ]);
    let eval: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(eval["n_topics"], 4.0);
    assert_eq!(eval["coherence"], report["eval"]["coherence"]);
    assert_eq!(eval["diversity"], report["eval"]["diversity"]);
}

#[test]
fn grid_writes_aggregated_and_raw_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let out = tmp.path().join("grid");
    let stdout = ok(&[
        "grid",
        "--input",
        p(&data.join("corpus.jsonl")),
        "--embeddings",
        p(&data.join("embeddings.emb")),
        "--algorithm",
        "hdbscan_eom,optics_xi",
        "--min-cluster-size",
        "20,40",
        "--runs",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(stdout.lines().count(), 4);
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(
        lines[0],
        "algorithm,min_cluster_size,n_topics,coherence,diversity,quality,granularity,runs_averaged"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",2")));
    assert_eq!(fs::read_to_string(out.join("grid_runs.csv")).unwrap().lines().count(), 9);
}

#[test]
fn ingest_reports_filtering() {
    let tmp = tempfile::tempdir().unwrap();
    let mail = tmp.path().join("mail");
    fs::create_dir(&mail).unwrap();
    fs::write(
        mail.join("a.eml"),
        "Subject: Payment receipt\r\nContent-Type: text/plain\r\n\r\nHello, please acknowledge upon receipt.\r\n",
    )
    .unwrap();
    fs::write(
        mail.join("b.eml"),
        "Subject: Virus alert\r\nContent-Type: text/plain\r\n\r\nquarantined\r\n",
    )
    .unwrap();
    fs::write(
        mail.join("c.eml"),
        "Subject: Your photos\r\nContent-Type: text/html\r\n\r\n<p>See the <b>pictures</b> attached</p>\r\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let stdout = ok(&["ingest", "--input", p(&mail), "--out", p(&out)]);
    assert!(stdout.starts_with("2 of 3 documents retained"), "{stdout}");
    let corpus = fs::read_to_string(out.join("corpus.jsonl")).unwrap();
    let docs: Vec<serde_json::Value> = corpus.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(docs[0]["full_text"], "Payment receipt Hello, please acknowledge upon receipt.");
    assert_eq!(docs[1]["full_text"], "Your photos See the pictures attached");
    let ledger: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["blocklisted_subject"], 1);
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(Vec<String>, &str); 3] = [
        (vec!["run".into(), "--stub-labeler".into()], "stage ingest"),
        (
            vec!["run".into(), "--config".into(), p(&tmp.path().join("missing.json")).into()],
            "stage config",
        ),
        (
            vec![
                "run".into(),
                "--input".into(),
                p(tmp.path()).into(),
                "--embeddings".into(),
                p(&tmp.path().join("none.emb")).into(),
            ],
            "stage embeddings",
        ),
    ];
    fs::write(tmp.path().join("one.eml"), "Subject: Hi\r\n\r\nbody text\r\n").unwrap();
    for (args, needle) in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = mailtopics(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error: ") && stderr.contains(needle), "{args:?}: {stderr}");
    }
    let out = mailtopics(&["run", "--algorithm", "kmeans"]);
    assert_eq!(out.status.code(), Some(2));
}
