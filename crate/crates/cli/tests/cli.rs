use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn plaus(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plaus"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("plaus runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

const CONFIG: &str = r#"
version = 1
results_dir = "results"

[corpus]
name = "synthetic"

[corpus.synthetic]
n_train = 48
n_val = 16

[model]
embedding_dim = 8
hidden_dim = 4

[constraint]
kind = "supervised"
lambda = 0.1

[training]
batch_size = 16
max_epochs = 2
seeds = [0, 1]

[grid]
lambdas = [0.0, 0.1]
"#;

/// Every opened element is closed in order; void elements and
/// self-closing tags excepted.
fn well_formed(html: &str) -> Result<(), String> {
    const VOID: [&str; 2] = ["meta", "br"];
    let mut stack: Vec<String> = Vec::new();
    let mut rest = html;
    while let Some(start) = rest.find('<') {
        let end = rest[start..].find('>').ok_or("unterminated tag")? + start;
        let tag = &rest[start + 1..end];
        rest = &rest[end + 1..];
        if tag.starts_with('!') || tag.ends_with('/') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name => {}
                other => return Err(format!("</{name}> closes {other:?}")),
            }
        } else {
            let name = tag.split_whitespace().next().unwrap_or("").to_string();
            if !VOID.contains(&name.as_str()) {
                stack.push(name);
            }
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed {stack:?}"))
    }
}

#[test]
fn html_checker_rejects_broken_markup() {
    assert!(well_formed("<p><b>x</b></p>").is_ok());
    assert!(well_formed("<p><b>x</p></b>").is_err());
    assert!(well_formed("<div>").is_err());
}

#[test]
fn synthetic_ingest_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&plaus(
        &[
            "ingest",
            "--corpus",
            "synthetic",
            "--split",
            "val",
            "--out",
            "a.jsonl",
        ],
        d,
    ));
    ok(&plaus(
        &[
            "ingest",
            "--corpus",
            "synthetic",
            "--split",
            "val",
            "--out",
            "b.jsonl",
        ],
        d,
    ));
    ok(&plaus(
        &[
            "ingest",
            "--corpus",
            "synthetic",
            "--split",
            "val",
            "--seed",
            "3",
            "--out",
            "c.jsonl",
        ],
        d,
    ));
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.jsonl")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 500);
}

#[test]
fn esnli_ingest_uses_the_tagger_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cache = d.join("tags.jsonl");
    std::fs::copy(fixtures().join("tagger.jsonl"), &cache).unwrap();
    let esnli = fixtures().join("esnli");
    let out = plaus(
        &[
            "ingest",
            "--corpus",
            "esnli",
            "--in",
            esnli.to_str().unwrap(),
            "--split",
            "val",
            "--tagger-cache",
            cache.to_str().unwrap(),
            "--out",
            "dev.jsonl",
        ],
        d,
    );
    ok(&out);
    let text = std::fs::read_to_string(d.join("dev.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["task"], "nli");
    assert_eq!(
        rows[0]["annotation"][0],
        serde_json::json!([0, 0, 0, 1, 0, 1, 0])
    );
    assert_eq!(rows[2]["segments"][1][2]["lemma"], "be");

    let missing = plaus(
        &[
            "ingest",
            "--corpus",
            "esnli",
            "--in",
            esnli.to_str().unwrap(),
            "--split",
            "val",
            "--out",
            "x.jsonl",
        ],
        d,
    );
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("tagger"));
}

#[test]
fn heuristics_for_a_classification_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&plaus(
        &["ingest", "--corpus", "synthetic", "--out", "train.jsonl"],
        d,
    ));
    ok(&plaus(
        &[
            "heuristics",
            "--corpus",
            "train.jsonl",
            "--task",
            "classification",
            "--table-out",
            "freq.csv",
            "--out",
            "heur.jsonl",
        ],
        d,
    ));
    let text = std::fs::read_to_string(d.join("heur.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2000);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let sum: f64 = first["heuristic"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(std::fs::read_to_string(d.join("freq.csv"))
        .unwrap()
        .starts_with("lemma,frequency"));
}

#[test]
fn sweep_report_evaluate_render() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.toml"), CONFIG).unwrap();

    let first = plaus(&["sweep", "--config", "exp.toml", "--deterministic"], d);
    ok(&first);
    assert!(
        String::from_utf8_lossy(&first.stdout).contains("4 cells: 4 trained, 0 skipped, 0 failed")
    );
    let again = plaus(&["sweep", "--config", "exp.toml"], d);
    ok(&again);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 trained, 4 skipped"));

    ok(&plaus(
        &["report", "--config", "exp.toml", "--out", "tables"],
        d,
    ));
    let agg = std::fs::read_to_string(d.join("tables/aggregated.csv")).unwrap();
    assert!(agg.starts_with("corpus,constraint,layers,lambda,split,metric,n,mean,min,max"));
    assert!(agg
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(6) == Some("2")));
    let missing_axis = plaus(
        &[
            "report", "--config", "exp.toml", "--layers", "3", "--out", "t2",
        ],
        d,
    );
    assert_eq!(missing_axis.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_axis.stderr).contains("layers=3"));
    let empty = plaus(&["report", "--store", "nowhere", "--out", "t3"], d);
    assert_eq!(empty.status.code(), Some(1));

    let checkpoint = std::fs::read_dir(d.join("results"))
        .unwrap()
        .map(|e| e.unwrap().path().join("checkpoint.bin"))
        .find(|p| p.is_file())
        .unwrap();
    let ck = checkpoint.to_str().unwrap();
    ok(&plaus(
        &[
            "evaluate",
            "--checkpoint",
            ck,
            "--split",
            "val",
            "--out",
            "eval",
        ],
        d,
    ));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["n_examples"], 16);
    let wrong = plaus(
        &["evaluate", "--checkpoint", ck, "--vocab-hash", "deadbeef"],
        d,
    );
    assert_eq!(wrong.status.code(), Some(1));

    for format in ["text", "html"] {
        let a = plaus(
            &[
                "render",
                "--checkpoint",
                ck,
                "--format",
                format,
                "--limit",
                "3",
            ],
            d,
        );
        let b = plaus(
            &[
                "render",
                "--checkpoint",
                ck,
                "--format",
                format,
                "--limit",
                "3",
            ],
            d,
        );
        ok(&a);
        assert_eq!(a.stdout, b.stdout);
        if format == "html" {
            well_formed(&String::from_utf8(a.stdout).unwrap()).unwrap();
        }
    }
}

#[test]
fn train_is_reproducible_in_deterministic_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.toml"), CONFIG).unwrap();
    let a = plaus(
        &[
            "train",
            "--config",
            "exp.toml",
            "--seed",
            "5",
            "--deterministic",
            "--out",
            "r1",
        ],
        d,
    );
    let b = plaus(
        &[
            "train",
            "--config",
            "exp.toml",
            "--seed",
            "5",
            "--deterministic",
            "--out",
            "r2",
        ],
        d,
    );
    ok(&a);
    assert_eq!(a.stdout, b.stdout);
    let hash = std::fs::read_dir(d.join("r1"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .file_name();
    let ck1 = std::fs::read(d.join("r1").join(&hash).join("checkpoint.bin")).unwrap();
    let ck2 = std::fs::read(d.join("r2").join(&hash).join("checkpoint.bin")).unwrap();
    assert_eq!(ck1, ck2);
    let h1 = std::fs::read(d.join("r1").join(&hash).join("history.csv")).unwrap();
    assert_eq!(
        h1,
        std::fs::read(d.join("r2").join(&hash).join("history.csv")).unwrap()
    );
}

#[test]
fn missing_config_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = plaus(&["sweep"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
