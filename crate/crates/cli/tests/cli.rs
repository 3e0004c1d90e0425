use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn patreid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patreid"))
        .args(args)
        .output()
        .expect("run patreid")
}

fn ok(args: &[&str]) -> String {
    let out = patreid(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small benchmark plus vocabulary: 4 individuals x 3 views.
fn small_benchmark(dir: &Path) {
    ok(&[
        "synth",
        "--seed",
        "5",
        "--individuals",
        "4",
        "--views",
        "3",
        "--points",
        "40",
        "--out",
        p(dir),
    ]);
    ok(&[
        "build-vocab",
        "--manifest",
        p(&dir.join("manifest.csv")),
        "--out",
        p(&dir.join("vocab.txt")),
        "--gmm-k",
        "4",
        "--pca-dim",
        "16",
    ]);
}

#[test]
fn synth_writes_features_sidecars_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "synth",
        "--seed",
        "1",
        "--individuals",
        "3",
        "--views",
        "2",
        "--out",
        p(dir.path()),
    ]);
    assert!(stdout.trim().ends_with("manifest.csv"));
    let names: Vec<String> = fs::read_dir(dir.path().join("features"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".patf")).count(), 6);
    assert_eq!(names.iter().filter(|n| n.ends_with(".h")).count(), 6);
    let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 7);
    assert_eq!(
        manifest
            .lines()
            .filter(|l| l.contains(",database,"))
            .count(),
        3
    );
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--seed",
            "9",
            "--individuals",
            "2",
            "--views",
            "2",
            "--out",
            p(d.path()),
        ]);
    }
    for name in [
        "manifest.csv",
        "features/ind001_v01.patf",
        "features/ind001_v01.h",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn invalid_dropout_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = patreid(&["synth", "--dropout", "1.5", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dropout"));
}

#[test]
fn vocabulary_needs_database_entries() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--individuals", "2", "--out", p(dir.path())]);
    let manifest = dir.path().join("manifest.csv");
    let text = fs::read_to_string(&manifest).unwrap();
    let queries: String = text
        .lines()
        .enumerate()
        .filter(|(i, l)| *i == 0 || l.contains(",query,"))
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    let qonly = dir.path().join("queries.csv");
    fs::write(&qonly, queries).unwrap();
    let out = patreid(&[
        "build-vocab",
        "--manifest",
        p(&qonly),
        "--out",
        p(&dir.path().join("v.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no database entries"));
}

#[test]
fn missing_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let vocab = dir.path().join("nope.txt");
    let out = patreid(&["evaluate", "--manifest", p(&missing), "--vocab", p(&vocab)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest not found"));
    let out = patreid(&["build-vocab", "--manifest", p(&missing), "--out", p(&vocab)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn query_encode_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    let manifest = dir.path().join("manifest.csv");
    let vocab = dir.path().join("vocab.txt");

    // a database image queried against its own gallery ranks itself first
    let own = dir.path().join("features/ind002_v00.patf");
    let table = ok(&[
        "query",
        p(&own),
        "--manifest",
        p(&manifest),
        "--vocab",
        p(&vocab),
    ]);
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    let first: Vec<&str> = rows[0].split_whitespace().collect();
    assert_eq!(&first[..3], &["1", "ind002", "ind002_v00"]);

    let view = dir.path().join("features/ind001_v02.patf");
    let table = ok(&[
        "query",
        p(&view),
        "--manifest",
        p(&manifest),
        "--vocab",
        p(&vocab),
        "--topk",
        "2",
    ]);
    assert_eq!(table.lines().count(), 4);

    let emb = dir.path().join("emb");
    ok(&[
        "encode",
        "--manifest",
        p(&manifest),
        "--vocab",
        p(&vocab),
        "--out",
        p(&emb),
    ]);
    assert_eq!(
        fs::read_to_string(emb.join("database.emb"))
            .unwrap()
            .lines()
            .count(),
        5
    );
    assert_eq!(
        fs::read_to_string(emb.join("query.emb"))
            .unwrap()
            .lines()
            .count(),
        9
    );
    let stored = ok(&[
        "query",
        p(&view),
        "--manifest",
        p(&manifest),
        "--vocab",
        p(&vocab),
        "--topk",
        "2",
        "--embeddings",
        p(&emb.join("database.emb")),
    ]);
    assert_eq!(stored, table);

    let csv = dir.path().join("q.csv");
    let grid = ok(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--vocab",
        p(&vocab),
        "--topk",
        "1",
        "--per-query-csv",
        p(&csv),
    ]);
    assert!(grid.contains("top-1"));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.starts_with("# summary")).count(),
        4
    );
    assert_eq!(text.lines().filter(|l| l.starts_with("exp,")).count(), 8);

    let loo = dir.path().join("loo.csv");
    ok(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--vocab",
        p(&vocab),
        "--protocol",
        "loo",
        "--rule",
        "app",
        "--per-query-csv",
        p(&loo),
    ]);
    let text = fs::read_to_string(&loo).unwrap();
    let summaries: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("# summary"))
        .collect();
    assert_eq!(summaries.len(), 1);
    assert!(
        summaries[0].contains("queries=12 excluded=0"),
        "{}",
        summaries[0]
    );
}

#[test]
fn zero_topk_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    let out = patreid(&[
        "evaluate",
        "--manifest",
        p(&dir.path().join("manifest.csv")),
        "--vocab",
        p(&dir.path().join("vocab.txt")),
        "--topk",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
