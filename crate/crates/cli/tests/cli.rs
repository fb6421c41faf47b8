use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use deepsketch::datastore::{load_dataset, true_cardinality};
use deepsketch::queryir::parse_query;
use deepsketch::sketch::DeepSketch;
use serde_json::Value;

const SPEC: &str = r#"
correlation = 0.7
skew = 2.0

[fact]
name = "f"
rows = 3000
measures = [{ name = "m", kind = "integer", min = 0, max = 99 }]

[[dimensions]]
name = "a"
rows = 60
fk_column = "a_id"
attributes = [
  { name = "v", kind = "integer", min = 0, max = 9 },
  { name = "d", kind = "date", min = "2000-01-01", max = "2009-12-31" },
]

[[dimensions]]
name = "b"
rows = 40
fk_column = "b_id"
attributes = [{ name = "w", kind = "integer", min = 0, max = 19 }]
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_deepsketch"));
    cmd.env_remove("DEEPSKETCH_DATA_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    sketch: PathBuf,
}

/// Dataset from `SPEC` plus a small sketch over all tables.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let spec = root.join("spec.toml");
        std::fs::write(&spec, SPEC).unwrap();
        let data = root.join("data");
        let o = run(&["gen-data", "--spec", s(&spec), "--seed", "3", "--out", s(&data)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let sketch = root.join("small.dsk");
        let o = run(&[
            "train",
            "--data",
            s(&data),
            "--tables",
            "f,a,b",
            "--queries",
            "500",
            "--epochs",
            "5",
            "--samples",
            "50",
            "--hidden-units",
            "32",
            "--seed",
            "9",
            "--out",
            s(&sketch),
            "--quiet",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture {
            _dir: dir,
            root,
            data,
            sketch,
        }
    })
}

/// Replaces every scalar by a placeholder of its type and every array by
/// the shape of its first element.
fn shape(v: &Value) -> Value {
    match v {
        Value::Number(_) => Value::from(0),
        Value::String(_) => Value::from(""),
        Value::Bool(_) => Value::from(false),
        Value::Array(items) => Value::Array(items.iter().take(1).map(shape).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), shape(v))).collect()),
        other => other.clone(),
    }
}

/// Compares the shape of `actual` with a checked-in golden file; set
/// `UPDATE_GOLDEN=1` to rewrite it.
fn assert_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let got = shape(&serde_json::from_str(actual).unwrap());
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
    }
    let want: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(got, want, "{name} changed shape:\n{actual}");
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, SPEC).unwrap();
    let (one, two) = (dir.path().join("one"), dir.path().join("two"));
    for out in [&one, &two] {
        let o = run(&["gen-data", "--spec", s(&spec), "--seed", "5", "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut files: Vec<_> = std::fs::read_dir(&one)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    assert_eq!(files.len(), 4, "{files:?}");
    for f in &files {
        assert_eq!(std::fs::read(one.join(f)).unwrap(), std::fs::read(two.join(f)).unwrap());
    }
    let store = load_dataset(&one).unwrap();
    assert_eq!(store.table("f").unwrap().row_count(), 3000);
}

#[test]
fn gen_data_rejects_invalid_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, SPEC.replace("correlation = 0.7", "correlation = 3.0")).unwrap();
    let o = run(&["gen-data", "--spec", s(&spec), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("correlation"));
    let o = run(&["gen-data", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_reports_epochs_and_is_deterministic() {
    let fx = fixture();
    let out = fx.root.join("rerun.dsk");
    let o = run(&[
        "train",
        "--data",
        s(&fx.data),
        "--tables",
        "f,a,b",
        "--queries",
        "500",
        "--epochs",
        "5",
        "--samples",
        "50",
        "--hidden-units",
        "32",
        "--seed",
        "9",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let progress = stderr(&o);
    assert_eq!(
        progress.lines().filter(|l| l.starts_with("epoch")).count(),
        5,
        "{progress}"
    );
    assert!(stdout(&o).contains("wrote"));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&fx.sketch).unwrap());
    DeepSketch::load(&out).unwrap();
}

#[test]
fn train_failures_leave_no_file() {
    let fx = fixture();
    let out = fx.root.join("empty.dsk");
    let o = run(&["train", "--data", s(&fx.data), "--queries", "0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
    let o = run(&["train", "--data", s(&fx.data), "--tables", "a,b", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
    let o = run(&["train", "--data", s(&fx.root.join("missing")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let leftovers: Vec<_> = std::fs::read_dir(&fx.root)
        .unwrap()
        .filter_map(|e| e.unwrap().file_name().into_string().ok())
        .filter(|n| n.ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn data_dir_comes_from_environment() {
    let fx = fixture();
    let out = fx.root.join("env.dsk");
    let o = bin()
        .env("DEEPSKETCH_DATA_DIR", &fx.data)
        .args([
            "train",
            "--tables",
            "b",
            "--queries",
            "100",
            "--epochs",
            "1",
            "--samples",
            "10",
        ])
        .args(["--hidden-units", "8", "--quiet", "--out", s(&out)])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(DeepSketch::load(&out).unwrap().metadata().tables, ["b"]);
}

#[test]
fn estimate_prints_a_single_number() {
    let fx = fixture();
    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        "SELECT COUNT(*) FROM f f WHERE f.m < 50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    assert!(text.trim().parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn estimate_truth_matches_executor() {
    let fx = fixture();
    let sql = "SELECT COUNT(*) FROM f f, a a WHERE f.a_id = a.id AND a.v < 5 AND f.m > 20";
    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        sql,
        "--baselines",
        "--truth",
        "--data",
        s(&fx.data),
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let report: Value = serde_json::from_str(&text).unwrap();
    let store = load_dataset(&fx.data).unwrap();
    let truth = true_cardinality(&store, &parse_query(sql, store.schema()).unwrap()).unwrap();
    assert_eq!(report["truth"].as_u64(), Some(truth));
    let est = report["estimate"].as_f64().unwrap();
    let expected_q = est.max(1.0).max(truth as f64) / est.max(1.0).min(truth as f64).max(1.0);
    assert!((report["qerror"]["sketch"].as_f64().unwrap() - expected_q).abs() < 1e-9);
    assert_golden("estimate.json", &text);

    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        sql,
        "--baselines",
        "--truth",
        "--data",
        s(&fx.data),
    ]);
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().collect();
    assert!(rows[0].starts_with("estimator"));
    assert!(rows[1].starts_with("sketch") && rows[2].starts_with("sampling") && rows[3].starts_with("independence"));
    assert!(rows[4].starts_with("truth") && rows[4].ends_with(&truth.to_string()));
}

#[test]
fn estimate_errors_map_to_exit_codes() {
    let fx = fixture();
    let sketch = s(&fx.sketch);
    let sql = "SELECT COUNT(*) FROM f f WHERE f.m = ?";
    let o = run(&["estimate", "--sketch", sketch, "--sql", sql]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    let lines: Vec<&str> = err.lines().collect();
    let caret = lines.iter().position(|l| l.trim() == "^").expect("caret line");
    assert_eq!(lines[caret].find('^'), lines[caret - 1].find('?'), "{err}");

    let o = run(&["estimate", "--sketch", sketch, "--sql", "SELECT COUNT(* FROM f f"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["estimate", "--sketch", sketch, "--sql", "SELECT COUNT(*) FROM nope n"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = run(&[
        "estimate",
        "--sketch",
        sketch,
        "--sql",
        "SELECT COUNT(*) FROM f f WHERE f.zz = 1",
    ]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&[
        "estimate",
        "--sketch",
        sketch,
        "--sql",
        "SELECT COUNT(*) FROM f f",
        "--truth",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let corrupt = fx.root.join("corrupt.dsk");
    let mut bytes = std::fs::read(&fx.sketch).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&corrupt, bytes).unwrap();
    let o = run(&["estimate", "--sketch", s(&corrupt), "--sql", "SELECT COUNT(*) FROM f f"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn estimate_expands_templates() {
    let fx = fixture();
    let sql = "SELECT COUNT(*) FROM f f, b b WHERE f.b_id = b.id AND f.m = ?";
    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        sql,
        "--template",
        "--buckets",
        "4",
        "--truth",
        "--data",
        s(&fx.data),
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let report: Value = serde_json::from_str(&text).unwrap();
    let instances = report["instances"].as_array().unwrap();
    assert_eq!(instances.len(), 4);
    let store = load_dataset(&fx.data).unwrap();
    for inst in instances {
        let q = parse_query(inst["sql"].as_str().unwrap(), store.schema()).unwrap();
        assert_eq!(inst["truth"].as_u64(), Some(true_cardinality(&store, &q).unwrap()));
    }
    assert_golden("template.json", &text);

    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        "SELECT COUNT(*) FROM a a WHERE a.d = ?",
        "--template",
        "--year",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().next().unwrap().starts_with("value"));

    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        "SELECT COUNT(*) FROM a a",
        "--template",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&[
        "estimate",
        "--sketch",
        s(&fx.sketch),
        "--sql",
        "SELECT COUNT(*) FROM a a WHERE a.v = ?",
        "--template",
        "--year",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn workload(name: &str, text: &str) -> PathBuf {
    let path = fixture().root.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn eval_single_query_has_flat_quantiles() {
    let fx = fixture();
    let w = workload("one.sql", "# one query\nSELECT COUNT(*) FROM f f WHERE f.m < 30\n");
    let o = run(&[
        "eval",
        "--sketch",
        s(&fx.sketch),
        "--workload",
        s(&w),
        "--data",
        s(&fx.data),
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for summary in report["summaries"].as_array().unwrap() {
        let q = &summary["qerror"];
        let median = q["median"].as_f64().unwrap();
        for col in ["p90", "p95", "p99", "max", "mean"] {
            assert_eq!(q[col].as_f64().unwrap(), median);
        }
    }
}

#[test]
fn eval_truth_as_estimator_scores_one() {
    let fx = fixture();
    let w = workload(
        "mixed.sql",
        "SELECT COUNT(*) FROM f f WHERE f.m < 30\n\n\
         SELECT COUNT(*) FROM f f, a a WHERE f.a_id = a.id AND a.v = 3\n\
         # comment\n\
         SELECT COUNT(*) FROM f f, b b WHERE f.b_id = b.id AND b.w > 10 AND f.m = 7\n",
    );
    let o = run(&[
        "eval",
        "--sketch",
        s(&fx.sketch),
        "--workload",
        s(&w),
        "--data",
        s(&fx.data),
        "--with-truth",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["mixed", "median", "90th", "95th", "99th", "max", "mean"]);
    let names: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(names, ["sketch", "sampling", "independence", "truth"]);
    let truth_row: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(truth_row, [1.0; 6]);

    let o = run(&[
        "eval",
        "--sketch",
        s(&fx.sketch),
        "--workload",
        s(&w),
        "--data",
        s(&fx.data),
        "--with-truth",
        "--json",
    ]);
    assert_golden("eval.json", &stdout(&o));
}

#[test]
fn eval_errors() {
    let fx = fixture();
    let empty = workload("empty.sql", "# nothing here\n\n");
    let o = run(&[
        "eval",
        "--sketch",
        s(&fx.sketch),
        "--workload",
        s(&empty),
        "--data",
        s(&fx.data),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let bad = workload(
        "bad.sql",
        "SELECT COUNT(*) FROM f f\nSELECT COUNT(*) FROM f f WHERE f.m ! 3\n",
    );
    let o = run(&[
        "eval",
        "--sketch",
        s(&fx.sketch),
        "--workload",
        s(&bad),
        "--data",
        s(&fx.data),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn serve_answers_http() {
    let fx = fixture();
    let sketches = fx.root.join("served");
    std::fs::create_dir_all(&sketches).unwrap();
    std::fs::copy(&fx.sketch, sketches.join("small.dsk")).unwrap();
    let mut child = bin()
        .args([
            "serve",
            "--listen",
            "127.0.0.1:0",
            "--data",
            s(&fx.data),
            "--sketch-dir",
            s(&sketches),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .expect("address line")
        .to_string();

    let get = |path: &str| {
        let mut stream = TcpStream::connect(&addr).unwrap();
        write!(stream, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut resp = String::new();
        stream.read_to_string(&mut resp).unwrap();
        resp
    };
    let schema = get("/schema");
    let sketches_resp = get("/sketches");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(schema.starts_with("HTTP/1.1 200"), "{schema}");
    assert!(schema.contains("\"foreign_keys\""));
    assert!(sketches_resp.contains("\"small\""), "{sketches_resp}");
}
