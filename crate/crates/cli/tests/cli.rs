use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn patenteb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patenteb"))
        .args(args)
        .env_remove("PATENTEB_CACHE_DIR")
        .output()
        .expect("run patenteb")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Built {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

/// Fixture corpus and desk build shared by the tests in this file.
fn built() -> &'static Built {
    static BUILT: OnceLock<Built> = OnceLock::new();
    BUILT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = root.join("corpus.jsonl");
        let o = patenteb(&["fixture", s(&corpus), "--families", "1200", "--domains", "10"]);
        assert!(o.status.success(), "{}", text(&o));
        let o = patenteb(&["build", s(&corpus), "-o", s(&root.join("tasks")), "--preset", "desk"]);
        assert!(o.status.success(), "{}", text(&o));
        assert!(text(&o).contains("built 41 task files"), "{}", text(&o));
        Built { _dir: dir, root }
    })
}

#[test]
fn eval_reports_do_not_depend_on_jobs() {
    let b = built();
    let tasks = b.root.join("tasks");
    let run = |jobs: &str, name: &str| {
        let out = b.root.join(name);
        let o = patenteb(&["--jobs", jobs, "eval", s(&tasks), "--hashing-dim", "64", "-o", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        assert!(text(&o).contains("overall"), "{}", text(&o));
        (fs::read(&out).unwrap(), fs::read(out.with_extension("csv")).unwrap())
    };
    assert_eq!(run("1", "one.json"), run("3", "three.json"));
}

#[test]
fn eval_requires_exactly_one_source() {
    let tasks = built().root.join("tasks");
    let o = patenteb(&["eval", s(&tasks), "-o", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    let o = patenteb(&["eval", s(&tasks), "--hashing-dim", "8", "--embeddings-file", "x", "-o", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_corpus_exits_with_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"family_id\":\"F1\",\"title\":\"t\"}\n").unwrap();
    let o = patenteb(&["build", s(&bad), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("schema mismatch"), "{}", text(&o));
}

#[test]
fn ablate_truncation_grid_and_missing_layer_capability() {
    let b = built();
    let tasks = b.root.join("tasks");
    let grid = b.root.join("trunc.json");
    fs::write(&grid, r#"{"truncate": [8, 16]}"#).unwrap();
    let out = b.root.join("ablate");
    let o = patenteb(&["ablate", s(&tasks), "--hashing-dim", "32", "--grid", s(&grid), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("wrote 30 rows"), "{}", text(&o));
    let csv = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);

    let layers = b.root.join("layers.json");
    fs::write(&layers, r#"{"layers": [12]}"#).unwrap();
    let o = patenteb(&["ablate", s(&tasks), "--hashing-dim", "32", "--grid", s(&layers), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("layer capping capability"), "{}", text(&o));
}

#[test]
fn verify_passes_and_catches_the_ndcg_mutation() {
    let o = patenteb(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(!text(&o).contains("FAIL"));

    let o = patenteb(&["verify", "--mutate", "ndcg"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let failing: Vec<String> = text(&o).lines().filter(|l| l.contains("FAIL")).map(str::to_string).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].starts_with("ndcg@10"));
}
