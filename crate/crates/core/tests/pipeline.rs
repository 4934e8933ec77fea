mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use patenteb::commands::cmd_build;
use patenteb::corpus::{write_corpus_jsonl, write_corpus_parquet, CorpusError, CorpusFormat};
use patenteb::fixture::{generate_corpus, FixtureConfig};
use patenteb::taskgen::{BuildConfig, BuildManifest, MANIFEST_FILE};
use patenteb::Error;

use common::{build_small, small_fixture};

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn build_writes_every_task_file_and_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = build_small(a.path());
    let mut mb = build_small(b.path());
    assert_ne!(ma.corpus.path, mb.corpus.path);
    mb.corpus.path.clone_from(&ma.corpus.path);
    assert!(ma == mb, "manifests differ beyond the corpus path");
    let mut fa = dir_bytes(&a.path().join("tasks"));
    let mut fb = dir_bytes(&b.path().join("tasks"));
    assert_eq!(fa.keys().filter(|n| n.ends_with(".parquet")).count(), 41);
    assert!(fa.remove(MANIFEST_FILE).is_some());
    fb.remove(MANIFEST_FILE);
    assert!(fa == fb, "task files differ");
    let manifest_a = fs::read(a.path().join("tasks").join(MANIFEST_FILE)).unwrap();

    // Rebuilding in place overwrites with the same bytes.
    build_small(a.path());
    let mut again = dir_bytes(&a.path().join("tasks"));
    assert!(again.remove(MANIFEST_FILE).unwrap() == manifest_a);
    assert!(again == fb);
    assert!(BuildManifest::read(&a.path().join("tasks")).unwrap() == ma);
}

#[test]
fn parquet_and_jsonl_corpora_build_the_same_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&FixtureConfig {
        families: 600,
        ..small_fixture()
    });
    let js = dir.path().join("c.jsonl");
    let pq = dir.path().join("c.parquet");
    write_corpus_jsonl(&corpus, &js).unwrap();
    write_corpus_parquet(&corpus, &pq).unwrap();
    cmd_build(&js, None, BuildConfig::desk(), &dir.path().join("a")).unwrap();
    cmd_build(&pq, Some(CorpusFormat::Parquet), BuildConfig::desk(), &dir.path().join("b")).unwrap();
    let mut a = dir_bytes(&dir.path().join("a"));
    let mut b = dir_bytes(&dir.path().join("b"));
    // Manifests differ only in the recorded corpus path.
    a.remove(MANIFEST_FILE);
    b.remove(MANIFEST_FILE);
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    assert!(differing.is_empty(), "{differing:?}");
}

#[test]
fn corpus_missing_a_column_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    write_corpus_jsonl(&generate_corpus(&FixtureConfig { families: 50, ..small_fixture() }), &good).unwrap();
    let text = fs::read_to_string(&good).unwrap();
    let mut first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    first.as_object_mut().unwrap().remove("abstract");
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, format!("{first}\n{}", text.lines().skip(1).collect::<Vec<_>>().join("\n"))).unwrap();

    let err = cmd_build(&bad, None, BuildConfig::desk(), &dir.path().join("out")).unwrap_err();
    assert!(
        matches!(&err, Error::Corpus(CorpusError::SchemaMismatch { column, .. }) if column == "abstract"),
        "{err}"
    );
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_extension_needs_an_explicit_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    fs::write(&path, "").unwrap();
    let err = cmd_build(&path, None, BuildConfig::desk(), &dir.path().join("out")).unwrap_err();
    assert!(err.to_string().contains("--format"));
}
