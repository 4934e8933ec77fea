mod common;

use patenteb::ablate::{structural_trim_eval, suite_for_variant, AblationGrid};
use patenteb::commands::{cmd_ablate, EmbeddingSource};
use patenteb::corpus::StructuralVariant;
use patenteb::eval::{suite_texts, EvalOptions, TaskSuite};
use patenteb::embed_io::{embed_texts, store_embeddings, EmbedOptions, HashingProvider, PromptMode};
use patenteb::fixture::generate_corpus;
use patenteb::taskgen::{Records, TaskId};

use common::{build_small, small_fixture, spawn_mock_provider, MOCK_DIM};

fn csv_rows(path: &std::path::Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["variant", "task", "metric", "value"]);
    r.records().map(Result::unwrap).collect()
}

#[test]
fn truncation_grid_runs_offline_from_an_embedding_file() {
    let dir = tempfile::tempdir().unwrap();
    build_small(dir.path());
    let tasks = dir.path().join("tasks");
    let suite = TaskSuite::load(&tasks).unwrap();
    let texts = suite_texts(&suite, PromptMode::Table);
    let m = embed_texts(&HashingProvider::new(64), &texts, &EmbedOptions::default()).unwrap();
    let emb = dir.path().join("e.emb");
    store_embeddings(&m, &emb).unwrap();

    let grid = AblationGrid {
        truncate: vec![8, 32, 64],
        ..AblationGrid::default()
    };
    let out = dir.path().join("grid");
    let (csv, n) = cmd_ablate(&tasks, &EmbeddingSource::File(emb), &grid, &EvalOptions::default(), &out).unwrap();
    assert_eq!(n, 3 * 15);
    assert_eq!(csv_rows(&csv).len(), 45);
    let r8 = patenteb::report::EvalReport::read_json(&out.join("truncate-8.json")).unwrap();
    assert_eq!(r8.config.truncate_dim, Some(8));

    let too_wide = AblationGrid {
        truncate: vec![65],
        ..AblationGrid::default()
    };
    let err = cmd_ablate(&tasks, &EmbeddingSource::Hashing(64), &too_wide, &EvalOptions::default(), &out).unwrap_err();
    assert!(err.to_string().contains("truncation dimension 65"));
}

#[test]
fn layer_grid_needs_the_capability() {
    let dir = tempfile::tempdir().unwrap();
    build_small(dir.path());
    let tasks = dir.path().join("tasks");
    let grid = AblationGrid {
        layers: vec![12],
        ..AblationGrid::default()
    };
    let mock = spawn_mock_provider(None);
    for src in [EmbeddingSource::Hashing(16), EmbeddingSource::Url(mock.url.clone())] {
        let err = cmd_ablate(&tasks, &src, &grid, &EvalOptions::default(), &dir.path().join("g")).unwrap_err();
        assert!(err.to_string().contains("layer capping capability"), "{err}");
    }
}

#[test]
fn mixed_grid_row_count_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    build_small(dir.path());
    let tasks = dir.path().join("tasks");
    let mock = spawn_mock_provider(Some(24));
    let grid = AblationGrid {
        truncate: vec![16, MOCK_DIM],
        layers: vec![6, 24],
        structural: vec![StructuralVariant::Full, StructuralVariant::Trim1Last],
    };
    let out = dir.path().join("grid");
    let (csv, n) = cmd_ablate(&tasks, &EmbeddingSource::Url(mock.url.clone()), &grid, &EvalOptions::default(), &out).unwrap();
    assert_eq!(n, grid.len() * 15);
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 90);
    assert_eq!(&rows[0][0], "truncate-16");

    let read = |name: &str| patenteb::report::EvalReport::read_json(&out.join(name)).unwrap();
    let l6 = read("layers-6.json");
    assert_eq!(l6.config.layer_cap, Some(6));
    assert!(l6.timing.as_ref().unwrap().speed_ratio.is_some());
    assert_eq!(read("structural-trim1Last.json").config.variant, StructuralVariant::Trim1Last);
    assert!(read("structural-full.json").timing.is_none());
}

#[test]
fn title_only_variant_rebuilds_with_titles() {
    let dir = tempfile::tempdir().unwrap();
    build_small(dir.path());
    let tasks = dir.path().join("tasks");
    let suite = suite_for_variant(&tasks, StructuralVariant::Trim1Last).unwrap();
    assert_eq!(suite.variant, StructuralVariant::Trim1Last);
    let corpus = generate_corpus(&small_fixture());
    let titles: std::collections::HashSet<&str> = corpus.families().iter().map(|f| f.title.as_str()).collect();
    let Records::Labeled(rows) = &suite.tasks[&TaskId::ClassText2Ipc3].test else { panic!() };
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| titles.contains(r.text.as_str())));

    // Same record identities as the full build: only texts change.
    let full = TaskSuite::load(&tasks).unwrap();
    assert_eq!(full.tasks[&TaskId::RetrievalIn].test.len(), suite.tasks[&TaskId::RetrievalIn].test.len());

    let report = structural_trim_eval(&tasks, StructuralVariant::NoSep, &HashingProvider::new(16), &EvalOptions::default()).unwrap();
    assert_eq!(report.config.variant, StructuralVariant::NoSep);
}
