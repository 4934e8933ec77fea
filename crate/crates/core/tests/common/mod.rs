#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use patenteb::corpus::write_corpus_jsonl;
use patenteb::embed_io::HashingProvider;
use patenteb::fixture::{generate_corpus, FixtureConfig};
use patenteb::taskgen::{BuildConfig, BuildManifest};
use serde_json::{json, Value};

pub const MOCK_DIM: usize = 48;
pub const MOCK_LAYERS: usize = 24;

/// Embedding service speaking the `/info` + `/embed` protocol. Layer caps
/// zero out a proportional tail of each vector.
pub struct MockProvider {
    pub url: String,
    pub embed_calls: Arc<AtomicUsize>,
}

pub fn spawn_mock_provider(max_layers: Option<usize>) -> MockProvider {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind mock provider");
    let url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    thread::spawn(move || {
        let hashing = HashingProvider::new(MOCK_DIM);
        for mut req in server.incoming_requests() {
            let (status, body) = match (req.method().as_str(), req.url()) {
                ("GET", "/info") => (
                    200,
                    json!({"name": "mock", "dim": MOCK_DIM, "max_layers": max_layers, "max_tokens": 512}),
                ),
                ("POST", "/embed") => {
                    counter.fetch_add(1, Ordering::SeqCst);
                    let mut raw = String::new();
                    req.as_reader().read_to_string(&mut raw).unwrap();
                    let v: Value = serde_json::from_str(&raw).unwrap();
                    let cap = v["layer_cap"].as_u64().map(|c| c as usize);
                    match (cap, max_layers) {
                        (Some(_), None) => (400, json!({"error": "layer capping unsupported"})),
                        (Some(c), Some(m)) if c == 0 || c > m => (400, json!({"error": "bad layer"})),
                        _ => {
                            let keep = cap.map_or(MOCK_DIM, |c| (MOCK_DIM * c).div_ceil(MOCK_LAYERS).max(2));
                            let vectors: Vec<Vec<f32>> = v["texts"]
                                .as_array()
                                .unwrap()
                                .iter()
                                .map(|t| {
                                    let mut e = hashing.embed_one(t.as_str().unwrap());
                                    e[keep..].iter_mut().for_each(|x| *x = 0.0);
                                    e
                                })
                                .collect();
                            (200, json!({"dim": MOCK_DIM, "vectors": vectors, "normalized": false}))
                        }
                    }
                }
                _ => (404, json!({"error": "not found"})),
            };
            let resp = tiny_http::Response::from_string(body.to_string())
                .with_status_code(status)
                .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap());
            let _ = req.respond(resp);
        }
    });
    MockProvider { url, embed_calls: calls }
}

pub fn small_fixture() -> FixtureConfig {
    FixtureConfig::small()
}

/// Writes the small fixture corpus and builds it with the desk preset.
pub fn build_small(dir: &Path) -> BuildManifest {
    let corpus_path = dir.join("corpus.jsonl");
    write_corpus_jsonl(&generate_corpus(&small_fixture()), &corpus_path).unwrap();
    patenteb::commands::cmd_build(&corpus_path, None, BuildConfig::desk(), &dir.join("tasks")).unwrap()
}
