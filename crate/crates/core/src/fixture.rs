//! Synthetic patent-family corpus with realistic structure: multi-code IPC
//! sets, intra-domain citation clusters, all abstract marker patterns and
//! shared inventors.

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Corpus, PatentFamily};
use crate::seed::{rng_for, DeterministicRng, DEFAULT_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixtureConfig {
    pub families: usize,
    pub domains: usize,
    pub inventors: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            families: 5000,
            domains: 30,
            inventors: 150,
            seed: DEFAULT_SEED,
        }
    }
}

impl FixtureConfig {
    /// A smaller corpus for quick tests.
    pub fn small() -> Self {
        Self {
            families: 1200,
            domains: 10,
            inventors: 40,
            seed: DEFAULT_SEED,
        }
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mer", "tri", "van", "sol", "pex", "dro", "ni", "gal", "tor", "quin", "bel", "ros", "um", "fen",
    "zar", "ip", "cor", "dal", "mo", "hex", "ul", "rav",
];

const GENERAL: [&str; 40] = [
    "device", "method", "system", "unit", "member", "layer", "portion", "surface", "control", "signal", "body",
    "element", "module", "assembly", "process", "apparatus", "circuit", "material", "structure", "housing",
    "the", "a", "of", "and", "with", "for", "to", "in", "is", "by", "which", "having", "that", "first", "second",
    "plurality", "configured", "provided", "wherein", "comprising",
];

fn pseudo_word(rng: &mut DeterministicRng) -> String {
    let n = rng.gen_range(2..4);
    (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect()
}

fn ipc_code(d: usize) -> String {
    let letter = (b'A' + (d % 8) as u8) as char;
    format!("{letter}{:02}", 1 + d / 8 * 3 + d % 3)
}

struct Vocab {
    domains: Vec<Vec<String>>,
}

impl Vocab {
    fn new(cfg: &FixtureConfig, rng: &mut DeterministicRng) -> Self {
        let domains = (0..cfg.domains)
            .map(|_| (0..40).map(|_| pseudo_word(rng)).collect())
            .collect();
        Self { domains }
    }

    fn words(&self, rng: &mut DeterministicRng, domain: usize, n: usize) -> String {
        (0..n)
            .map(|_| {
                if rng.gen_bool(0.55) {
                    self.domains[domain].choose(rng).expect("non-empty").clone()
                } else {
                    GENERAL.choose(rng).expect("non-empty").to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn sentence(&self, rng: &mut DeterministicRng, domain: usize) -> String {
        let n = rng.gen_range(6..13);
        let mut s = self.words(rng, domain, n);
        if let Some(first) = s.get_mut(..1) {
            first.make_ascii_uppercase();
        }
        s.push('.');
        s
    }
}

fn abstract_text(v: &Vocab, rng: &mut DeterministicRng, d: usize, pattern: u8) -> String {
    let s = |rng: &mut DeterministicRng| v.sentence(rng, d);
    let (a, b) = (s(rng), s(rng));
    let mut text = match pattern {
        1 => format!("PROBLEM TO BE SOLVED: {a} SOLUTION: {b}"),
        2 => format!("PROBLEM: {a} SOLUTION: {b}"),
        3 => format!("PURPOSE: {a} CONSTITUTION: {b}"),
        4 => format!("[problem] {a} [solution] {b}"),
        5 => {
            let fields = format!("{}, {}", v.words(rng, d, 2), v.words(rng, d, 2));
            format!("FIELD: {fields} SUBSTANCE: {a} EFFECT: {b} {}", s(rng))
        }
        6 => format!("SOLUTION: {a} EFFECT: {b} {}", s(rng)),
        7 => format!("{a} SOLUTION: {b}"),
        _ => format!("{a} {b}"),
    };
    if rng.gen_bool(0.15) {
        text.push_str(&format!(" SELECTED DRAWING: Fig. {}", rng.gen_range(1..9)));
    }
    text
}

fn pick_pattern(rng: &mut DeterministicRng) -> u8 {
    const WEIGHTS: [(u8, u32); 8] = [(0, 10), (1, 20), (2, 15), (3, 10), (4, 10), (5, 10), (6, 15), (7, 10)];
    let total: u32 = WEIGHTS.iter().map(|w| w.1).sum();
    let mut x = rng.gen_range(0..total);
    for (p, w) in WEIGHTS {
        if x < w {
            return p;
        }
        x -= w;
    }
    0
}

/// Generates a deterministic corpus. Families cite earlier families, mostly
/// within their own domain.
pub fn generate_corpus(cfg: &FixtureConfig) -> Corpus {
    let mut rng = rng_for(cfg.seed, &["fixture"]);
    let vocab = Vocab::new(cfg, &mut rng);
    let base = NaiveDate::from_ymd_opt(1982, 1, 1).expect("valid date");
    let mut by_domain: Vec<Vec<usize>> = vec![Vec::new(); cfg.domains];
    let mut families = Vec::with_capacity(cfg.families);
    for i in 0..cfg.families {
        let d = rng.gen_range(0..cfg.domains);
        let mut ipc = vec![ipc_code(d), ipc_code(d)];
        let extra = match rng.gen_range(0..10) {
            0..=5 => 0,
            6..=8 => 1,
            _ => 2,
        };
        for _ in 0..extra {
            let other = (d + rng.gen_range(1..cfg.domains)) % cfg.domains;
            ipc.push(ipc_code(other));
        }

        let mut cites = Vec::new();
        for _ in 0..rng.gen_range(0..6) {
            let own = &by_domain[d];
            let target = if !own.is_empty() && rng.gen_bool(0.7) {
                // Recent families in the same domain cluster together.
                own[own.len() - 1 - rng.gen_range(0..own.len().min(60))]
            } else if i > 0 {
                rng.gen_range(0..i)
            } else {
                continue;
            };
            cites.push(format!("F{target:06}"));
        }
        if rng.gen_bool(0.02) {
            cites.push(format!("X{:06}", rng.gen_range(0..1000)));
        }
        cites.sort();
        cites.dedup();

        let n_inv = rng.gen_range(1..4);
        let mut inventors: Vec<String> = (0..n_inv)
            .map(|_| {
                let slot = if rng.gen_bool(0.8) {
                    (d * 7 + rng.gen_range(0..5)) % cfg.inventors
                } else {
                    rng.gen_range(0..cfg.inventors)
                };
                format!("Inventor {slot:03}")
            })
            .collect();
        inventors.sort();
        inventors.dedup();

        let days = (i as f64 / cfg.families as f64 * 41.0 * 365.0) as i64 + rng.gen_range(0..200);
        let filing_date = base + chrono::Duration::days(days);
        let five: u64 = if rng.gen_bool(0.3) { rng.gen_range(0..40) } else { rng.gen_range(0..4) };
        let total = five + rng.gen_range(0..60);
        let title_len = rng.gen_range(3..7);
        let pattern = pick_pattern(&mut rng);
        families.push(PatentFamily {
            family_id: format!("F{i:06}"),
            title: vocab.words(&mut rng, d, title_len),
            abstract_text: abstract_text(&vocab, &mut rng, d, pattern),
            first_claim: format!("1. A {} comprising {}", vocab.words(&mut rng, d, 3), vocab.sentence(&mut rng, d)),
            ipc_codes: ipc,
            inventors,
            filing_date,
            cites,
            cited_by_count_5y: five,
            cited_by_count_total: total,
        });
        by_domain[d].push(i);
    }
    Corpus::from_families(families).expect("fixture ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragments::extract_segments;

    #[test]
    fn deterministic_and_covers_all_patterns() {
        let cfg = FixtureConfig {
            families: 400,
            ..FixtureConfig::small()
        };
        let a = generate_corpus(&cfg);
        assert_eq!(a.content_hash(), generate_corpus(&cfg).content_hash());
        let mut seen = [false; 8];
        for f in a.families() {
            seen[extract_segments(&f.abstract_text).matched_pattern.unwrap_or(0) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s), "{seen:?}");
    }

    #[test]
    fn codes_are_distinct_per_domain() {
        let codes: std::collections::BTreeSet<String> = (0..30).map(ipc_code).collect();
        assert_eq!(codes.len(), 30);
    }
}
