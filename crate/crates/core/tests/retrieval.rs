use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use patenteb::corpus::{Corpus, PatentFamily};
use patenteb::domains::Split;
use patenteb::taskgen::{build_symmetric_retrieval, select_positives, BuildConfig, BuildContext, NegativeCategory, TaskId};

fn family(i: usize, ipc: Vec<String>, cites: Vec<usize>, rng: &mut ChaCha8Rng) -> PatentFamily {
    let words = ["rotor", "blade", "valve", "seal", "gear", "lens", "cell", "pump"];
    let text = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
    PatentFamily {
        family_id: format!("P{i:04}"),
        title: text(4, rng),
        abstract_text: text(12, rng),
        first_claim: text(8, rng),
        ipc_codes: ipc,
        inventors: vec![],
        filing_date: NaiveDate::from_ymd_opt(2000 + (i % 20) as i32, 1, 1).unwrap(),
        cites: cites.into_iter().map(|c| format!("P{c:04}")).collect(),
        cited_by_count_5y: 0,
        cited_by_count_total: 0,
    }
}

fn config() -> BuildConfig {
    BuildConfig {
        min_per_class: 1,
        min_per_stratum: 1,
        ..BuildConfig::default()
    }
}

fn rel(q: &BTreeSet<&str>, t: &BTreeSet<&str>) -> &'static str {
    let shared = q.intersection(t).count();
    if shared == 0 {
        "OUT"
    } else if shared == q.len() && shared == t.len() {
        "IN"
    } else if shared == q.len() || shared == t.len() {
        "FULL_MIX"
    } else {
        "PART_MIX"
    }
}

#[test]
fn hub_positives_and_triplets_are_capped() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fams: Vec<PatentFamily> = (1..=400).map(|i| family(i, vec!["A01".into()], vec![], &mut rng)).collect();
    // Negatives for the IN task must overlap partially.
    fams.extend((401..=440).map(|i| family(i, vec!["A01".into(), "B02".into()], vec![], &mut rng)));
    fams.push(family(0, vec!["A01".into()], (1..=400).collect(), &mut rng));
    let corpus = Corpus::from_families(fams).unwrap();
    let ctx = BuildContext::new(&corpus, config()).unwrap();
    let hub = corpus.index_of("P0000").unwrap();
    let split = ctx.splits.split_of(hub);
    let available = (1..=400)
        .filter(|&i| ctx.splits.split_of(corpus.index_of(&format!("P{i:04}")).unwrap()) == split)
        .count();
    assert!(available > 100, "{available}");

    let pos = select_positives(&ctx, TaskId::RetrievalIn, hub, NegativeCategory::In, 100);
    assert_eq!(pos.len(), 100);
    assert_eq!(pos.iter().collect::<HashSet<_>>().len(), 100);

    let (ds, stats) = build_symmetric_retrieval(&ctx, TaskId::RetrievalIn, split);
    assert_eq!(stats.max_positives, 100);
    let from_hub = ds.members.iter().filter(|m| m[0] == hub).count();
    assert_eq!(from_hub, 10);
}

#[test]
fn triplet_counts_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let codes = ["A01", "B02", "C03", "D04"];
    let fams: Vec<PatentFamily> = (0..300)
        .map(|i| {
            let mut ipc: Vec<String> = vec![codes[rng.gen_range(0..4)].to_string()];
            if rng.gen_bool(0.4) {
                ipc.push(codes[rng.gen_range(0..4)].to_string());
            }
            let cites = (0..rng.gen_range(0..6)).filter(|_| i > 0).map(|_| rng.gen_range(0..i)).collect();
            family(i, ipc, cites, &mut rng)
        })
        .collect();
    let corpus = Corpus::from_families(fams).unwrap();
    let cfg = config();
    let ctx = BuildContext::new(&corpus, cfg.clone()).unwrap();

    let n = corpus.len();
    let mut linked = vec![BTreeSet::new(); n];
    for (i, f) in corpus.families().iter().enumerate() {
        for c in &f.cites {
            if let Some(j) = corpus.index_of(c).filter(|&j| j != i) {
                linked[i].insert(j);
                linked[j].insert(i);
            }
        }
    }
    let sets: Vec<BTreeSet<&str>> = corpus.families().iter().map(|f| f.ipc_codes.iter().map(String::as_str).collect()).collect();

    let tasks: [(TaskId, &[&str], &[&str]); 3] = [
        (TaskId::RetrievalIn, &["IN"], &["FULL_MIX", "PART_MIX"]),
        (TaskId::RetrievalOut, &["OUT"], &["OUT"]),
        (TaskId::RetrievalMixed, &["FULL_MIX", "PART_MIX"], &["PART_MIX"]),
    ];
    let mut total = 0;
    for (task, pos_ok, neg_ok) in tasks {
        for split in [Split::Train, Split::Validation, Split::Test] {
            let members: Vec<usize> = (0..n).filter(|&i| ctx.splits.split_of(i) == split).collect();
            let mut want: BTreeMap<usize, usize> = BTreeMap::new();
            for &q in &members {
                let p = linked[q]
                    .iter()
                    .filter(|&&j| ctx.splits.split_of(j) == split && pos_ok.contains(&rel(&sets[q], &sets[j])))
                    .count()
                    .min(cfg.max_positives);
                let negs = members
                    .iter()
                    .filter(|&&c| c != q && !linked[q].contains(&c) && neg_ok.contains(&rel(&sets[q], &sets[c])))
                    .count();
                let k = p.min(cfg.max_triplets).min(negs);
                if k > 0 {
                    want.insert(q, k);
                }
            }
            let (ds, _) = build_symmetric_retrieval(&ctx, task, split);
            let mut got: BTreeMap<usize, usize> = BTreeMap::new();
            for m in &ds.members {
                *got.entry(m[0]).or_default() += 1;
            }
            assert_eq!(got, want, "{task}/{split}");
            total += want.values().sum::<usize>();
        }
    }
    assert!(total > 100, "fixture too sparse: {total}");
}
