//! Symmetric and asymmetric retrieval triplets.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{assemble_sections, StructuralVariant};
use crate::domains::{DomainRelation, Split};
use crate::fragments::{remove_fragment, FragmentError};
use crate::seed::rng_for;

use super::negatives::{mine_hard_negatives, NegativeCategory, TokenIndex, TokenSet};
use super::pipeline::BuildContext;
use super::{Records, RetrievalTriplet, TaskDataset, TaskId};

/// Per-build counters for a retrieval task split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalStats {
    pub queries: usize,
    pub skipped_no_positive: usize,
    pub skipped_no_negative: usize,
    pub skipped_missing_fragment: usize,
    /// Largest retained positive count of any query.
    pub max_positives: usize,
}

/// Citation neighbours of `query` in its split whose relation fits
/// `category`, sampled down to `cap` with a (task, query)-keyed seed and
/// returned in shuffled order.
pub fn select_positives(
    ctx: &BuildContext<'_>,
    task: TaskId,
    query: usize,
    category: NegativeCategory,
    cap: usize,
) -> Vec<usize> {
    let split = ctx.splits.split_of(query);
    let mut pos: Vec<usize> = ctx
        .graph
        .neighbors(query)
        .iter()
        .copied()
        .filter(|&n| ctx.splits.split_of(n) == split)
        .filter(|&n| category.accepts_positive(ctx.domains.relation(query, n)))
        .collect();
    let qid = &ctx.corpus.get(query).family_id;
    pos.shuffle(&mut rng_for(ctx.config.seed, &[task.name(), "positives", qid]));
    pos.truncate(cap);
    pos
}

struct Outcome {
    triplets: Vec<(usize, usize, usize)>,
    positives: usize,
}

pub fn build_symmetric_retrieval(ctx: &BuildContext<'_>, task: TaskId, split: Split) -> (TaskDataset, RetrievalStats) {
    let category = task.symmetric_relation().expect("symmetric retrieval task");
    let members = ctx.splits.members(split);
    let tokens: Vec<Option<TokenSet>> = ctx.full_tokens.iter().cloned().map(Some).collect();
    let cfg = &ctx.config;
    let outcomes: Vec<Result<Outcome, bool>> = members
        .par_iter()
        .map(|&q| {
            let pos = select_positives(ctx, task, q, category, cfg.max_positives);
            if pos.is_empty() {
                return Err(false);
            }
            let k = pos.len().min(cfg.max_triplets);
            let negs = mine_hard_negatives(
                q,
                &ctx.full_tokens[q],
                category,
                &members,
                &tokens,
                &ctx.graph,
                &ctx.domains,
                ctx.corpus,
                k,
            )
            .map_err(|_| true)?;
            let triplets = pos.iter().zip(&negs).map(|(&p, &n)| (q, p, n)).collect();
            Ok(Outcome {
                triplets,
                positives: pos.len(),
            })
        })
        .collect();
    let mut stats = RetrievalStats {
        queries: members.len(),
        ..Default::default()
    };
    let mut triplets = Vec::new();
    for o in outcomes {
        match o {
            Ok(o) => {
                stats.max_positives = stats.max_positives.max(o.positives);
                triplets.extend(o.triplets);
            }
            Err(false) => stats.skipped_no_positive += 1,
            Err(true) => stats.skipped_no_negative += 1,
        }
    }
    let text = |i: usize| ctx.texts[i].clone();
    let dataset = assemble(ctx, task, split, &triplets, text, text, |q, p| ctx.domains.relation(q, p));
    (dataset, stats)
}

fn assemble(
    ctx: &BuildContext<'_>,
    task: TaskId,
    split: Split,
    triplets: &[(usize, usize, usize)],
    query_text: impl Fn(usize) -> String,
    doc_text: impl Fn(usize) -> String,
    relation: impl Fn(usize, usize) -> DomainRelation,
) -> TaskDataset {
    let id = |i: usize| ctx.corpus.get(i).family_id.clone();
    let records = triplets
        .iter()
        .map(|&(q, p, n)| RetrievalTriplet {
            query_id: id(q),
            positive_id: id(p),
            negative_id: id(n),
            query_text: query_text(q),
            positive_text: doc_text(p),
            negative_text: doc_text(n),
            relation: relation(q, p),
        })
        .collect();
    TaskDataset {
        task,
        split,
        records: Records::Retrieval(records),
        members: triplets.iter().map(|&(q, p, n)| vec![q, p, n]).collect(),
        strata: triplets.iter().map(|&(q, _, _)| ctx.domains.dominant(q).to_string()).collect(),
    }
}

/// Query fragment of a family for an asymmetric task.
fn query_fragment<'c>(ctx: &'c BuildContext<'_>, task: TaskId, i: usize) -> Option<&'c str> {
    let s = &ctx.segments[i];
    let frag = match task {
        TaskId::Title2Full => Some(ctx.corpus.get(i).title.as_str()),
        TaskId::Problem2Full | TaskId::Problem2Solution => s.problem.as_deref(),
        TaskId::Effect2Full | TaskId::Effect2Substance => s.effect.as_deref(),
        _ => None,
    }?;
    (!frag.trim().is_empty()).then_some(frag)
}

/// Leak-free target text of a family under `variant`, `None` if the family
/// cannot serve as a target.
fn target_text(ctx: &BuildContext<'_>, task: TaskId, i: usize, variant: StructuralVariant) -> Option<String> {
    let fam = ctx.corpus.get(i);
    let seg = &ctx.segments[i];
    let strip = |target: String, frag: Option<&str>| -> Result<String, FragmentError> {
        match frag {
            Some(f) if !f.trim().is_empty() => remove_fragment(&target, f),
            _ => Ok(target),
        }
    };
    let (raw, frag) = match task {
        TaskId::Title2Full => {
            let mut sections = fam.sections();
            sections.title = "";
            (assemble_sections(sections, variant), Some(fam.title.as_str()))
        }
        TaskId::Problem2Full => (assemble_sections(fam.sections(), variant), seg.problem.as_deref()),
        TaskId::Effect2Full => (assemble_sections(fam.sections(), variant), seg.effect.as_deref()),
        TaskId::Problem2Solution => (seg.solution.clone(), seg.problem.as_deref()),
        TaskId::Effect2Substance => (seg.substance.clone(), seg.effect.as_deref()),
        _ => return None,
    };
    strip(raw?, frag).ok()
}

/// Target text as emitted. Eligibility is decided on the full variant, so
/// other variants fall back to the unstripped variant text when removal
/// would empty it.
fn emitted_target(ctx: &BuildContext<'_>, task: TaskId, i: usize) -> String {
    let v = ctx.config.variant;
    target_text(ctx, task, i, v)
        .or_else(|| {
            let fam = ctx.corpus.get(i);
            assemble_sections(fam.sections(), v)
        })
        .unwrap_or_else(|| ctx.texts[i].clone())
}

pub fn build_asymmetric_retrieval(ctx: &BuildContext<'_>, task: TaskId, split: Split) -> (TaskDataset, RetrievalStats) {
    assert!(task.is_asymmetric(), "asymmetric retrieval task");
    let members = ctx.splits.members(split);
    let mut index = TokenIndex::default();
    let mut cand_tokens: Vec<Option<TokenSet>> = vec![None; ctx.corpus.len()];
    let mut candidates = Vec::new();
    for &i in &members {
        if let Some(t) = target_text(ctx, task, i, StructuralVariant::Full) {
            cand_tokens[i] = Some(index.tokens(&t));
            candidates.push(i);
        }
    }
    let mut stats = RetrievalStats {
        queries: members.len(),
        ..Default::default()
    };
    let mut queries = Vec::new();
    for &i in &members {
        match query_fragment(ctx, task, i) {
            Some(f) if cand_tokens[i].is_some() => queries.push((i, index.tokens(f))),
            _ => stats.skipped_missing_fragment += 1,
        }
    }
    let mined: Vec<Option<usize>> = queries
        .par_iter()
        .map(|(q, toks)| {
            mine_hard_negatives(
                *q,
                toks,
                NegativeCategory::Mixed,
                &candidates,
                &cand_tokens,
                &ctx.graph,
                &ctx.domains,
                ctx.corpus,
                1,
            )
            .ok()
            .map(|n| n[0])
        })
        .collect();
    let mut triplets = Vec::new();
    for ((q, _), n) in queries.iter().zip(mined) {
        match n {
            Some(n) => triplets.push((*q, *q, n)),
            None => stats.skipped_no_negative += 1,
        }
    }
    stats.max_positives = usize::from(!triplets.is_empty());
    let query_text = |i: usize| query_fragment(ctx, task, i).unwrap_or_default().trim().to_string();
    let dataset = assemble(
        ctx,
        task,
        split,
        &triplets,
        query_text,
        |i| emitted_target(ctx, task, i),
        |_, _| DomainRelation::In,
    );
    (dataset, stats)
}
