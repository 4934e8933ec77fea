//! Marker-based segment extraction from abstracts and leak-free fragment
//! removal for asymmetric retrieval targets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SEPARATOR;

const SELECTED_DRAWING: &str = "SELECTED DRAWING";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FragmentError {
    #[error("removing the fragment leaves no text")]
    FragmentIsWholeText,
    #[error("fragment is empty after normalization")]
    EmptyFragment,
}

/// Segments found in one abstract. `matched_pattern` is 1..=7 when a
/// pattern applied.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub problem: Option<String>,
    pub solution: Option<String>,
    pub effect: Option<String>,
    pub field: Option<String>,
    pub substance: Option<String>,
    pub matched_pattern: Option<u8>,
}

impl SegmentSet {
    fn is_empty(&self) -> bool {
        self.problem.is_none()
            && self.solution.is_none()
            && self.effect.is_none()
            && self.field.is_none()
            && self.substance.is_none()
    }
}

/// One line of a segment dump.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub family_id: String,
    #[serde(flatten)]
    pub segments: SegmentSet,
}

fn segment(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Cuts at the first `.`, `!` or `?` followed by whitespace or end of text.
pub fn first_sentence(text: &str) -> &str {
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return text,
                Some((_, next)) if next.is_whitespace() => return &text[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    text
}

fn last_field_value(text: &str) -> Option<String> {
    text.rsplit(',').map(str::trim).find(|v| !v.is_empty()).map(str::to_string)
}

fn effect_segment(text: &str) -> Option<String> {
    segment(first_sentence(text.trim()))
}

/// Text between `open` and the first following `close`, and the rest after `close`.
fn split_pair<'a>(text: &'a str, open: &str, close: &str) -> Option<(&'a str, &'a str)> {
    let start = text.find(open)? + open.len();
    let rel = text[start..].find(close)?;
    Some((&text[start..start + rel], &text[start + rel + close.len()..]))
}

fn try_pattern(n: u8, text: &str) -> Option<SegmentSet> {
    let mut s = SegmentSet::default();
    match n {
        1 | 2 | 3 | 4 => {
            let (open, close) = match n {
                1 => ("PROBLEM TO BE SOLVED:", "SOLUTION:"),
                2 => ("PROBLEM:", "SOLUTION:"),
                3 => ("PURPOSE:", "CONSTITUTION:"),
                _ => ("[problem]", "[solution]"),
            };
            let (problem, solution) = split_pair(text, open, close)?;
            s.problem = segment(problem);
            s.solution = segment(solution);
        }
        5 => {
            let (field, rest) = split_pair(text, "FIELD:", "SUBSTANCE:")?;
            let cut = rest.find("EFFECT:")?;
            s.field = last_field_value(field);
            s.substance = segment(&rest[..cut]);
            s.effect = effect_segment(&rest[cut + "EFFECT:".len()..]);
        }
        6 => {
            let (solution, effect) = split_pair(text, "SOLUTION:", "EFFECT:")?;
            s.solution = segment(solution);
            s.effect = effect_segment(effect);
        }
        7 => {
            let at = text.find("SOLUTION:")?;
            s.problem = segment(&text[..at]);
            s.solution = segment(&text[at + "SOLUTION:".len()..]);
        }
        _ => return None,
    }
    (!s.is_empty()).then(|| {
        s.matched_pattern = Some(n);
        s
    })
}

/// Applies the seven marker patterns in order; the first one yielding a
/// non-empty segment wins.
pub fn extract_segments(abstract_text: &str) -> SegmentSet {
    let text = match abstract_text.find(SELECTED_DRAWING) {
        Some(at) => &abstract_text[..at],
        None => abstract_text,
    };
    (1..=7).find_map(|n| try_pattern(n, text)).unwrap_or_default()
}

/// Case-folded, whitespace-collapsed, trimmed form used for leak checks.
pub fn normalize(text: &str) -> String {
    Normalized::new(text).text.trim().to_string()
}

/// Normalized text with each normalized char mapped back to an original byte span.
struct Normalized {
    text: String,
    char_starts: Vec<usize>,
    spans: Vec<(usize, usize)>,
}

impl Normalized {
    fn new(original: &str) -> Self {
        let mut out = Self {
            text: String::with_capacity(original.len()),
            char_starts: Vec::new(),
            spans: Vec::new(),
        };
        let mut in_space = false;
        for (i, c) in original.char_indices() {
            let end = i + c.len_utf8();
            if c.is_whitespace() {
                if in_space {
                    out.spans.last_mut().expect("space emitted").1 = end;
                } else {
                    out.push(' ', (i, end));
                    in_space = true;
                }
            } else {
                in_space = false;
                for lc in c.to_lowercase() {
                    out.push(lc, (i, end));
                }
            }
        }
        out
    }

    fn push(&mut self, c: char, span: (usize, usize)) {
        self.char_starts.push(self.text.len());
        self.text.push(c);
        self.spans.push(span);
    }

    fn char_at(&self, byte: usize) -> usize {
        self.char_starts.binary_search(&byte).expect("match starts on a char boundary")
    }

    /// Original byte ranges covered by each non-overlapping occurrence.
    fn occurrences(&self, needle: &str) -> Vec<(usize, usize)> {
        self.text
            .match_indices(needle)
            .map(|(b, m)| {
                let first = self.char_at(b);
                let last = self.char_at(b + m.len() - m.chars().last().map_or(1, char::len_utf8));
                (self.spans[first].0, self.spans[last].1)
            })
            .collect()
    }
}

/// Collapses whitespace and drops separators left leading, trailing or doubled.
fn tidy(text: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    for tok in text.split_whitespace() {
        if tok == SEPARATOR && out.last().map_or(true, |&p| p == SEPARATOR) {
            continue;
        }
        out.push(tok);
    }
    while out.last() == Some(&SEPARATOR) {
        out.pop();
    }
    out.join(" ")
}

/// Removes every normalized occurrence of `fragment` from `target`, repeating
/// until none remains. An absent fragment leaves the target unchanged.
pub fn remove_fragment(target: &str, fragment: &str) -> Result<String, FragmentError> {
    let needle = normalize(fragment);
    if needle.is_empty() {
        return Err(FragmentError::EmptyFragment);
    }
    let mut current = target.to_string();
    let mut changed = false;
    loop {
        let norm = Normalized::new(&current);
        let hits = norm.occurrences(&needle);
        if hits.is_empty() {
            break;
        }
        changed = true;
        let mut next = String::with_capacity(current.len());
        let mut cursor = 0;
        for (start, end) in hits {
            if start >= cursor {
                next.push_str(&current[cursor..start]);
                // Keep a gap so neighbouring words do not fuse.
                next.push(' ');
                cursor = end;
            }
        }
        next.push_str(&current[cursor..]);
        current = tidy(&next);
    }
    if !changed {
        return Ok(current);
    }
    if current.is_empty() {
        return Err(FragmentError::FragmentIsWholeText);
    }
    Ok(current)
}

/// True if the normalized fragment occurs in the normalized text.
pub fn leaks(text: &str, fragment: &str) -> bool {
    let needle = normalize(fragment);
    !needle.is_empty() && normalize(text).contains(&needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(s: &str) -> Option<String> {
        Some(s.to_string())
    }

    #[test]
    fn pattern_one() {
        let s = extract_segments("PROBLEM TO BE SOLVED: X SOLUTION: Y");
        assert_eq!((s.problem, s.solution, s.matched_pattern), (seg("X"), seg("Y"), Some(1)));
    }

    #[test]
    fn pattern_one_wins_over_two() {
        let s = extract_segments("PROBLEM TO BE SOLVED: X PROBLEM: Q SOLUTION: Y");
        assert_eq!(s.matched_pattern, Some(1));
    }

    #[test]
    fn pattern_seven_standalone_solution() {
        let s = extract_segments("Z SOLUTION: W");
        assert_eq!((s.problem, s.solution, s.matched_pattern), (seg("Z"), seg("W"), Some(7)));
    }

    #[test]
    fn pattern_five_field_and_effect_rules() {
        let s = extract_segments("FIELD: a, b SUBSTANCE: S EFFECT: E1. E2.");
        assert_eq!(s.field, seg("b"));
        assert_eq!(s.substance, seg("S"));
        assert_eq!(s.effect, seg("E1."));
        assert_eq!(s.matched_pattern, Some(5));
    }

    #[test]
    fn selected_drawing_is_stripped() {
        let s = extract_segments("PROBLEM: P SOLUTION: S. SELECTED DRAWING: Fig. 1");
        assert_eq!(s.solution, seg("S."));
        assert_eq!(s.matched_pattern, Some(2));
    }

    #[test]
    fn no_marker_is_empty() {
        assert_eq!(extract_segments("plain abstract text"), SegmentSet::default());
        assert_eq!(extract_segments(""), SegmentSet::default());
        assert_eq!(extract_segments("problem: lowercase solution: markers"), SegmentSet::default());
    }

    #[test]
    fn sentence_boundary_needs_following_space() {
        assert_eq!(first_sentence("Ratio 1.5 improves. Next"), "Ratio 1.5 improves.");
        assert_eq!(first_sentence("Works! Yes"), "Works!");
        assert_eq!(first_sentence("no boundary"), "no boundary");
    }

    #[test]
    fn removal_examples() {
        assert_eq!(remove_fragment("T [SEP] A", "T").unwrap(), "A");
        assert_eq!(remove_fragment("alpha beta", "gamma").unwrap(), "alpha beta");
        assert_eq!(remove_fragment("Big  WIDGET here", "big widget").unwrap(), "here");
        assert_eq!(remove_fragment("A [SEP] mid [SEP] C", "mid").unwrap(), "A [SEP] C");
        assert_eq!(remove_fragment("x y", "x y"), Err(FragmentError::FragmentIsWholeText));
        assert_eq!(remove_fragment("x", "  "), Err(FragmentError::EmptyFragment));
    }

    #[test]
    fn removal_repeats_until_stable() {
        // Removing "ab" from "aabb" exposes a new "ab".
        let out = remove_fragment("x aabb y", "ab").unwrap();
        assert!(!leaks(&out, "ab"), "{out}");
    }

    proptest! {
        #[test]
        fn perturbed_fragment_is_removed(
            words in prop::collection::vec("[a-z]{1,6}", 3..10),
            pick in 0usize..3,
            upper in any::<bool>(),
        ) {
            let frag = words[pick..pick + 1].join(" ");
            let shown = if upper { frag.to_uppercase() } else { frag.clone() };
            let mut target_words = words.clone();
            target_words[pick] = format!("  {shown} ");
            let target = target_words.join(" ");
            match remove_fragment(&target, &frag) {
                Ok(out) => {
                    prop_assert!(!leaks(&out, &frag));
                    prop_assert_eq!(remove_fragment(&out, &frag).unwrap(), out);
                }
                Err(e) => prop_assert_eq!(e, FragmentError::FragmentIsWholeText),
            }
        }

        #[test]
        fn removal_never_leaks(target in "[a-cA-C \\[\\]SEP]{0,40}", frag in "[a-cA-C ]{1,4}") {
            if normalize(&frag).is_empty() {
                return Ok(());
            }
            if let Ok(out) = remove_fragment(&target, &frag) {
                prop_assert!(!leaks(&out, &frag), "{:?} -> {:?}", target, out);
                prop_assert_eq!(remove_fragment(&out, &frag).unwrap(), out.clone());
            }
        }
    }
}
