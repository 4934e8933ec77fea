use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, PatentFamily, MAX_TOKENS, SEPARATOR};

/// Structural variant of an assembled document text.
///
/// `trim1` drops the abstract, `trimLast` the first claim, `trim1Last` both
/// (title only). `noSEP` joins sections with a single space instead of the
/// separator token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StructuralVariant {
    #[default]
    Full,
    NoSep,
    Trim1,
    TrimLast,
    Trim1Last,
    NoSepTrim1,
    NoSepTrimLast,
    NoSepTrim1Last,
}

impl StructuralVariant {
    pub const ALL: [StructuralVariant; 8] = [
        Self::Full,
        Self::NoSep,
        Self::Trim1,
        Self::TrimLast,
        Self::Trim1Last,
        Self::NoSepTrim1,
        Self::NoSepTrimLast,
        Self::NoSepTrim1Last,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoSep => "noSEP",
            Self::Trim1 => "trim1",
            Self::TrimLast => "trimLast",
            Self::Trim1Last => "trim1Last",
            Self::NoSepTrim1 => "noSEP+trim1",
            Self::NoSepTrimLast => "noSEP+trimLast",
            Self::NoSepTrim1Last => "noSEP+trim1Last",
        }
    }

    pub fn uses_separator(self) -> bool {
        matches!(self, Self::Full | Self::Trim1 | Self::TrimLast | Self::Trim1Last)
    }

    pub fn keeps_abstract(self) -> bool {
        !matches!(
            self,
            Self::Trim1 | Self::Trim1Last | Self::NoSepTrim1 | Self::NoSepTrim1Last
        )
    }

    pub fn keeps_claim(self) -> bool {
        !matches!(
            self,
            Self::TrimLast | Self::Trim1Last | Self::NoSepTrimLast | Self::NoSepTrim1Last
        )
    }
}

impl fmt::Display for StructuralVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructuralVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown structural variant `{s}`"))
    }
}

impl TryFrom<String> for StructuralVariant {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StructuralVariant> for String {
    fn from(v: StructuralVariant) -> String {
        v.name().to_string()
    }
}

/// Borrowed document sections in canonical order.
#[derive(Clone, Copy, Debug)]
pub struct Sections<'a> {
    pub title: &'a str,
    pub abstract_text: &'a str,
    pub first_claim: &'a str,
}

/// Joins the sections retained by `variant`, skipping empty ones, and caps
/// the result at [`MAX_TOKENS`] whitespace tokens. `None` if nothing is left.
pub fn assemble_sections(sections: Sections<'_>, variant: StructuralVariant) -> Option<String> {
    let mut parts = Vec::with_capacity(3);
    parts.push(sections.title.trim());
    if variant.keeps_abstract() {
        parts.push(sections.abstract_text.trim());
    }
    if variant.keeps_claim() {
        parts.push(sections.first_claim.trim());
    }
    parts.retain(|p| !p.is_empty());
    if parts.is_empty() {
        return None;
    }
    let joiner = if variant.uses_separator() {
        format!(" {SEPARATOR} ")
    } else {
        " ".to_string()
    };
    Some(cap_tokens(&parts.join(&joiner), MAX_TOKENS))
}

pub fn assemble_text(family: &PatentFamily, variant: StructuralVariant) -> Result<String, CorpusError> {
    assemble_sections(family.sections(), variant)
        .ok_or_else(|| CorpusError::EmptyText(family.family_id.clone()))
}

/// Truncates trailing whitespace tokens beyond `max_tokens`. Text within the
/// cap is returned unchanged.
pub fn cap_tokens(text: &str, max_tokens: usize) -> String {
    let mut tokens = text.split_whitespace();
    if tokens.by_ref().take(max_tokens).count() < max_tokens || tokens.next().is_none() {
        return text.to_string();
    }
    text.split_whitespace()
        .take(max_tokens)
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s<'a>(t: &'a str, a: &'a str, c: &'a str) -> Sections<'a> {
        Sections {
            title: t,
            abstract_text: a,
            first_claim: c,
        }
    }

    #[test]
    fn full_variant_joins_with_separator() {
        assert_eq!(
            assemble_sections(s("T", "A", "C"), StructuralVariant::Full).unwrap(),
            "T [SEP] A [SEP] C"
        );
    }

    #[test]
    fn title_only_variant() {
        assert_eq!(assemble_sections(s("T", "A", "C"), StructuralVariant::Trim1Last).unwrap(), "T");
        assert_eq!(
            assemble_sections(s("T", "A", "C"), StructuralVariant::NoSepTrim1Last).unwrap(),
            "T"
        );
    }

    #[test]
    fn no_separator_variant() {
        assert_eq!(assemble_sections(s("T", "A", "C"), StructuralVariant::NoSep).unwrap(), "T A C");
        assert_eq!(assemble_sections(s("T", "A", "C"), StructuralVariant::Trim1).unwrap(), "T [SEP] C");
        assert_eq!(
            assemble_sections(s("T", "A", "C"), StructuralVariant::NoSepTrimLast).unwrap(),
            "T A"
        );
    }

    #[test]
    fn empty_sections_skipped_and_all_empty_is_none() {
        assert_eq!(assemble_sections(s("T", "", "C"), StructuralVariant::Full).unwrap(), "T [SEP] C");
        assert!(assemble_sections(s("", "", ""), StructuralVariant::Full).is_none());
        assert!(assemble_sections(s("", "A", ""), StructuralVariant::Trim1).is_none());
    }

    #[test]
    fn token_cap_truncates_trailing_tokens() {
        let long = vec!["w"; MAX_TOKENS + 10].join(" ");
        let out = assemble_sections(s(&long, "A", "C"), StructuralVariant::Full).unwrap();
        assert_eq!(out.split_whitespace().count(), MAX_TOKENS);
        assert_eq!(cap_tokens("a  b", 2), "a  b");
        assert_eq!(cap_tokens("a b c", 2), "a b");
    }

    #[test]
    fn variant_names_round_trip() {
        for v in StructuralVariant::ALL {
            assert_eq!(v.name().parse::<StructuralVariant>().unwrap(), v);
        }
        assert!("bogus".parse::<StructuralVariant>().is_err());
    }

    proptest! {
        #[test]
        fn nosep_equals_full_with_separators_replaced(
            t in "[a-z]{1,8}( [a-z]{1,8}){0,4}",
            a in "([a-z]{1,8}( [a-z]{1,8}){0,4})?",
            c in "([a-z]{1,8}( [a-z]{1,8}){0,4})?",
        ) {
            let full = assemble_sections(s(&t, &a, &c), StructuralVariant::Full).unwrap();
            let nosep = assemble_sections(s(&t, &a, &c), StructuralVariant::NoSep).unwrap();
            prop_assert_eq!(nosep, full.replace(" [SEP] ", " "));
        }

        #[test]
        fn assembled_text_never_exceeds_cap(n in 0usize..9000) {
            let long = vec!["x"; n].join(" ");
            let out = assemble_sections(s("T", &long, "C"), StructuralVariant::Full).unwrap();
            prop_assert!(out.split_whitespace().count() <= MAX_TOKENS);
        }
    }
}
