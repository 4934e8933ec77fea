use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taskgen::TaskId;

use super::EmbedError;

/// Whether texts get their task prefix before embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Table,
    None,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Table => "table",
            Self::None => "none",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "none" => Ok(Self::None),
            other => Err(format!("unknown prompt mode `{other}` (expected table or none)")),
        }
    }
}

/// Role of a text field inside a task record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldRole {
    QText,
    PosText,
    Title,
    FullText,
    Problem,
    Effect,
    Substance,
    Solution,
    Text1,
    Text2,
    Text,
    TText,
}

impl FieldRole {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::QText => "q_text",
            Self::PosText => "pos_text",
            Self::Title => "title",
            Self::FullText => "full_text",
            Self::Problem => "problem",
            Self::Effect => "effect",
            Self::Substance => "substance",
            Self::Solution => "solution",
            Self::Text1 => "text1",
            Self::Text2 => "text2",
            Self::Text => "text",
            Self::TText => "t_text",
        }
    }
}

impl fmt::Display for FieldRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prompt prefix for a (task, role) pair.
pub fn prefix(task: TaskId, role: FieldRole) -> Option<&'static str> {
    use FieldRole::*;
    use TaskId::*;
    Some(match (task, role) {
        (RetrievalIn, QText) => "encode query for same document retrieval:",
        (RetrievalIn, PosText) => "encode document for same retrieval:",
        (RetrievalOut, QText) => "encode query for different document retrieval:",
        (RetrievalOut, PosText) => "encode document for different retrieval:",
        (RetrievalMixed, QText) => "encode query for mixed document retrieval:",
        (RetrievalMixed, PosText) => "encode document for mixed retrieval:",
        (Title2Full, Title) => "encode title query for document retrieval:",
        (Problem2Full, Problem) => "encode problem query for document retrieval:",
        (Effect2Full, Effect) => "encode effect query for document retrieval:",
        (Title2Full | Problem2Full | Effect2Full, FullText) => "encode document for retrieval:",
        (Effect2Substance, Effect) => "encode effect query for substance retrieval:",
        (Effect2Substance, Substance) => "encode substance for retrieval:",
        (Problem2Solution, Problem) => "encode problem query for solution retrieval:",
        (Problem2Solution, Solution) => "encode solution for retrieval:",
        (ParaProblem, Text1 | Text2) => "encode problem for problem paraphrase:",
        (ParaSolution, Text1 | Text2) => "encode solution for solution paraphrase:",
        (ClassText2Ipc3, Text) => "encode document for ipc classification:",
        (ClassBloom, Text) => "encode document for bloom prediction classification:",
        (ClassNliOldnew, QText) => "encode citing document for pair classification:",
        (ClassNliOldnew, TText) => "encode cited document for pair classification:",
        (ClustersExtFullIpc, Text) => "encode document for same ipc clustering:",
        (ClustersInventor, Text) => "encode document for same inventors clustering:",
        _ => return None,
    })
}

/// Role of the first text of a record (query, text1 or the single text).
pub fn query_role(task: TaskId) -> FieldRole {
    use TaskId::*;
    match task {
        RetrievalIn | RetrievalOut | RetrievalMixed | ClassNliOldnew => FieldRole::QText,
        Title2Full => FieldRole::Title,
        Problem2Full | Problem2Solution => FieldRole::Problem,
        Effect2Full | Effect2Substance => FieldRole::Effect,
        ParaProblem | ParaSolution => FieldRole::Text1,
        ClassText2Ipc3 | ClassBloom | ClustersExtFullIpc | ClustersInventor => FieldRole::Text,
    }
}

/// Role of retrieval documents (positives and negatives) or of the second
/// text of a pair; single-text tasks have none.
pub fn doc_role(task: TaskId) -> Option<FieldRole> {
    use TaskId::*;
    Some(match task {
        RetrievalIn | RetrievalOut | RetrievalMixed => FieldRole::PosText,
        Title2Full | Problem2Full | Effect2Full => FieldRole::FullText,
        Problem2Solution => FieldRole::Solution,
        Effect2Substance => FieldRole::Substance,
        ClassNliOldnew => FieldRole::TText,
        ParaProblem | ParaSolution => FieldRole::Text2,
        _ => return None,
    })
}

/// `"<prefix> <text>"` in table mode, `text` unchanged otherwise.
pub fn apply_prompt(mode: PromptMode, task: TaskId, role: FieldRole, text: &str) -> Result<String, EmbedError> {
    let p = prefix(task, role).ok_or_else(|| EmbedError::UnknownTaskRole {
        task: task.name().to_string(),
        role: role.as_str().to_string(),
    })?;
    Ok(match mode {
        PromptMode::Table => format!("{p} {text}"),
        PromptMode::None => text.to_string(),
    })
}
