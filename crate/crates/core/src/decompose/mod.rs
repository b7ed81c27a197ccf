//! Splitting a query into a start-state / end-state sub-query pair.
//!
//! Three interchangeable backends: a word-count bisection, a delimiter
//! splitter, and a chat-completion endpoint. A manifest may also supply the
//! pair directly.

mod cache;
mod llm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, DecomposeCache, DecomposeCacheEntry};
pub use llm::{
    parse_labeled_pair, prompt_digest, ChatMessage, ChatRequest, ChatTransport, HttpChatTransport,
    LlmDecomposer, LlmSettings, TransportError, PROMPT,
};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("endpoint request failed: {0}")]
    Transport(#[from] TransportError),
    #[error("decomposition cache error at {path}: {source}")]
    Cache {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Naive,
    Rule,
    Llm,
    Provided,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Naive => "naive",
            Backend::Rule => "rule",
            Backend::Llm => "llm",
            Backend::Provided => "provided",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Backend::Naive),
            "rule" => Ok(Backend::Rule),
            "llm" => Ok(Backend::Llm),
            "provided" => Ok(Backend::Provided),
            other => Err(format!("unknown decomposition backend `{other}`")),
        }
    }
}

/// The original query and its ordered sub-query pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTriple {
    pub original: String,
    pub sub_a: String,
    pub sub_b: String,
    pub backend: Backend,
}

/// Connectives recognised by [`rule_split`], in precedence order.
pub const DELIMITERS: [&str; 5] = ["and", "while", "then", "before", "after"];

/// First half of the words (rounded down) and the remainder.
pub fn naive_split(query: &str) -> Result<QueryTriple, DecomposeError> {
    let tokens: Vec<&str> = query.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(DecomposeError::EmptyQuery);
    }
    let original = query.trim().to_string();
    if tokens.len() == 1 {
        return Ok(QueryTriple {
            sub_a: original.clone(),
            sub_b: original.clone(),
            original,
            backend: Backend::Naive,
        });
    }
    let mid = tokens.len() / 2;
    Ok(QueryTriple {
        sub_a: tokens[..mid].join(" "),
        sub_b: tokens[mid..].join(" "),
        original,
        backend: Backend::Naive,
    })
}

/// Split around the first delimiter word or comma; falls back to
/// [`naive_split`] when no split leaves both sides non-empty.
pub fn rule_split(query: &str) -> Result<QueryTriple, DecomposeError> {
    let tokens: Vec<&str> = query.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(DecomposeError::EmptyQuery);
    }
    for (i, token) in tokens.iter().enumerate() {
        let word = token.trim_end_matches(',');
        let is_delimiter =
            !word.is_empty() && DELIMITERS.iter().any(|d| d.eq_ignore_ascii_case(word));
        let split = if is_delimiter {
            // The delimiter word itself (and any comma glued to it) is dropped.
            Some((tokens[..i].join(" "), tokens[i + 1..].join(" ")))
        } else if token.ends_with(',') {
            let mut left: Vec<&str> = tokens[..i].to_vec();
            if !word.is_empty() {
                left.push(word);
            }
            Some((left.join(" "), tokens[i + 1..].join(" ")))
        } else {
            None
        };
        if let Some((a, b)) = split {
            let a = a.trim_end_matches(',').trim().to_string();
            let b = b.trim().to_string();
            if !a.is_empty() && !b.is_empty() {
                return Ok(QueryTriple {
                    original: query.trim().to_string(),
                    sub_a: a,
                    sub_b: b,
                    backend: Backend::Rule,
                });
            }
        }
    }
    naive_split(query)
}

/// Any of the available backends behind one call.
pub enum Decomposer {
    Naive,
    Rule,
    Llm(LlmDecomposer),
}

impl Decomposer {
    pub fn decompose(&self, query: &str) -> Result<QueryTriple, DecomposeError> {
        match self {
            Decomposer::Naive => naive_split(query),
            Decomposer::Rule => rule_split(query),
            Decomposer::Llm(llm) => llm.decompose(query),
        }
    }
}
