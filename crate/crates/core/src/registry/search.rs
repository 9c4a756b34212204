//! Token-set search over content documents.
//!
//! Text is split on every non-alphanumeric character and lowercased. A
//! document's score for a query is the number of distinct query tokens that
//! appear anywhere in its name, description or tags.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::ContentDocument;

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Distinct tokens of the searchable fields of a document.
pub fn document_tokens(doc: &ContentDocument) -> BTreeSet<String> {
    let mut tokens: BTreeSet<String> = tokenize(&doc.name).collect();
    tokens.extend(tokenize(&doc.description));
    for tag in &doc.tags {
        tokens.extend(tokenize(tag));
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub content_id: String,
    pub score: usize,
}

/// Postings list per token.
#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    postings: BTreeMap<String, BTreeSet<String>>,
}

impl InvertedIndex {
    pub fn insert(&mut self, content_id: &str, tokens: &BTreeSet<String>) {
        for token in tokens {
            self.postings
                .entry(token.clone())
                .or_default()
                .insert(content_id.into());
        }
    }

    pub fn remove(&mut self, content_id: &str, tokens: &BTreeSet<String>) {
        for token in tokens {
            if let Some(ids) = self.postings.get_mut(token) {
                ids.remove(content_id);
                if ids.is_empty() {
                    self.postings.remove(token);
                }
            }
        }
    }

    /// Number of distinct query tokens hit, per content id.
    pub fn score(&self, query: &str) -> BTreeMap<&str, usize> {
        let query: BTreeSet<String> = tokenize(query).collect();
        let mut scores = BTreeMap::new();
        for token in &query {
            for id in self.postings.get(token).into_iter().flatten() {
                *scores.entry(id.as_str()).or_insert(0) += 1;
            }
        }
        scores
    }

    pub fn token_count(&self) -> usize {
        self.postings.len()
    }
}
