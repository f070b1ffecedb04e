use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::index::tokenize;
use super::record::{ComponentRecord, RecordView};
use crate::error::{Error, Result};

pub const MAX_PAGE_LIMIT: usize = 100;
pub const DEFAULT_PAGE_LIMIT: usize = 20;

/// Field weights for free-text relevance.
const NAME_WEIGHT: u32 = 3;
const KEYWORD_WEIGHT: u32 = 2;
const DESCRIPTION_WEIGHT: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Kind,
    License,
    Keyword,
    TargetMachine,
    Status,
    Namespace,
}

impl Facet {
    pub const ALL: [Facet; 6] = [
        Facet::Kind,
        Facet::License,
        Facet::Keyword,
        Facet::TargetMachine,
        Facet::Status,
        Facet::Namespace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Kind => "kind",
            Facet::License => "license",
            Facet::Keyword => "keyword",
            Facet::TargetMachine => "target_machine",
            Facet::Status => "status",
            Facet::Namespace => "namespace",
        }
    }

    pub fn parse(raw: &str) -> Option<Facet> {
        Facet::ALL.into_iter().find(|f| f.as_str() == raw)
    }

    /// Facets answerable from an existence stub without leaking content.
    pub fn visible_on_stub(self) -> bool {
        matches!(self, Facet::Kind | Facet::Status | Facet::Namespace)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub facets: BTreeMap<Facet, String>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default)]
    pub include_tombstoned: bool,
}

fn default_limit() -> usize {
    DEFAULT_PAGE_LIMIT
}

impl Default for SearchQuery {
    fn default() -> Self {
        SearchQuery {
            text: None,
            facets: BTreeMap::new(),
            offset: 0,
            limit: DEFAULT_PAGE_LIMIT,
            include_tombstoned: false,
        }
    }
}

impl SearchQuery {
    pub fn listing() -> Self {
        Self::default()
    }

    pub fn text(text: impl Into<String>) -> Self {
        SearchQuery {
            text: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn facet(facet: Facet, value: impl Into<String>) -> Self {
        Self::default().and_facet(facet, value)
    }

    pub fn and_facet(mut self, facet: Facet, value: impl Into<String>) -> Self {
        self.facets.insert(facet, value.into());
        self
    }

    pub fn page(mut self, offset: usize, limit: usize) -> Self {
        self.offset = offset;
        self.limit = limit;
        self
    }

    pub fn with_tombstoned(mut self) -> Self {
        self.include_tombstoned = true;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=MAX_PAGE_LIMIT).contains(&self.limit) {
            return Err(Error::MalformedQuery(format!(
                "limit must be within 1..={MAX_PAGE_LIMIT}, got {}",
                self.limit
            )));
        }
        Ok(())
    }

    pub(crate) fn tokens(&self) -> Option<Vec<String>> {
        self.text
            .as_deref()
            .filter(|t| !t.trim().is_empty())
            .map(tokenize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchPage {
    pub total: usize,
    pub items: Vec<RecordView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_offset: Option<usize>,
}

/// Relevance of `record` for the query text. `stub_only` restricts matching
/// to the name, the only text field a stub exposes. `None` means no match.
pub(crate) fn text_score(record: &ComponentRecord, query: &SearchQuery, stub_only: bool) -> Option<u32> {
    let Some(text) = query.text.as_deref().filter(|t| !t.trim().is_empty()) else {
        return Some(0);
    };
    let tokens: BTreeSet<String> = tokenize(text).into_iter().collect();
    let doc = &record.document;
    let name = doc.name().unwrap_or_default();
    if tokens.is_empty() {
        // punctuation-only query: exact name match only
        return (name.trim().to_lowercase() == text.trim().to_lowercase()).then_some(NAME_WEIGHT);
    }
    let name_tokens: BTreeSet<String> = tokenize(name).into_iter().collect();
    let (kw_tokens, desc_tokens): (BTreeSet<String>, BTreeSet<String>) = if stub_only {
        (BTreeSet::new(), BTreeSet::new())
    } else {
        (
            doc.keywords().iter().flat_map(|k| tokenize(k)).collect(),
            tokenize(doc.description().unwrap_or_default()).into_iter().collect(),
        )
    };
    let score: u32 = tokens
        .iter()
        .map(|t| {
            let mut s = 0;
            if name_tokens.contains(t) {
                s += NAME_WEIGHT;
            }
            if kw_tokens.contains(t) {
                s += KEYWORD_WEIGHT;
            }
            if desc_tokens.contains(t) {
                s += DESCRIPTION_WEIGHT;
            }
            s
        })
        .sum();
    (score > 0).then_some(score)
}
