//! Inverted postings over facet terms and text tokens.

use std::collections::{BTreeMap, BTreeSet};

use super::record::ComponentRecord;
use super::search::Facet;
use crate::pid::PersistentIdentifier;

/// Case-folded alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub(crate) fn facet_term(facet: Facet, value: &str) -> String {
    let value = match facet {
        Facet::Kind => crate::pid::ComponentKind::parse_loose(value)
            .map(|k| k.name().to_string())
            .unwrap_or_else(|| value.to_lowercase()),
        Facet::TargetMachine | Facet::Namespace => value.to_string(),
        _ => value.to_lowercase(),
    };
    format!("f:{}:{}", facet.as_str(), value)
}

pub(crate) fn facet_values(record: &ComponentRecord, facet: Facet) -> Vec<String> {
    match facet {
        Facet::Kind => vec![record.kind.name().to_string()],
        Facet::License => record.document.license().map(str::to_string).into_iter().collect(),
        Facet::Keyword => record.document.keywords(),
        Facet::TargetMachine => record.document.target_machine(),
        Facet::Status => vec![record.status.as_str().to_string()],
        Facet::Namespace => vec![record.pid.namespace().to_string()],
    }
}

fn record_terms(record: &ComponentRecord) -> BTreeSet<String> {
    let mut terms = BTreeSet::new();
    for facet in Facet::ALL {
        for v in facet_values(record, facet) {
            terms.insert(facet_term(facet, &v));
        }
    }
    let doc = &record.document;
    for t in tokenize(doc.name().unwrap_or_default()) {
        terms.insert(format!("t:{t}"));
    }
    for kw in doc.keywords() {
        for t in tokenize(&kw) {
            terms.insert(format!("t:{t}"));
        }
    }
    for t in tokenize(doc.description().unwrap_or_default()) {
        terms.insert(format!("t:{t}"));
    }
    terms
}

#[derive(Default, Debug, Clone)]
pub(crate) struct SearchIndex {
    postings: BTreeMap<String, BTreeSet<PersistentIdentifier>>,
    terms_by_pid: BTreeMap<PersistentIdentifier, BTreeSet<String>>,
}

impl SearchIndex {
    pub fn upsert(&mut self, record: &ComponentRecord) {
        self.remove(&record.pid);
        let terms = record_terms(record);
        for t in &terms {
            self.postings.entry(t.clone()).or_default().insert(record.pid.clone());
        }
        self.terms_by_pid.insert(record.pid.clone(), terms);
    }

    pub fn remove(&mut self, pid: &PersistentIdentifier) {
        if let Some(old) = self.terms_by_pid.remove(pid) {
            for t in old {
                if let Some(set) = self.postings.get_mut(&t) {
                    set.remove(pid);
                    if set.is_empty() {
                        self.postings.remove(&t);
                    }
                }
            }
        }
    }

    pub fn postings(&self, term: &str) -> Option<&BTreeSet<PersistentIdentifier>> {
        self.postings.get(term)
    }

    pub fn all(&self) -> impl Iterator<Item = &PersistentIdentifier> {
        self.terms_by_pid.keys()
    }

    /// PIDs matching every facet, or every indexed PID when none are given.
    pub fn facet_candidates(&self, facets: &BTreeMap<Facet, String>) -> BTreeSet<PersistentIdentifier> {
        let mut sets: Vec<&BTreeSet<PersistentIdentifier>> = Vec::with_capacity(facets.len());
        for (f, v) in facets {
            match self.postings(&facet_term(*f, v)) {
                Some(s) => sets.push(s),
                None => return BTreeSet::new(),
            }
        }
        sets.sort_by_key(|s| s.len());
        match sets.split_first() {
            None => self.all().cloned().collect(),
            Some((first, rest)) => first
                .iter()
                .filter(|p| rest.iter().all(|s| s.contains(*p)))
                .cloned()
                .collect(),
        }
    }

    /// PIDs containing at least one of the tokens in any text field.
    pub fn text_candidates(&self, tokens: &[String]) -> BTreeSet<PersistentIdentifier> {
        tokens
            .iter()
            .filter_map(|t| self.postings(&format!("t:{t}")))
            .flat_map(|s| s.iter().cloned())
            .collect()
    }
}
