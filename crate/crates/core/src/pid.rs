//! Persistent identifiers and the component taxonomy.
//!
//! A PID renders as `<namespace>:<kind>-<serial>`, e.g. `olcf:wf-00000001`.
//! Serials are minted per (namespace, kind) and never reused.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SERIAL: u32 = 99_999_999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Workflow,
    Code,
    Container,
    Dataset,
    Model,
    Service,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 6] = [
        ComponentKind::Workflow,
        ComponentKind::Code,
        ComponentKind::Container,
        ComponentKind::Dataset,
        ComponentKind::Model,
        ComponentKind::Service,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ComponentKind::Workflow => "wf",
            ComponentKind::Code => "cd",
            ComponentKind::Container => "ct",
            ComponentKind::Dataset => "ds",
            ComponentKind::Model => "ml",
            ComponentKind::Service => "sv",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Workflow => "workflow",
            ComponentKind::Code => "code",
            ComponentKind::Container => "container",
            ComponentKind::Dataset => "dataset",
            ComponentKind::Model => "model",
            ComponentKind::Service => "service",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Accepts the long name or the two-letter tag, case-insensitively.
    pub fn parse_loose(raw: &str) -> Option<Self> {
        let lower = raw.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == lower || k.tag() == lower)
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Registry instance namespace: `[a-z][a-z0-9]{0,15}`.
pub fn is_valid_namespace(ns: &str) -> bool {
    let bytes = ns.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 16
        && bytes[0].is_ascii_lowercase()
        && bytes
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PersistentIdentifier {
    namespace: String,
    kind: ComponentKind,
    serial: u32,
}

impl PersistentIdentifier {
    pub fn new(namespace: &str, kind: ComponentKind, serial: u32) -> Result<Self> {
        if !is_valid_namespace(namespace) {
            return Err(Error::InvalidPid(format!("bad namespace {namespace:?}")));
        }
        if serial == 0 || serial > MAX_SERIAL {
            return Err(Error::InvalidPid(format!("serial {serial} out of range")));
        }
        Ok(PersistentIdentifier {
            namespace: namespace.to_string(),
            kind,
            serial,
        })
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn kind(&self) -> ComponentKind {
        self.kind
    }

    pub fn serial(&self) -> u32 {
        self.serial
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PersistentIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{:08}", self.namespace, self.kind.tag(), self.serial)
    }
}

impl fmt::Debug for PersistentIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pid({self})")
    }
}

impl FromStr for PersistentIdentifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPid(format!("{s:?} is not a PID"));
        let (ns, rest) = s.split_once(':').ok_or_else(bad)?;
        let (tag, digits) = rest.split_once('-').ok_or_else(bad)?;
        let kind = ComponentKind::from_tag(tag).ok_or_else(bad)?;
        if digits.len() != 8 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let serial: u32 = digits.parse().map_err(|_| bad())?;
        if !is_valid_namespace(ns) {
            return Err(bad());
        }
        // serial 0 renders validly but is never minted
        Ok(PersistentIdentifier {
            namespace: ns.to_string(),
            kind,
            serial,
        })
    }
}

impl TryFrom<String> for PersistentIdentifier {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<PersistentIdentifier> for String {
    fn from(p: PersistentIdentifier) -> String {
        p.to_string()
    }
}

impl Ord for PersistentIdentifier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Same order as the rendered strings.
        self.namespace
            .cmp(&other.namespace)
            .then_with(|| self.kind.tag().cmp(other.kind.tag()))
            .then_with(|| self.serial.cmp(&other.serial))
    }
}

impl PartialOrd for PersistentIdentifier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Next serial after `previous` for a (namespace, kind) counter.
pub(crate) fn next_serial(previous: u32) -> Result<u32> {
    if previous >= MAX_SERIAL {
        return Err(Error::CounterExhausted);
    }
    Ok(previous + 1)
}
