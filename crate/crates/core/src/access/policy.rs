use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Role;
use crate::clock::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    /// Full view for everyone.
    Public,
    /// Existence stub for non-members.
    Listed,
    /// Indistinguishable from an unknown PID for non-members.
    Hidden,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::Public => "public",
            Visibility::Listed => "listed",
            Visibility::Hidden => "hidden",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "public" => Some(Visibility::Public),
            "listed" => Some(Visibility::Listed),
            "hidden" => Some(Visibility::Hidden),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPolicy {
    pub enclave: String,
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embargo_until: Option<Timestamp>,
    pub owners: BTreeSet<String>,
    #[serde(default = "default_write_role")]
    pub write_roles: Role,
}

fn default_write_role() -> Role {
    Role::Contributor
}

impl AccessPolicy {
    pub fn new(enclave: impl Into<String>, visibility: Visibility, owner: impl Into<String>) -> Self {
        AccessPolicy {
            enclave: enclave.into(),
            visibility,
            embargo_until: None,
            owners: BTreeSet::from([owner.into()]),
            write_roles: Role::Contributor,
        }
    }

    pub fn public(enclave: impl Into<String>, owner: impl Into<String>) -> Self {
        Self::new(enclave, Visibility::Public, owner)
    }

    pub fn embargoed_until(mut self, until: Timestamp) -> Self {
        self.embargo_until = Some(until);
        self
    }

    pub fn check(&self) -> Result<(), String> {
        if self.enclave.trim().is_empty() {
            return Err("policy enclave must not be empty".into());
        }
        if self.owners.is_empty() || self.owners.iter().any(|o| o.trim().is_empty()) {
            return Err("policy needs at least one non-empty owner".into());
        }
        Ok(())
    }

    pub fn embargo_active(&self, now: Timestamp) -> bool {
        self.embargo_until.is_some_and(|until| now < until)
    }

    /// Declared visibility, downgraded while an embargo is running.
    pub fn effective_visibility(&self, now: Timestamp) -> Visibility {
        if self.embargo_active(now) {
            match self.visibility {
                Visibility::Public | Visibility::Listed => Visibility::Listed,
                Visibility::Hidden => Visibility::Hidden,
            }
        } else {
            self.visibility
        }
    }

    pub fn is_owner(&self, subject: &str) -> bool {
        self.owners.contains(subject)
    }
}
