use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Role lattice: each role implies every role below it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Reader,
    Contributor,
    Curator,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Reader, Role::Contributor, Role::Curator, Role::Admin];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Reader => "reader",
            Role::Contributor => "contributor",
            Role::Curator => "curator",
            Role::Admin => "admin",
        }
    }

    pub fn parse(raw: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == raw)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssuedVia {
    Local,
    Federated,
}

pub const ANONYMOUS_SUBJECT: &str = "anonymous";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub subject: String,
    pub display_name: String,
    pub enclaves: BTreeSet<String>,
    roles: BTreeSet<Role>,
    pub issued_via: IssuedVia,
}

impl Principal {
    /// Builds a principal holding `role` and everything it implies.
    pub fn new(
        subject: impl Into<String>,
        display_name: impl Into<String>,
        role: Role,
        enclaves: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let subject = subject.into();
        assert!(!subject.trim().is_empty(), "principal subject must not be empty");
        Principal {
            subject,
            display_name: display_name.into(),
            enclaves: enclaves.into_iter().map(Into::into).collect(),
            roles: Role::ALL.into_iter().filter(|r| *r <= role).collect(),
            issued_via: IssuedVia::Local,
        }
    }

    pub fn federated(mut self) -> Self {
        self.issued_via = IssuedVia::Federated;
        self
    }

    pub fn anonymous() -> Self {
        Principal::new(ANONYMOUS_SUBJECT, "Anonymous", Role::Reader, Vec::<String>::new())
    }

    pub fn is_anonymous(&self) -> bool {
        self.subject == ANONYMOUS_SUBJECT
    }

    pub fn roles(&self) -> &BTreeSet<Role> {
        &self.roles
    }

    pub fn highest_role(&self) -> Role {
        self.roles.iter().copied().max().unwrap_or(Role::Reader)
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn member_of(&self, enclave: &str) -> bool {
        self.enclaves.contains(enclave)
    }
}
