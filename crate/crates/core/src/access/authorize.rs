use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AccessPolicy, Principal, Role, Visibility};
use crate::clock::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Read,
    Register,
    Update,
    Tombstone,
    Sync,
    Assess,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Read,
        Action::Register,
        Action::Update,
        Action::Tombstone,
        Action::Sync,
        Action::Assess,
    ];
}

#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Record(&'a AccessPolicy),
    Enclave(&'a str),
}

impl Target<'_> {
    fn enclave(&self) -> &str {
        match self {
            Target::Record(p) => &p.enclave,
            Target::Enclave(e) => e,
        }
    }
}

/// Machine-readable reason attached to every deny.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    EnclaveMismatch,
    InsufficientRole,
    NotOwner,
}

impl DenyReason {
    pub fn code(self) -> &'static str {
        match self {
            DenyReason::EnclaveMismatch => "enclave-mismatch",
            DenyReason::InsufficientRole => "insufficient-role",
            DenyReason::NotOwner => "not-owner",
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    /// Read permitted only as an existence stub.
    AllowStub,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(self) -> bool {
        matches!(self, Decision::Allow)
    }

    pub fn into_result(self) -> Result<(), DenyReason> {
        match self {
            Decision::Allow => Ok(()),
            Decision::AllowStub => Err(DenyReason::EnclaveMismatch),
            Decision::Deny(r) => Err(r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewLevel {
    Full,
    Stub,
    Hidden,
}

/// What a principal may see of a record governed by `policy` at `now`.
pub fn view_level(policy: &AccessPolicy, principal: &Principal, now: Timestamp) -> ViewLevel {
    if policy.is_owner(&principal.subject) || principal.member_of(&policy.enclave) {
        return ViewLevel::Full;
    }
    match policy.effective_visibility(now) {
        Visibility::Public => ViewLevel::Full,
        Visibility::Listed => ViewLevel::Stub,
        Visibility::Hidden => ViewLevel::Hidden,
    }
}

/// Pure decision from roles, enclave membership, policy and the clock.
pub fn authorize(principal: &Principal, action: Action, target: Target<'_>, now: Timestamp) -> Decision {
    let member = principal.member_of(target.enclave());
    let owner = matches!(target, Target::Record(p) if p.is_owner(&principal.subject));
    let role = principal.highest_role();

    match action {
        Action::Read | Action::Assess => {
            let level = match target {
                Target::Record(policy) => view_level(policy, principal, now),
                Target::Enclave(_) if member => ViewLevel::Full,
                Target::Enclave(_) => ViewLevel::Hidden,
            };
            match (level, action) {
                (ViewLevel::Full, _) => Decision::Allow,
                (ViewLevel::Stub, Action::Read) => Decision::AllowStub,
                _ => Decision::Deny(DenyReason::EnclaveMismatch),
            }
        }
        Action::Register => write_gate(role, Role::Contributor, member).unwrap_or(Decision::Allow),
        Action::Update => {
            if let Some(deny) = write_gate(role, Role::Contributor, member) {
                return deny;
            }
            match target {
                Target::Record(policy) if !owner && role < policy.write_roles => {
                    Decision::Deny(DenyReason::InsufficientRole)
                }
                _ => Decision::Allow,
            }
        }
        Action::Tombstone => {
            if let Some(deny) = write_gate(role, Role::Contributor, member) {
                return deny;
            }
            if owner || role >= Role::Curator {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::NotOwner)
            }
        }
        Action::Sync => write_gate(role, Role::Curator, member).unwrap_or(Decision::Allow),
    }
}

fn write_gate(role: Role, minimum: Role, member: bool) -> Option<Decision> {
    if role < minimum {
        Some(Decision::Deny(DenyReason::InsufficientRole))
    } else if !member {
        Some(Decision::Deny(DenyReason::EnclaveMismatch))
    } else {
        None
    }
}
