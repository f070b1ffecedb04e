//! Authentication, enclave-scoped authorization and visibility.

mod authorize;
mod policy;
mod principal;
pub mod token;

pub use authorize::{authorize, view_level, Action, Decision, DenyReason, Target, ViewLevel};
pub use policy::{AccessPolicy, Visibility};
pub use principal::{IssuedVia, Principal, Role};
pub use token::{authenticate, AuthError, AuthToken, HmacTokenAuthority, TokenVerifier};
