//! Bearer tokens.
//!
//! The reference verifier issues HMAC-SHA256 signed tokens of the form
//! `chubtok_<base64url(claims)>.<base64url(mac)>`. The fixed prefix lets the
//! registry refuse to store anything that looks like a credential.

use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use super::{IssuedVia, Principal, Role};
use crate::clock::Timestamp;

pub const TOKEN_PREFIX: &str = "chubtok_";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("token expired")]
    TokenExpired,
    #[error("token invalid: {0}")]
    TokenInvalid(String),
}

/// Opaque bearer credential. `Debug` never prints the secret.
#[derive(Clone, PartialEq, Eq)]
pub struct AuthToken(String);

impl AuthToken {
    pub fn new(raw: impl Into<String>) -> Self {
        AuthToken(raw.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    /// Parses an `Authorization` header value of the form `Bearer <token>`.
    pub fn from_authorization_header(value: &str) -> Result<Self, AuthError> {
        let (scheme, token) = value
            .trim()
            .split_once(' ')
            .ok_or_else(|| AuthError::TokenInvalid("malformed authorization header".into()))?;
        if !scheme.eq_ignore_ascii_case("bearer") || token.trim().is_empty() {
            return Err(AuthError::TokenInvalid("expected a bearer token".into()));
        }
        Ok(AuthToken(token.trim().to_string()))
    }
}

impl fmt::Debug for AuthToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AuthToken(<redacted>)")
    }
}

pub trait TokenVerifier: Send + Sync {
    fn verify(&self, token: &AuthToken, now: Timestamp) -> Result<Principal, AuthError>;
}

/// Resolve the caller. No token means the anonymous reader.
pub fn authenticate(
    verifier: &dyn TokenVerifier,
    token: Option<&AuthToken>,
    now: Timestamp,
) -> Result<Principal, AuthError> {
    match token {
        None => Ok(Principal::anonymous()),
        Some(t) => verifier.verify(t, now),
    }
}

#[derive(Serialize, Deserialize)]
struct Claims {
    sub: String,
    name: String,
    role: Role,
    enclaves: Vec<String>,
    via: IssuedVia,
    exp: i64,
}

type HmacSha256 = Hmac<Sha256>;

pub struct HmacTokenAuthority {
    secret: Vec<u8>,
}

impl HmacTokenAuthority {
    pub fn new(secret: impl AsRef<[u8]>) -> Self {
        HmacTokenAuthority {
            secret: secret.as_ref().to_vec(),
        }
    }

    fn mac(&self, payload: &[u8]) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(&self.secret).expect("hmac accepts any key length");
        mac.update(payload);
        mac
    }

    pub fn issue(&self, principal: &Principal, expires_at: Timestamp) -> AuthToken {
        let claims = Claims {
            sub: principal.subject.clone(),
            name: principal.display_name.clone(),
            role: principal.highest_role(),
            enclaves: principal.enclaves.iter().cloned().collect(),
            via: principal.issued_via,
            exp: expires_at.unix(),
        };
        let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
        let sig = URL_SAFE_NO_PAD.encode(self.mac(payload.as_bytes()).finalize().into_bytes());
        AuthToken(format!("{TOKEN_PREFIX}{payload}.{sig}"))
    }
}

impl TokenVerifier for HmacTokenAuthority {
    fn verify(&self, token: &AuthToken, now: Timestamp) -> Result<Principal, AuthError> {
        let invalid = |why: &str| AuthError::TokenInvalid(why.to_string());
        let body = token.0.strip_prefix(TOKEN_PREFIX).ok_or_else(|| invalid("unknown token format"))?;
        let (payload, sig) = body.split_once('.').ok_or_else(|| invalid("missing signature"))?;
        let sig = URL_SAFE_NO_PAD.decode(sig).map_err(|_| invalid("signature encoding"))?;
        self.mac(payload.as_bytes())
            .verify_slice(&sig)
            .map_err(|_| invalid("bad signature"))?;
        let claims: Claims = URL_SAFE_NO_PAD
            .decode(payload)
            .ok()
            .and_then(|raw| serde_json::from_slice(&raw).ok())
            .ok_or_else(|| invalid("claims"))?;
        if now.unix() >= claims.exp {
            return Err(AuthError::TokenExpired);
        }
        if claims.sub.trim().is_empty() {
            return Err(invalid("empty subject"));
        }
        let mut p = Principal::new(claims.sub, claims.name, claims.role, claims.enclaves);
        if claims.via == IssuedVia::Federated {
            p = p.federated();
        }
        Ok(p)
    }
}
