use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ALGORITHM: &str = "sha-256";

/// SHA-256 digest of an exact byte sequence.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "ChecksumRepr", into = "ChecksumRepr")]
pub struct Checksum([u8; 32]);

impl Checksum {
    pub fn of(bytes: &[u8]) -> Self {
        Checksum(Sha256::digest(bytes).into())
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    /// 64 lowercase hex characters.
    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(raw: &str) -> Option<Self> {
        if raw.len() != 64 || raw.bytes().any(|b| b.is_ascii_uppercase()) {
            return None;
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(raw, &mut out).ok()?;
        Some(Checksum(out))
    }
}

/// Hash the exact input bytes.
pub fn compute_checksum(bytes: &[u8]) -> Checksum {
    Checksum::of(bytes)
}

impl fmt::Debug for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Checksum({})", self.hex())
    }
}

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

impl FromStr for Checksum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Checksum::from_hex(s).ok_or_else(|| format!("not a sha-256 hex digest: {s:?}"))
    }
}

#[derive(Serialize, Deserialize)]
struct ChecksumRepr {
    algorithm: String,
    digest: String,
}

impl TryFrom<ChecksumRepr> for Checksum {
    type Error = String;

    fn try_from(repr: ChecksumRepr) -> Result<Self, Self::Error> {
        if repr.algorithm != ALGORITHM {
            return Err(format!("unsupported checksum algorithm {:?}", repr.algorithm));
        }
        repr.digest.parse()
    }
}

impl From<Checksum> for ChecksumRepr {
    fn from(c: Checksum) -> Self {
        ChecksumRepr {
            algorithm: ALGORITHM.to_string(),
            digest: c.hex(),
        }
    }
}
