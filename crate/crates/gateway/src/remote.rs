//! Network adapters: the sister-registry client used by sync and the
//! artifact fetcher used by watchers.

use std::process::{Command, Stdio};
use std::time::Duration;

use componenthub_core::federation::{RemoteClient, ToolPage, ToolQuery};
use componenthub_core::store::{ComponentRecord, RecordView};
use componenthub_core::watch::{ArtifactFetcher, FetchError};
use componenthub_core::{Error, PersistentIdentifier, Result, SourceDescriptor, SourceScheme};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

fn client(timeout: Duration) -> Client {
    Client::builder()
        .timeout(timeout)
        .user_agent(concat!("componenthub/", env!("CARGO_PKG_VERSION")))
        .build()
        .expect("http client builds")
}

/// A sister registry reached through its public gateway.
pub struct HttpRemote {
    base: String,
    http: Client,
}

impl HttpRemote {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        HttpRemote {
            base: base_url.trim_end_matches('/').to_string(),
            http: client(timeout),
        }
    }

    fn get(&self, path: &str) -> Result<Response> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .http
            .get(&url)
            .send()
            .map_err(|e| Error::RemoteUnreachable(format!("{url}: {e}")))?;
        match resp.status() {
            s if s.is_success() => Ok(resp),
            StatusCode::NOT_FOUND => Err(Error::NotFound(url)),
            StatusCode::GONE => Err(Error::Gone { pid: url, metadata: None }),
            s => Err(Error::RemoteUnreachable(format!("{url} answered {s}"))),
        }
    }
}

fn body_error(e: reqwest::Error) -> Error {
    Error::RemoteUnreachable(format!("reading response: {e}"))
}

impl RemoteClient for HttpRemote {
    fn list_tools(&self, query: &ToolQuery) -> Result<ToolPage> {
        let mut path = format!("/ga4gh/trs/v2/tools?offset={}&limit={}", query.offset, query.limit);
        if let Some(kind) = query.kind {
            path.push_str(&format!("&toolClass={}", kind.name()));
        }
        let bytes = self.get(&path)?.bytes().map_err(body_error)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::RemoteUnreachable(format!("bad tool page: {e}")))
    }

    fn fetch_record(&self, pid: &PersistentIdentifier) -> Result<ComponentRecord> {
        let bytes = self.get(&format!("/api/v1/records/{pid}"))?.bytes().map_err(body_error)?;
        match serde_json::from_slice::<RecordView>(&bytes) {
            Ok(RecordView::Full(record)) => Ok(*record),
            Ok(_) => Err(Error::NotFound(pid.to_string())),
            Err(e) => Err(Error::RemoteUnreachable(format!("bad record for {pid}: {e}"))),
        }
    }

    fn fetch_crate(&self, pid: &PersistentIdentifier) -> Result<Vec<u8>> {
        Ok(self
            .get(&format!("/api/v1/records/{pid}/crate"))?
            .bytes()
            .map_err(body_error)?
            .to_vec())
    }
}

/// Fetches watched artifacts. HTTPS and DOI sources are downloaded; a git
/// source is observed as the commit its ref resolves to.
pub struct HttpFetcher {
    http: Client,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        HttpFetcher {
            http: client(DEFAULT_TIMEOUT),
        }
    }
}

impl HttpFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    fn download(&self, url: &str) -> std::result::Result<Vec<u8>, FetchError> {
        let resp = self
            .http
            .get(url)
            .send()
            .map_err(|e| FetchError::Unreachable(format!("{url}: {e}")))?;
        match resp.status() {
            s if s.is_success() => resp
                .bytes()
                .map(|b| b.to_vec())
                .map_err(|e| FetchError::Unreachable(e.to_string())),
            StatusCode::NOT_FOUND | StatusCode::GONE => Err(FetchError::NotFound(url.to_string())),
            s => Err(FetchError::Unreachable(format!("{url} answered {s}"))),
        }
    }
}

fn git_head(locator: &str, reference: Option<&str>) -> std::result::Result<Vec<u8>, FetchError> {
    let out = Command::new("git")
        .args(["ls-remote", "--exit-code", locator, reference.unwrap_or("HEAD")])
        .env("GIT_TERMINAL_PROMPT", "0")
        .stdin(Stdio::null())
        .output()
        .map_err(|e| FetchError::Unreachable(format!("git: {e}")))?;
    match out.status.code() {
        Some(0) => Ok(out.stdout),
        // --exit-code: the repository answered but has no such ref
        Some(2) => Err(FetchError::NotFound(format!("{locator} has no ref {}", reference.unwrap_or("HEAD")))),
        _ => Err(FetchError::Unreachable(String::from_utf8_lossy(&out.stderr).trim().to_string())),
    }
}

impl ArtifactFetcher for HttpFetcher {
    fn fetch(&self, source: &SourceDescriptor) -> std::result::Result<Vec<u8>, FetchError> {
        match source.scheme {
            SourceScheme::Https => self.download(&source.locator),
            SourceScheme::Doi => {
                let doi = source.locator.trim_start_matches("doi:");
                self.download(&format!("https://doi.org/{doi}"))
            }
            SourceScheme::Git => git_head(&source.locator, source.reference.as_deref()),
            SourceScheme::Oci => Err(FetchError::Unreachable("no OCI registry client configured".into())),
            SourceScheme::File => Err(FetchError::NotFound(source.locator.clone())),
        }
    }
}
