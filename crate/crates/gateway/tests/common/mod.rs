#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use componenthub_core::access::HmacTokenAuthority;
use componenthub_core::{Principal, Role, Timestamp};
use componenthub_gateway::{serve, serve_service, Service, ServiceConfig, ServiceHandle};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::Method;
use serde_json::{json, Value};
use tempfile::TempDir;

pub const SECRET: &str = "integration-secret";

pub fn config(namespace: &str, dir: &Path) -> ServiceConfig {
    let mut config = ServiceConfig::new(namespace, dir);
    config.listen_address = "127.0.0.1:0".into();
    config.tokens.secret = Some(SECRET.into());
    config.watch.poll_interval_secs = 0;
    config
}

/// A server on an ephemeral port with its own runtime and storage.
pub struct TestServer {
    pub runtime: tokio::runtime::Runtime,
    pub handle: Option<ServiceHandle>,
    pub dir: TempDir,
    pub http: Client,
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

impl TestServer {
    pub fn start(namespace: &str) -> Self {
        Self::start_with(namespace, |_| {})
    }

    pub fn start_with(namespace: &str, tweak: impl FnOnce(&mut ServiceConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(namespace, &dir.path().join("store"));
        tweak(&mut cfg);
        let runtime = runtime();
        let handle = runtime.block_on(serve(cfg)).expect("server starts");
        TestServer {
            runtime,
            handle: Some(handle),
            dir,
            http: Client::new(),
        }
    }

    pub fn from_service(service: Service, dir: TempDir) -> Self {
        let runtime = runtime();
        let handle = runtime.block_on(serve_service(Arc::new(service))).expect("server starts");
        TestServer {
            runtime,
            handle: Some(handle),
            dir,
            http: Client::new(),
        }
    }

    pub fn handle(&self) -> &ServiceHandle {
        self.handle.as_ref().expect("running")
    }

    pub fn url(&self) -> String {
        self.handle().base_url()
    }

    pub fn storage(&self) -> PathBuf {
        self.handle().service().config().storage_path.clone()
    }

    pub fn shutdown(&mut self) {
        if let Some(h) = self.handle.take() {
            self.runtime.block_on(h.shutdown());
        }
    }

    pub fn request(&self, method: Method, path: &str, token: Option<&str>) -> RequestBuilder {
        let rb = self.http.request(method, format!("{}{path}", self.url()));
        match token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    pub fn get(&self, path: &str, token: Option<&str>) -> Response {
        self.request(Method::GET, path, token).send().unwrap()
    }

    pub fn post_json(&self, path: &str, token: Option<&str>, body: &Value) -> Response {
        self.request(Method::POST, path, token).json(body).send().unwrap()
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn token(subject: &str, role: Role, enclaves: &[&str]) -> String {
    let p = Principal::new(subject, subject, role, enclaves.iter().copied());
    let expires = Timestamp::from_unix(chrono_now() + 3600);
    HmacTokenAuthority::new(SECRET).issue(&p, expires).expose().to_string()
}

fn chrono_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap()
        .as_secs() as i64
}

pub fn document(name: &str) -> Value {
    json!({
        "name": name,
        "description": "Aligns sequencing reads against a reference genome on GPU nodes.",
        "kind": "workflow",
        "license": "Apache-2.0",
        "authors": [{"name": "Ada Lovelace", "identifier": "https://orcid.org/0000-0000-0000-0001"}],
        "keywords": ["genomics", "alignment"],
    })
}

pub fn register_body(name: &str) -> Value {
    json!({
        "document": document(name),
        "sources": [{"scheme": "git", "locator": "https://example.org/align.git", "ref": "v1.0"}],
        "visibility": "public",
    })
}

/// A Workflow RO-Crate directory with one CWL workflow.
pub fn crate_dir(root: &Path, name: &str) -> PathBuf {
    let dir = root.join(format!("{name}-crate"));
    std::fs::create_dir_all(&dir).unwrap();
    let metadata = json!({
        "@context": "https://w3id.org/ro/crate/1.1/context",
        "@graph": [
            {"@id": "ro-crate-metadata.json", "@type": "CreativeWork",
             "about": {"@id": "./"}, "conformsTo": {"@id": "https://w3id.org/ro/crate/1.1"}},
            {"@id": "./", "@type": "Dataset", "name": name,
             "description": format!("{name} aligns reads and calls variants on the cluster."),
             "license": {"@id": "https://spdx.org/licenses/MIT"},
             "author": [{"@id": "https://orcid.org/0000-0002-1825-0097"}],
             "keywords": "genomics, alignment",
             "mainEntity": {"@id": "main.cwl"},
             "hasPart": [{"@id": "main.cwl"}],
             "conformsTo": {"@id": "https://w3id.org/workflowhub/workflow-ro-crate/1.0"}},
            {"@id": "main.cwl", "@type": ["File", "SoftwareSourceCode", "ComputationalWorkflow"], "name": "main"},
            {"@id": "https://spdx.org/licenses/MIT", "@type": "CreativeWork", "identifier": "MIT"},
            {"@id": "https://orcid.org/0000-0002-1825-0097", "@type": "Person", "name": "Josiah Carberry"}
        ]
    });
    std::fs::write(dir.join("ro-crate-metadata.json"), serde_json::to_vec_pretty(&metadata).unwrap()).unwrap();
    std::fs::write(
        dir.join("main.cwl"),
        format!(
            "cwlVersion: v1.2\nclass: Workflow\nlabel: {name}\ninputs:\n  reads: File\noutputs: {{}}\nsteps:\n  align:\n    run: align.cwl\n    in:\n      fastq: reads\n    out: [bam]\n"
        ),
    )
    .unwrap();
    dir
}

/// Drop fields that legitimately differ between two otherwise identical
/// records created at different moments or under different serials.
pub fn strip_volatile(mut v: Value) -> Value {
    if let Some(obj) = v.as_object_mut() {
        for key in ["pid", "created_at", "updated_at"] {
            obj.remove(key);
        }
    }
    v
}
