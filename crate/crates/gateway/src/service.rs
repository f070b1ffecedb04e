//! The shared service layer behind both HTTP handlers and background jobs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use componenthub_core::access::{
    authenticate, authorize, Action, AuthError, HmacTokenAuthority, Target, TokenVerifier,
};
use componenthub_core::federation::{RemoteClient, RemoteRegistry, SyncReport};
use componenthub_core::watch::{
    CommandRunner, ProcessRunner, VerificationResult, ViabilityPool, ViabilityResult, WatchCycleReport,
};
use componenthub_core::{
    AuthToken, Error, PersistentIdentifier, Principal, Registry, RegistryConfig, Result, Role, Timestamp,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};
use crate::remote::{HttpFetcher, HttpRemote};

/// Subject used by the sync scheduler.
pub const SCHEDULER_SUBJECT: &str = "componenthub-scheduler";

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    ConfigInvalid(#[from] ConfigError),
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("address in use: {0}")]
    AddressInUse(String),
    #[error("cannot listen: {0}")]
    Listen(String),
}

/// Verifier used when no secret is configured: only anonymous access works.
struct NoTokens;

impl TokenVerifier for NoTokens {
    fn verify(&self, _: &AuthToken, _: Timestamp) -> std::result::Result<Principal, AuthError> {
        Err(AuthError::TokenInvalid("this registry does not accept tokens".into()))
    }
}

struct Remote {
    registry: RemoteRegistry,
    client: Arc<dyn RemoteClient>,
}

pub struct Service {
    config: ServiceConfig,
    registry: Arc<Registry>,
    verifier: Arc<dyn TokenVerifier>,
    remotes: BTreeMap<String, Remote>,
    viability: ViabilityPool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub namespace: String,
    pub records: usize,
    pub components: BTreeMap<&'static str, &'static str>,
}

fn probe_storage(dir: &Path) -> std::result::Result<(), StartError> {
    let fail = |e: std::io::Error| StartError::StorageUnavailable(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"ok").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)
}

impl Service {
    /// Open durable storage and wire the production adapters.
    pub fn start(config: ServiceConfig) -> std::result::Result<Self, StartError> {
        config.check()?;
        probe_storage(&config.storage_path)?;
        let clock = config.clock.build()?;
        let mut rc = RegistryConfig::new(config.namespace.clone());
        rc.eager_verification = config.eager_verification;
        rc.attachment_threshold = config.attachment_threshold;
        let registry = Registry::open_dir(rc, &config.storage_path, clock)
            .map_err(|e| StartError::StorageUnavailable(e.to_string()))?
            .with_fetcher(Arc::new(HttpFetcher::new()));
        Self::with_registry(config, Arc::new(registry))
    }

    /// Wrap an already open registry. Remotes get HTTP clients unless
    /// replaced with [`Service::with_remote_client`].
    pub fn with_registry(config: ServiceConfig, registry: Arc<Registry>) -> std::result::Result<Self, StartError> {
        config.check()?;
        let verifier: Arc<dyn TokenVerifier> = match config.tokens.load_secret()? {
            Some(secret) => Arc::new(HmacTokenAuthority::new(secret)),
            None => Arc::new(NoTokens),
        };
        let remotes = config
            .remotes
            .iter()
            .map(|r| {
                let client: Arc<dyn RemoteClient> = Arc::new(HttpRemote::new(&r.base_url));
                (
                    r.name.clone(),
                    Remote {
                        registry: r.clone(),
                        client,
                    },
                )
            })
            .collect();
        let viability = ViabilityPool::new(
            Arc::new(ProcessRunner::new()),
            config.sandbox.sandbox_config(),
            config.sandbox.workers,
        );
        Ok(Service {
            config,
            registry,
            verifier,
            remotes,
            viability,
        })
    }

    pub fn with_remote_client(mut self, name: &str, client: Arc<dyn RemoteClient>) -> Self {
        if let Some(r) = self.remotes.get_mut(name) {
            r.client = client;
        }
        self
    }

    pub fn with_command_runner(mut self, runner: Arc<dyn CommandRunner>) -> Self {
        self.viability = ViabilityPool::new(runner, self.config.sandbox.sandbox_config(), self.config.sandbox.workers);
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Caller identity from an `Authorization` header value.
    pub fn authenticate(&self, authorization: Option<&str>) -> Result<Principal> {
        let token = authorization.map(AuthToken::from_authorization_header).transpose()?;
        Ok(authenticate(self.verifier.as_ref(), token.as_ref(), self.registry.now())?)
    }

    pub fn remote_names(&self) -> Vec<String> {
        self.remotes.keys().cloned().collect()
    }

    pub fn sync(&self, remote: &str, principal: &Principal) -> Result<SyncReport> {
        let r = self
            .remotes
            .get(remote)
            .ok_or_else(|| Error::NotFound(format!("remote {remote}")))?;
        self.registry.sync_pull(&r.registry, r.client.as_ref(), principal)
    }

    /// Pull from every configured remote as the scheduler.
    pub fn sync_all(&self) -> Vec<(String, Result<SyncReport>)> {
        self.remotes
            .values()
            .map(|r| {
                let who = Principal::new(SCHEDULER_SUBJECT, "Sync scheduler", Role::Curator, [r.registry.mirror_enclave.clone()]);
                (r.registry.name.clone(), self.sync(&r.registry.name, &who))
            })
            .collect()
    }

    pub fn watch_cycle(&self, force: bool) -> Result<WatchCycleReport> {
        self.registry.run_watch_cycle(force)
    }

    /// Re-fetch a record's sources. Needs the full view.
    pub fn verify(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<VerificationResult> {
        self.registry.resolve_full(pid, principal)?;
        self.registry.verify_artifact(pid)
    }

    /// Run the declared check command. Needs update rights on the record.
    pub fn check_viability(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<ViabilityResult> {
        let record = self.registry.resolve_full(pid, principal)?;
        authorize(principal, Action::Update, Target::Record(&record.policy), self.registry.now())
            .into_result()
            .map_err(Error::Unauthorized)?;
        self.viability.check(&self.registry, pid)
    }

    pub fn health(&self) -> Health {
        let watch = if self.config.watch.poll_interval_secs > 0 { "running" } else { "disabled" };
        let sync = match (self.remotes.is_empty(), self.config.sync.interval_secs) {
            (true, _) => "no-remotes",
            (false, 0) => "manual",
            _ => "running",
        };
        Health {
            status: "ready",
            namespace: self.config.namespace.clone(),
            records: self.registry.all_records().len(),
            components: BTreeMap::from([("store", "ready"), ("watcher", watch), ("sync", sync)]),
        }
    }
}
