//! Listener lifecycle and the periodic watch and sync jobs.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::config::ServiceConfig;
use crate::http::router;
use crate::service::{Service, StartError};

/// A running server. Dropping it without [`ServiceHandle::shutdown`] leaves
/// the tasks running until the runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Stop accepting requests, let in-flight ones finish and end the jobs.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
    }

    /// Resolve once shutdown was requested through another channel.
    pub async fn stopped(&mut self) {
        for task in self.tasks.drain(..) {
            let _ = task.await;
        }
    }
}

/// Open storage and start serving on `config.listen_address`.
pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle, StartError> {
    let service = tokio::task::spawn_blocking(move || Service::start(config))
        .await
        .map_err(|e| StartError::Listen(e.to_string()))??;
    serve_service(Arc::new(service)).await
}

pub async fn serve_service(service: Arc<Service>) -> Result<ServiceHandle, StartError> {
    let address = service.config().listen_address.clone();
    let listener = tokio::net::TcpListener::bind(&address).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            StartError::AddressInUse(address.clone())
        } else {
            StartError::Listen(format!("{address}: {e}"))
        }
    })?;
    let addr = listener.local_addr().map_err(|e| StartError::Listen(e.to_string()))?;
    let (stop, stopped) = watch::channel(false);

    let mut tasks = Vec::new();
    let app = router(service.clone());
    let mut rx = stopped.clone();
    tasks.push(tokio::spawn(async move {
        let shutdown = async move {
            let _ = rx.wait_for(|s| *s).await;
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!(error = %e, "server stopped");
        }
    }));

    let watch_secs = service.config().watch.poll_interval_secs;
    if watch_secs > 0 {
        let svc = service.clone();
        tasks.push(periodic(Duration::from_secs(watch_secs), stopped.clone(), move || {
            match svc.watch_cycle(false) {
                Ok(report) => tracing::info!(?report, "watch cycle"),
                Err(e) => tracing::warn!(error = %e, "watch cycle failed"),
            }
        }));
    }
    let sync_secs = service.config().sync.interval_secs;
    if sync_secs > 0 && !service.remote_names().is_empty() {
        let svc = service.clone();
        tasks.push(periodic(Duration::from_secs(sync_secs), stopped.clone(), move || {
            for (remote, outcome) in svc.sync_all() {
                match outcome {
                    Ok(report) => tracing::info!(remote, pulled = report.pulled, "sync"),
                    Err(e) => tracing::warn!(remote, error = %e, "sync failed"),
                }
            }
        }));
    }
    tracing::info!(%addr, namespace = %service.config().namespace, "listening");
    Ok(ServiceHandle {
        addr,
        service,
        stop,
        tasks,
    })
}

fn periodic<F>(every: Duration, mut stopped: watch::Receiver<bool>, job: F) -> JoinHandle<()>
where
    F: Fn() + Send + Sync + 'static,
{
    let job = Arc::new(job);
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(every);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        ticker.tick().await;
        loop {
            tokio::select! {
                _ = ticker.tick() => {
                    let job = job.clone();
                    let _ = tokio::task::spawn_blocking(move || job()).await;
                }
                changed = stopped.changed() => {
                    if changed.is_err() || *stopped.borrow() {
                        break;
                    }
                }
            }
        }
    })
}
