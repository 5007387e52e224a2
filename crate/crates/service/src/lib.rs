//! Service layer: configuration, the processing engine, background
//! runtime, HTTP API and admin CLI.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod runtime;

use std::net::SocketAddr;
use std::sync::Arc;

use engine::Engine;
use runtime::Runtime;

/// A running API server with its worker runtime, used by tests and embedders.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
    runtime: Option<Runtime>,
}

impl ServerHandle {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn stop(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

/// Binds `addr` and serves the API on a background thread. With
/// `full_runtime` pollers and crawlers run as well as workers.
pub fn spawn_server(engine: Arc<Engine>, addr: &str, full_runtime: bool) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let rt = if full_runtime {
        Runtime::start(engine.clone())
    } else {
        Runtime::start_workers(engine.clone(), engine.config().workers)
    };
    let app = api::router(api::AppState { engine, queue: rt.queue() });
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let tokio_rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let thread = std::thread::Builder::new().name("http".into()).spawn(move || {
        tokio_rt.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => return log::error!("listener: {e}"),
            };
            let served = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = served.await {
                log::error!("server error: {e}");
            }
        })
    })?;
    Ok(ServerHandle { addr: local, shutdown: Some(tx), thread: Some(thread), runtime: Some(rt) })
}

/// Serves until ctrl-c.
pub fn serve_blocking(engine: Arc<Engine>, addr: &str) -> std::io::Result<()> {
    let handle = spawn_server(engine, addr, true)?;
    log::info!("listening on http://{}", handle.addr);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(tokio::signal::ctrl_c())?;
    log::info!("shutting down");
    handle.stop();
    Ok(())
}
