//! HTTP front end for a run answered by a person.
//!
//! One thread owns the run loop. Handlers read an immutable session snapshot
//! and hand answers to the loop through a fenced queue; a batch id that is
//! not the open batch gets 409.
//!
//! | route | |
//! |---|---|
//! | `GET /api/v1/session` | run id, lifecycle, open batch, progress |
//! | `GET /api/v1/queries/next` | the open batch; 409 while solving, 410 when done |
//! | `POST /api/v1/answers` | `{batch_id, selections}` |
//! | `GET /api/v1/embedding` | latest 2-D view of the training points |
//! | `GET /api/v1/manifest` | the finished run's manifest |

pub mod api;
pub mod runner;
pub mod session;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use axum::http::HeaderValue;
use pal_harness::config::RunConfig;
use pal_harness::manifest::RunManifest;
use pal_harness::{export, HarnessError, Result};

pub use api::router;
pub use runner::{start, RunHandle};
pub use session::{Lifecycle, Shared};

pub const DEFAULT_PORT: u16 = 8787;
pub const DEFAULT_CORS_ORIGIN: &str = "http://localhost:5173";

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub cors_origin: Option<String>,
    /// Where to write the manifest once the run finishes.
    pub out: Option<PathBuf>,
}

impl ServeOptions {
    /// Port from `port`, else `PAL_PORT`, else [`DEFAULT_PORT`]; bind address
    /// from `PAL_BIND`, else loopback; CORS origin from `PAL_CORS_ORIGIN`.
    pub fn from_env(port: Option<u16>) -> Result<Self> {
        let port = match (port, std::env::var("PAL_PORT")) {
            (Some(p), _) => p,
            (None, Ok(v)) => v
                .parse()
                .map_err(|_| HarnessError::config(format!("PAL_PORT {v:?} is not a port")))?,
            (None, Err(_)) => DEFAULT_PORT,
        };
        let ip = match std::env::var("PAL_BIND") {
            Ok(v) => v
                .parse::<IpAddr>()
                .map_err(|_| HarnessError::config(format!("PAL_BIND {v:?} is not an address")))?,
            Err(_) => IpAddr::V4(Ipv4Addr::LOCALHOST),
        };
        let cors_origin = Some(std::env::var("PAL_CORS_ORIGIN").unwrap_or_else(|_| DEFAULT_CORS_ORIGIN.to_string()));
        Ok(ServeOptions {
            addr: SocketAddr::new(ip, port),
            cors_origin,
            out: None,
        })
    }
}

fn cors_header(origin: Option<&str>) -> Result<Option<HeaderValue>> {
    origin
        .map(|o| HeaderValue::from_str(o).map_err(|_| HarnessError::config(format!("bad CORS origin {o:?}"))))
        .transpose()
}

/// Resolves once the run loop has stopped with an error.
async fn run_failed(shared: Shared) {
    loop {
        if shared.read().as_ref().is_some_and(|s| s.error.is_some()) {
            return;
        }
        tokio::time::sleep(std::time::Duration::from_millis(200)).await;
    }
}

/// Serve `config` until Ctrl-C. A finished run stays visible until then; a
/// failed one (for example an answer timeout) shuts the server down at once.
/// Returns the run's outcome.
pub async fn serve(config: &RunConfig, opts: ServeOptions) -> Result<RunManifest> {
    let cors = cors_header(opts.cors_origin.as_deref())?;
    let run_id = format!("run-{}-{}", config.seed, std::process::id());
    let handle = start(config, run_id)?;
    let app = router(handle.shared.clone(), cors);
    let listener = tokio::net::TcpListener::bind(opts.addr)
        .await
        .map_err(|e| HarnessError::Io {
            path: PathBuf::from(opts.addr.to_string()),
            source: e,
        })?;
    log::info!("serving on http://{}", opts.addr);
    let watched = handle.shared.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = run_failed(watched) => {}
            }
        })
        .await
        .map_err(|e| HarnessError::Io {
            path: PathBuf::from(opts.addr.to_string()),
            source: e,
        })?;
    let result = tokio::task::spawn_blocking(move || handle.stop())
        .await
        .map_err(|e| HarnessError::config(format!("run loop join failed: {e}")))?;
    let m = result?;
    if let Some(dir) = &opts.out {
        export::write_run(&m, dir)?;
    }
    Ok(m)
}
