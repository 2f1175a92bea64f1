//! HTTP/JSON service over a directory-backed TMK model store.
//!
//! See [`routes::ENDPOINTS`] for the route table; `GET /api` serves the same
//! listing.

pub mod error;
pub mod routes;
pub mod store;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::HeaderValue;
use axum::routing::{get, post, put};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;
pub use store::{SkillState, Store, Version, VersionLabel};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods(Any)
        .allow_headers(Any)
}

pub fn router(store: Arc<Store>, cors_origin: Option<&str>) -> Router {
    use routes::*;
    Router::new()
        .route("/api", get(api_listing))
        .route("/models", post(upload).get(list_models))
        .route("/models/{skill}", get(get_model))
        .route("/models/{skill}/working", put(update_working))
        .route("/models/{skill}/validate", post(validate))
        .route("/models/{skill}/analyze", post(analyze))
        .route("/models/{skill}/trace", post(trace_method))
        .route("/models/{skill}/diff", post(diff))
        .route("/compare", post(compare))
        .route("/sessions/{skill}", get(list_sessions))
        .route("/sessions/{skill}/start", post(start_session))
        .route("/sessions/{skill}/event", post(session_event))
        .route("/sessions/{skill}/end", post(end_session))
        .route("/reports/{skill}", get(report))
        .fallback(|| async { ApiError::not_found("NOT_FOUND", "no such endpoint") })
        .layer(cors(cors_origin))
        .with_state(store)
}

/// A bound, not yet running service.
pub struct Server {
    listener: TcpListener,
    app: Router,
}

impl Server {
    pub async fn bind(addr: SocketAddr, config: &ServiceConfig) -> io::Result<Self> {
        let store = Arc::new(Store::open(&config.store_dir)?);
        let listener = TcpListener::bind(addr).await?;
        Ok(Self {
            listener,
            app: router(store, config.cors_origin.as_deref()),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> io::Result<()> {
        axum::serve(self.listener, self.app).await
    }

    /// Runs until `shutdown` resolves.
    pub async fn run_until(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> io::Result<()> {
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// Serves on `port` (all interfaces) until Ctrl-C.
pub async fn serve(port: u16, config: ServiceConfig) -> io::Result<()> {
    let server = Server::bind(SocketAddr::from(([0, 0, 0, 0], port)), &config).await?;
    server
        .run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
