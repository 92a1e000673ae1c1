//! The screening service: per-session state machine, event-sourced store,
//! orchestration engine, HTTP API and a scripted client.

pub mod engine;
pub mod http;
pub mod session;
pub mod simulate;
pub mod store;

pub use engine::{CaptureOutcome, Engine, EngineError, IngestOutcome};
pub use session::{CaptureKind, Event, EventRecord, Session, SessionError, SessionView, State};
pub use simulate::{simulate, Scenario, SimulateConfig, SimulationOutcome};
pub use store::{Store, StoreError};

/// Binds `addr` and serves the API until the process ends.
pub async fn serve(engine: std::sync::Arc<Engine>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, http::router(engine)).await
}
