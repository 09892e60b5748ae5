//! HTTP JSON API over the question-answering pipeline: ask, summarize
//! patient notes, store notes, and keep per-session chat history.
//!
//! | method | path | success |
//! |---|---|---|
//! | GET | `/health` | 200 `{status, version, index_size}` |
//! | POST | `/v1/ask` | 200 `{answer, lang, hits, disclaimer, session_id?}` |
//! | POST | `/v1/summarize` | 200 `{summary_sentences, k_used}` |
//! | POST | `/v1/ehr/{patient_id}` | 201 `{patient_id, doc_id, created_at}` |
//! | GET | `/v1/ehr/{patient_id}` | 200 `{patient_id, documents}` |
//! | POST | `/v1/sessions` | 201 `{session_id}` |
//! | GET | `/v1/sessions/{session_id}` | 200 session record |
//!
//! Errors are `{error_code, message}`. JSON schemas for every body live in
//! `docs/schemas/`.

pub mod config;
pub mod error;
pub mod routes;
pub mod store;
pub mod testkit;

use std::sync::{Arc, RwLock};

use vernqa_core::pipeline::Pipeline;
use vernqa_core::summarizer::SummaryConfig;

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorBody, StartupError};
pub use routes::router;
pub use store::Stores;

/// Request-time settings taken from the config.
#[derive(Debug, Clone)]
pub struct Settings {
    pub default_lang: String,
    pub top_k_default: usize,
    pub disclaimer: String,
    pub summary: SummaryConfig,
}

impl From<&ServiceConfig> for Settings {
    fn from(c: &ServiceConfig) -> Self {
        Settings {
            default_lang: c.default_lang.clone(),
            top_k_default: c.top_k_default,
            disclaimer: c.disclaimer_text.clone(),
            summary: c.summary.clone(),
        }
    }
}

pub struct AppState {
    pipeline: RwLock<Option<Arc<Pipeline>>>,
    pub stores: Stores,
    pub settings: Settings,
}

impl AppState {
    pub fn new(pipeline: Option<Pipeline>, stores: Stores, settings: Settings) -> Self {
        AppState {
            pipeline: RwLock::new(pipeline.map(Arc::new)),
            stores,
            settings,
        }
    }

    /// Loads every artifact and both stores; any missing piece is an error.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let pipeline = cfg.load_pipeline()?;
        let stores = Stores::open(&cfg.data_dir)?;
        Ok(Self::new(Some(pipeline), stores, Settings::from(cfg)))
    }

    /// The current pipeline snapshot.
    pub fn pipeline(&self) -> Option<Arc<Pipeline>> {
        self.pipeline
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    /// Replaces the pipeline; requests already running keep their snapshot.
    pub fn swap_pipeline(&self, next: Option<Pipeline>) -> Option<Arc<Pipeline>> {
        let mut g = self.pipeline.write().unwrap_or_else(|p| p.into_inner());
        std::mem::replace(&mut *g, next.map(Arc::new))
    }
}

/// Binds `host:port` and serves until Ctrl-C.
pub async fn serve(cfg: &ServiceConfig) -> Result<(), StartupError> {
    let state = Arc::new(AppState::from_config(cfg)?);
    let listener = tokio::net::TcpListener::bind((cfg.host.as_str(), cfg.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, index_size = state.pipeline().map_or(0, |p| p.index_size()), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
