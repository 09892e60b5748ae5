use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use vernqa_core::pipeline::Pipeline;
use vernqa_core::summarizer::{split_sentences, summarize, SentenceSet};

use crate::error::ApiError;
use crate::store::{EhrDocument, Role, StoreError};
use crate::AppState;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/ask", post(ask))
        .route("/v1/summarize", post(summarize_handler))
        .route("/v1/ehr/{patient_id}", post(store_ehr).get(list_ehr))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{session_id}", get(get_session))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn store_error(e: StoreError) -> ApiError {
    let msg = e.to_string();
    match e {
        StoreError::UnknownSession(_) => {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_session", msg)
        }
        StoreError::DuplicateDoc { .. } => {
            ApiError::new(StatusCode::CONFLICT, "duplicate_doc", msg)
        }
        StoreError::EmptyText => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_text", msg),
        StoreError::EmptyPatient => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_patient_id", msg)
        }
        StoreError::Io(_) => ApiError::internal(msg),
    }
}

/// Runs CPU-bound model work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    pub index_size: usize,
}

async fn health(State(st): State<Arc<AppState>>) -> Response {
    let (status, body) = match st.pipeline() {
        Some(p) => (StatusCode::OK, ("ok", p.index_size())),
        None => (StatusCode::SERVICE_UNAVAILABLE, ("not_ready", 0)),
    };
    let body = HealthResponse {
        status: body.0.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        index_size: body.1,
    };
    (status, Json(body)).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskHit {
    pub answer_id: String,
    pub score: f64,
    pub text: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    pub lang: String,
    pub hits: Vec<AskHit>,
    pub disclaimer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

async fn ask(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<AskResponse>, ApiError> {
    let req: AskRequest = parse_body(&body)?;
    let lang = req.lang.unwrap_or_else(|| st.settings.default_lang.clone());
    let top_k = req.top_k.unwrap_or(st.settings.top_k_default);
    if top_k == 0 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_top_k",
            "top_k must be at least 1",
        ));
    }
    if let Some(id) = &req.session_id {
        if !st.stores.sessions.contains(id) {
            return Err(store_error(StoreError::UnknownSession(id.clone())));
        }
    }
    let pipeline = st.pipeline().ok_or_else(ApiError::not_ready)?;
    let (question, q_lang) = (req.question.clone(), lang.clone());
    let bundle = blocking(move || {
        pipeline
            .ask(&question, &q_lang, top_k)
            .map_err(ApiError::from)
    })
    .await?;
    if let Some(id) = &req.session_id {
        st.stores
            .sessions
            .append(
                id,
                &[
                    (Role::User, &req.question, &lang),
                    (Role::Assistant, &bundle.final_text, &lang),
                ],
            )
            .map_err(store_error)?;
    }
    Ok(Json(AskResponse {
        answer: bundle.final_text,
        lang,
        hits: bundle
            .hits
            .into_iter()
            .map(|h| AskHit {
                answer_id: h.hit.answer_id,
                score: h.hit.score,
                text: h.text,
                rank: h.hit.rank,
            })
            .collect(),
        disclaimer: st.settings.disclaimer.clone(),
        session_id: req.session_id,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeRequest {
    #[serde(default)]
    pub patient_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeResponse {
    pub summary_sentences: Vec<String>,
    pub k_used: usize,
}

/// Sentences of each note in document order, renumbered as one set.
fn sentences_of(docs: &[EhrDocument]) -> SentenceSet {
    SentenceSet::from_texts(
        docs.iter()
            .flat_map(|d| split_sentences(&d.text).sentences)
            .map(|s| s.text),
    )
}

async fn summarize_handler(
    State(st): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<SummarizeResponse>, ApiError> {
    let req: SummarizeRequest = parse_body(&body)?;
    let set = match (req.patient_id, req.text) {
        (Some(pid), None) => {
            let docs = st.stores.ehr.documents(&pid).ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_patient",
                    format!("no documents stored for patient {pid}"),
                )
            })?;
            sentences_of(&docs)
        }
        (None, Some(text)) => split_sentences(&text),
        _ => {
            return Err(ApiError::bad_request(
                "provide exactly one of patient_id or text",
            ))
        }
    };
    if set.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_text",
            "no sentences to summarize",
        ));
    }
    let pipeline = st.pipeline().ok_or_else(ApiError::not_ready)?;
    let cfg = st.settings.summary.clone();
    blocking(move || summarize_with(&pipeline, &set, &cfg))
        .await
        .map(Json)
}

fn summarize_with(
    pipeline: &Pipeline,
    set: &SentenceSet,
    cfg: &vernqa_core::summarizer::SummaryConfig,
) -> Result<SummarizeResponse, ApiError> {
    let mut embeddings = HashMap::new();
    for s in &set.sentences {
        if !embeddings.contains_key(s.text.as_str()) {
            embeddings.insert(s.text.as_str(), pipeline.embed_sentence(&s.text)?);
        }
    }
    let out = summarize(set, |t| embeddings[t].clone(), cfg);
    Ok(SummarizeResponse {
        summary_sentences: out.sentences.into_iter().map(|s| s.text).collect(),
        k_used: out.k_used,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreEhrRequest {
    pub text: String,
    #[serde(default)]
    pub doc_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEhrResponse {
    pub patient_id: String,
    pub doc_id: String,
    pub created_at: DateTime<Utc>,
}

async fn store_ehr(
    State(st): State<Arc<AppState>>,
    Path(patient_id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<StoreEhrResponse>), ApiError> {
    let req: StoreEhrRequest = parse_body(&body)?;
    let doc = st
        .stores
        .ehr
        .insert(&patient_id, req.doc_id.as_deref(), &req.text)
        .map_err(store_error)?;
    Ok((
        StatusCode::CREATED,
        Json(StoreEhrResponse {
            patient_id: doc.patient_id,
            doc_id: doc.doc_id,
            created_at: doc.created_at,
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrListResponse {
    pub patient_id: String,
    pub documents: Vec<EhrDocument>,
}

async fn list_ehr(
    State(st): State<Arc<AppState>>,
    Path(patient_id): Path<String>,
) -> Result<Json<EhrListResponse>, ApiError> {
    let documents = st.stores.ehr.documents(&patient_id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_patient",
            format!("no documents stored for patient {patient_id}"),
        )
    })?;
    Ok(Json(EhrListResponse {
        patient_id,
        documents,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

async fn create_session(
    State(st): State<Arc<AppState>>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let rec = st.stores.sessions.create().map_err(store_error)?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: rec.session_id,
        }),
    ))
}

async fn get_session(
    State(st): State<Arc<AppState>>,
    Path(session_id): Path<String>,
) -> Result<Json<crate::store::SessionRecord>, ApiError> {
    st.stores
        .sessions
        .get(&session_id)
        .map(Json)
        .ok_or_else(|| store_error(StoreError::UnknownSession(session_id)))
}
