use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::services::{ServeDir, ServeFile};

use cvf_core::agreement::{agreement_stats, AgreementReport, Label};
use cvf_core::select::{EditMode, EditRecord};

use crate::store::{LabelRecord, LabelStore, StoreError};

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>review</title></head>
<body>
<p>No UI bundle configured. The API is served under <code>/api</code>:</p>
<ul>
<li><code>GET /api/next?user=U</code></li>
<li><code>POST /api/label</code> with <code>{\"user\", \"edit_id\", \"label\"}</code></li>
<li><code>GET /api/item/{edit_id}</code></li>
<li><code>GET /api/agreement</code></li>
</ul>
</body></html>
";

/// What an annotator is shown for one edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub edit_id: String,
    pub mode: EditMode,
    pub question: String,
    pub question_type: String,
    /// The answer the annotator is asked to confirm for the edited image.
    pub expected_answer: String,
    pub removed_category: String,
    pub image_url: Option<String>,
    pub mask_url: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Directory written by the inpainting stage: masks at the top level,
    /// edited images under `edited/`.
    pub images_dir: Option<PathBuf>,
    /// Static UI bundle with an `index.html`.
    pub ui_dir: Option<PathBuf>,
    /// Accepted user ids; any id is accepted when `None`.
    pub users: Option<BTreeSet<String>>,
}

struct AppState {
    items: BTreeMap<String, ReviewItem>,
    sample: Vec<String>,
    users: Option<BTreeSet<String>>,
    store: Mutex<LabelStore>,
}

fn find_edited(images_dir: &Path, edit_id: &str) -> Option<String> {
    let dir = images_dir.join("edited");
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .ok()?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| Path::new(n).file_stem().and_then(|s| s.to_str()) == Some(edit_id))
        .collect();
    names.sort();
    names.into_iter().next().map(|n| format!("/images/edited/{n}"))
}

/// Order in which `user` sees the sample: a shuffle seeded by a hash of
/// the user id, so it is stable across restarts and differs between users.
pub fn user_order(user: &str, sample: &[String]) -> Vec<String> {
    let seed: [u8; 32] = Sha256::digest(user.as_bytes()).into();
    let mut order = sample.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::from_seed(seed));
    order
}

/// Builds the router over the sampled edits. Sample ids missing from the
/// manifest are ignored.
pub fn router(manifest: &[EditRecord], sample: &[String], store: LabelStore, options: ServerOptions) -> Router {
    let by_id: BTreeMap<&str, &EditRecord> = manifest.iter().map(|r| (r.edit_id.as_str(), r)).collect();
    let mut items = BTreeMap::new();
    for id in sample {
        let Some(r) = by_id.get(id.as_str()) else { continue };
        let dir = options.images_dir.as_deref();
        items.insert(
            id.clone(),
            ReviewItem {
                edit_id: id.clone(),
                mode: r.mode,
                question: r.question.clone(),
                question_type: r.question_type.clone(),
                expected_answer: r.expected_answer.clone(),
                removed_category: r.target_category.clone(),
                image_url: dir.and_then(|d| find_edited(d, id)),
                mask_url: dir
                    .filter(|d| d.join(format!("{id}.png")).is_file())
                    .map(|_| format!("/images/{id}.png")),
            },
        );
    }
    let state = Arc::new(AppState {
        sample: items.keys().cloned().collect(),
        items,
        users: options.users,
        store: Mutex::new(store),
    });

    let mut app = Router::new()
        .route("/api/next", get(next_item))
        .route("/api/label", post(submit_label))
        .route("/api/agreement", get(agreement))
        .route("/api/item/{edit_id}", get(item))
        .with_state(state);
    if let Some(dir) = options.images_dir {
        app = app.nest_service("/images", ServeDir::new(dir));
    }
    match options.ui_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => app.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    }
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: &'static str,
    message: String,
}

fn fail(status: StatusCode, error: &'static str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ApiError {
            error,
            message: message.into(),
        }),
    )
        .into_response()
}

impl AppState {
    #[allow(clippy::result_large_err)]
    fn check_user(&self, user: Option<&str>) -> Result<String, Response> {
        let user = user.map(str::trim).filter(|u| !u.is_empty());
        let Some(user) = user else {
            return Err(fail(StatusCode::BAD_REQUEST, "usage", "missing user"));
        };
        if self.users.as_ref().is_some_and(|u| !u.contains(user)) {
            return Err(fail(StatusCode::NOT_FOUND, "unknown_user", format!("unknown user {user:?}")));
        }
        Ok(user.to_owned())
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    user: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextResponse {
    pub user: String,
    pub done: bool,
    pub item: Option<ReviewItem>,
    pub progress: Progress,
}

async fn next_item(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let user = match state.check_user(q.user.as_deref()) {
        Ok(u) => u,
        Err(r) => return r,
    };
    let labeled = state
        .store
        .lock()
        .expect("store lock")
        .user_labels(&user)
        .cloned()
        .unwrap_or_default();
    let order = user_order(&user, &state.sample);
    let next = order.iter().find(|id| !labeled.contains_key(*id));
    let progress = Progress {
        labeled: order.iter().filter(|id| labeled.contains_key(*id)).count(),
        total: order.len(),
    };
    Json(NextResponse {
        user,
        done: next.is_none(),
        item: next.map(|id| state.items[id].clone()),
        progress,
    })
    .into_response()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub user: String,
    pub edit_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub stored: LabelRecord,
    pub progress: Progress,
}

async fn submit_label(State(state): State<Arc<AppState>>, Json(req): Json<LabelRequest>) -> Response {
    let user = match state.check_user(Some(&req.user)) {
        Ok(u) => u,
        Err(r) => return r,
    };
    let label: Label = match req.label.parse() {
        Ok(l) => l,
        Err(_) => return fail(StatusCode::BAD_REQUEST, "usage", format!("label must be yes, no or ambiguous, got {:?}", req.label)),
    };
    if !state.items.contains_key(&req.edit_id) {
        return fail(StatusCode::NOT_FOUND, "unknown_item", format!("{} is not in the sample", req.edit_id));
    }
    let mut store = state.store.lock().expect("store lock");
    match store.append(&user, &req.edit_id, label) {
        Ok(stored) => {
            let labeled = store.user_labels(&user).map_or(0, |m| m.keys().filter(|k| state.items.contains_key(*k)).count());
            Json(LabelResponse {
                stored,
                progress: Progress {
                    labeled,
                    total: state.sample.len(),
                },
            })
            .into_response()
        }
        Err(e @ StoreError::Duplicate { .. }) => fail(StatusCode::CONFLICT, "duplicate", e.to_string()),
        Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementResponse {
    /// True when no label has been stored yet.
    pub empty: bool,
    pub report: AgreementReport,
}

async fn agreement(State(state): State<Arc<AppState>>) -> Json<AgreementResponse> {
    let labels = state.store.lock().expect("store lock").labels().clone();
    Json(AgreementResponse {
        empty: labels.values().all(BTreeMap::is_empty),
        report: agreement_stats(&labels),
    })
}

async fn item(State(state): State<Arc<AppState>>, UrlPath(edit_id): UrlPath<String>) -> Response {
    match state.items.get(&edit_id) {
        Some(i) => Json(i.clone()).into_response(),
        None => fail(StatusCode::NOT_FOUND, "unknown_item", format!("{edit_id} is not in the sample")),
    }
}
