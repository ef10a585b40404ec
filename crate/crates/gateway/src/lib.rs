//! HTTP+JSON front of [`DuelService`], the API the experiment UI talks to.
//!
//! | method | path                     | body                          | reply                |
//! |--------|--------------------------|-------------------------------|----------------------|
//! | POST   | `/sessions`              | `{"gender": "M"\|"F"\|"U"}`   | 201, session view    |
//! | GET    | `/sessions/{id}`         |                               | session view         |
//! | GET    | `/sessions/{id}/next`    |                               | profile card or null |
//! | POST   | `/sessions/{id}/ratings` | `{"profile": 17, "value": 8}` | session view         |
//! | GET    | `/sessions/{id}/lists`   |                               | `{list1, list2}`     |
//! | POST   | `/sessions/{id}/choice`  | `{"pick": "list1"\|"list2"}`  | choice outcome       |
//! | GET    | `/tally`                 |                               | tally JSON           |
//! | GET    | `/tally.csv`             |                               | tally CSV            |
//! | GET    | `/log`                   |                               | NDJSON event log     |
//!
//! A session view looks like
//!
//! ```json
//! {"session": "5f0c2a9e41b7d3c6", "phase": "rating", "remaining": 149,
//!  "rated": 1, "target": 150,
//!  "next": {"profile": 412, "asset": "/assets/profiles/412.jpg"},
//!  "lists": null}
//! ```
//!
//! with `phase` one of `rating` (plus `remaining`), `choosing`, `done` or
//! `expired`. Once choosing, `lists` holds `list1` and `list2` as arrays of
//! profile cards in presentation order. Nothing sent before the choice names
//! an algorithm or carries a score; the choice reply reveals the mapping:
//!
//! ```json
//! {"session": "5f0c2a9e41b7d3c6", "picked": "list2", "winner": "Mean",
//!  "list1": "Random", "list2": "Mean"}
//! ```
//!
//! Errors come back as `{"error": "<kind>", "message": "..."}` with status
//! 404 (`unknown_session`), 409 (`wrong_phase`, `out_of_order`),
//! 422 (`invalid_rating`, `pool_too_small`) or 500.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use colfi_core::duel::{write_ndjson, DuelError, DuelService, SessionId, Side};
use colfi_core::{Gender, ProfileId};

#[derive(Debug, Deserialize)]
pub struct StartBody {
    #[serde(default)]
    pub gender: Gender,
}

#[derive(Debug, Deserialize)]
pub struct RatingBody {
    pub profile: ProfileId,
    pub value: i32,
}

#[derive(Debug, Deserialize)]
pub struct ChoiceBody {
    pub pick: Side,
}

#[derive(Debug, Serialize)]
pub struct TallyCell {
    pub winner: String,
    pub loser: String,
    pub wins: u64,
    pub duels: u64,
    pub percent: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TallyView {
    pub total: u64,
    pub algorithms: Vec<String>,
    pub cells: Vec<TallyCell>,
}

/// A [`DuelError`] as an HTTP reply.
pub struct ApiError(StatusCode, &'static str, String);

impl From<DuelError> for ApiError {
    fn from(e: DuelError) -> Self {
        let (status, kind) = match &e {
            DuelError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            DuelError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
            DuelError::OutOfOrder { .. } => (StatusCode::CONFLICT, "out_of_order"),
            DuelError::Rating(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_rating"),
            DuelError::PoolTooSmall { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "pool_too_small"),
            DuelError::InvalidConfig(_) | DuelError::Manager(_) | DuelError::Log(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1, "message": self.2 }))).into_response()
    }
}

fn bad_id(s: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "unknown_session", format!("no session {s:?}"))
}

fn parse_id(s: &str) -> Result<SessionId, ApiError> {
    s.parse().map_err(|_| bad_id(s))
}

type Svc = State<Arc<DuelService>>;
type ApiResult<T> = Result<T, ApiError>;

async fn start(State(svc): Svc, Json(body): Json<StartBody>) -> ApiResult<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(svc.start_session(body.gender)?)))
}

async fn session(State(svc): Svc, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.session(parse_id(&id)?)?))
}

async fn next(State(svc): Svc, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.next_profile(parse_id(&id)?)?))
}

async fn rate(State(svc): Svc, Path(id): Path<String>, Json(body): Json<RatingBody>) -> ApiResult<impl IntoResponse> {
    let id = parse_id(&id)?;
    // the last rating builds both lists, which can take a while
    let view = tokio::task::spawn_blocking(move || svc.submit_rating(id, body.profile, body.value))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(view))
}

async fn lists(State(svc): Svc, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.lists(parse_id(&id)?)?))
}

async fn choose(State(svc): Svc, Path(id): Path<String>, Json(body): Json<ChoiceBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.submit_choice(parse_id(&id)?, body.pick)?))
}

async fn tally(State(svc): Svc) -> Json<TallyView> {
    let t = svc.tally();
    let names = svc.contestants();
    let mut cells = Vec::new();
    for (a, an) in names {
        for (b, bn) in names {
            if a != b {
                cells.push(TallyCell {
                    winner: an.clone(),
                    loser: bn.clone(),
                    wins: t.wins(*a, *b),
                    duels: t.duels(*a, *b),
                    percent: t.percent(*a, *b),
                });
            }
        }
    }
    Json(TallyView {
        total: t.total(),
        algorithms: names.iter().map(|(_, n)| n.clone()).collect(),
        cells,
    })
}

async fn tally_csv(State(svc): Svc) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/csv")], svc.tally().to_csv())
}

async fn log(State(svc): Svc) -> ApiResult<impl IntoResponse> {
    let mut out = Vec::new();
    write_ndjson(&mut out, &svc.events()).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out))
}

pub fn router(svc: Arc<DuelService>) -> Router {
    Router::new()
        .route("/sessions", post(start))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/ratings", post(rate))
        .route("/sessions/{id}/lists", get(lists))
        .route("/sessions/{id}/choice", post(choose))
        .route("/tally", get(tally))
        .route("/tally.csv", get(tally_csv))
        .route("/log", get(log))
        .with_state(svc)
}

/// Serves until `shutdown` resolves, expiring idle sessions every `sweep`.
pub async fn serve(
    listener: TcpListener,
    svc: Arc<DuelService>,
    sweep: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let svc = svc.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(sweep);
            loop {
                tick.tick().await;
                let _ = svc.expire_idle();
            }
        })
    };
    let result = axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}
