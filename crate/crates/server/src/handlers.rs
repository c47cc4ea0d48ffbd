#![allow(clippy::result_large_err)]

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bola_guard::acl_store::{AclError, ObjectId};
use bola_guard::authz::{AuthToken, AuthzDecision, AuthzError, DecisionReason, Permission};
use bola_guard::CrudAction;
use serde_json::{json, Map, Value};

use crate::{AppState, Event, MutationKind, StoredObject, ADMIN_GROUP, PET, USER};

pub const TOKEN_HEADER: &str = "api_key";

fn problem(status: StatusCode, reason: &str) -> Response {
    (status, Json(json!({"code": status.as_u16(), "reason": reason}))).into_response()
}

fn storage_failure(err: impl std::fmt::Display) -> Response {
    log::error!("store failure: {err}");
    problem(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure")
}

fn denial(decision: &AuthzDecision) -> Response {
    let status = match decision.reason {
        DecisionReason::TokenInvalid => StatusCode::UNAUTHORIZED,
        DecisionReason::NoSuchObject => StatusCode::NOT_FOUND,
        _ => StatusCode::FORBIDDEN,
    };
    problem(status, decision.reason.as_str())
}

/// One request's view of the shared state.
struct Ctx {
    state: AppState,
    request: u64,
}

impl Ctx {
    fn new(state: AppState) -> Ctx {
        let request = state.next_request();
        Ctx { state, request }
    }

    fn authenticate(&self, headers: &HeaderMap) -> Result<AuthToken, Response> {
        let raw = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        let token = raw
            .ok_or_else(|| "missing token".to_string())
            .and_then(|raw| self.state.verifier.verify(raw, self.state.clock.now()).map_err(|e| e.to_string()));
        token.map_err(|e| {
            log::debug!("request {}: {e}", self.request);
            self.decided(&AuthzDecision::deny(DecisionReason::TokenInvalid));
            problem(StatusCode::UNAUTHORIZED, DecisionReason::TokenInvalid.as_str())
        })
    }

    fn decided(&self, decision: &AuthzDecision) {
        self.state.events.record(Event::Decision {
            request: self.request,
            allowed: decision.allowed,
            reason: decision.reason.as_str().to_string(),
        });
    }

    fn require(&self, decision: AuthzDecision) -> Result<(), Response> {
        self.decided(&decision);
        if decision.allowed {
            Ok(())
        } else {
            Err(denial(&decision))
        }
    }

    fn mutated(&self, what: MutationKind, path: &str, id: ObjectId) {
        self.state.events.record(Event::Mutation {
            request: self.request,
            what,
            path: path.to_string(),
            id,
        });
    }
}

fn parse_id(raw: &str) -> Result<ObjectId, Response> {
    raw.parse().map_err(|_| problem(StatusCode::BAD_REQUEST, "bad_object_id"))
}

/// A JSON object body; `id` is filled in by the service.
fn parse_body(bytes: &Bytes) -> Result<Map<String, Value>, Response> {
    match serde_json::from_slice(bytes) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(problem(StatusCode::BAD_REQUEST, "bad_body")),
    }
}

fn with_id(mut body: Map<String, Value>, id: ObjectId) -> Value {
    body.insert("id".to_string(), json!(id));
    Value::Object(body)
}

fn flatten(result: Result<Response, Response>) -> Response {
    result.unwrap_or_else(|r| r)
}

async fn create(state: AppState, path: &'static str, headers: HeaderMap, bytes: Bytes) -> Response {
    let ctx = Ctx::new(state);
    flatten((|| {
        let token = ctx.authenticate(&headers)?;
        ctx.require(ctx.state.engine.authorize_create(&token, path))?;
        let body = parse_body(&bytes)?;
        let id = ctx.state.engine.store().allocate_id(path);
        let body = with_id(body, id);
        let object = StoredObject { id, path: path.to_string(), body: body.clone() };
        ctx.state.objects.put(object).map_err(storage_failure)?;
        ctx.mutated(MutationKind::CreateObject, path, id);
        if let Err(e) = ctx.state.engine.record_creation(&token, path, id) {
            let _ = ctx.state.objects.remove(path, id);
            return Err(storage_failure(e));
        }
        ctx.mutated(MutationKind::RecordAce, path, id);
        Ok((StatusCode::CREATED, [(header::LOCATION, format!("{path}/{id}"))], Json(body)).into_response())
    })())
}

async fn read(state: AppState, path: &'static str, headers: HeaderMap, raw_id: String) -> Response {
    let ctx = Ctx::new(state);
    flatten((|| {
        let token = ctx.authenticate(&headers)?;
        let id = parse_id(&raw_id)?;
        ctx.require(ctx.state.engine.authorize_access(&token, path, CrudAction::Read, id))?;
        match ctx.state.objects.get(path, id) {
            Some(obj) => Ok(Json(obj.body).into_response()),
            None => Err(problem(StatusCode::NOT_FOUND, DecisionReason::NoSuchObject.as_str())),
        }
    })())
}

async fn update(state: AppState, path: &'static str, headers: HeaderMap, raw_id: String, bytes: Bytes) -> Response {
    let ctx = Ctx::new(state);
    flatten((|| {
        let token = ctx.authenticate(&headers)?;
        let id = parse_id(&raw_id)?;
        ctx.require(ctx.state.engine.authorize_access(&token, path, CrudAction::Update, id))?;
        if ctx.state.objects.get(path, id).is_none() {
            return Err(problem(StatusCode::NOT_FOUND, DecisionReason::NoSuchObject.as_str()));
        }
        let body = with_id(parse_body(&bytes)?, id);
        let object = StoredObject { id, path: path.to_string(), body: body.clone() };
        ctx.state.objects.put(object).map_err(storage_failure)?;
        ctx.mutated(MutationKind::UpdateObject, path, id);
        Ok(Json(body).into_response())
    })())
}

async fn remove(state: AppState, path: &'static str, headers: HeaderMap, raw_id: String) -> Response {
    let ctx = Ctx::new(state);
    flatten((|| {
        let token = ctx.authenticate(&headers)?;
        let id = parse_id(&raw_id)?;
        ctx.require(ctx.state.engine.authorize_access(&token, path, CrudAction::Delete, id))?;
        let removed = ctx.state.objects.remove(path, id).map_err(storage_failure)?;
        if removed {
            ctx.mutated(MutationKind::DeleteObject, path, id);
        }
        let ace_removed = match ctx.state.engine.store().delete(path, id) {
            Ok(_) => true,
            Err(AclError::NoSuchObject { .. }) => false,
            Err(e) => return Err(storage_failure(AuthzError::Store(e))),
        };
        if ace_removed {
            ctx.mutated(MutationKind::DeleteAce, path, id);
        }
        if removed || ace_removed {
            Ok(StatusCode::NO_CONTENT.into_response())
        } else {
            Err(problem(StatusCode::NOT_FOUND, DecisionReason::NoSuchObject.as_str()))
        }
    })())
}

async fn list(state: AppState, path: &'static str, headers: HeaderMap) -> Response {
    let ctx = Ctx::new(state);
    flatten((|| {
        let token = ctx.authenticate(&headers)?;
        let engine = &ctx.state.engine;
        let (allowed, reason) = match engine.effective_permission(&token, path, CrudAction::Read) {
            Permission::Deny => (false, DecisionReason::NoGroupRule),
            Permission::AllowOwnOnly => (true, DecisionReason::OwnershipGrant),
            Permission::AllowAny => (true, DecisionReason::GroupGrant),
        };
        let decision = AuthzDecision { allowed, reason, matched_rule: None };
        ctx.require(decision)?;
        let visible: Vec<Value> = ctx
            .state
            .objects
            .list_path(path)
            .into_iter()
            .filter(|obj| {
                reason == DecisionReason::GroupGrant
                    || engine.store().get(path, obj.id).is_some_and(|ace| ace.can_read(&token.user_id))
            })
            .map(|obj| obj.body)
            .collect();
        Ok(Json(visible).into_response())
    })())
}

async fn admin_acl(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let ctx = Ctx::new(state);
    flatten((|| {
        let token = ctx.authenticate(&headers)?;
        let reason = if token.in_group(ADMIN_GROUP) {
            DecisionReason::GroupGrant
        } else {
            DecisionReason::NoGroupRule
        };
        ctx.require(AuthzDecision { allowed: reason.is_grant(), reason, matched_rule: None })?;
        Ok(Json(ctx.state.engine.store().list()).into_response())
    })())
}

fn collection(router: Router<AppState>, path: &'static str, with_list: bool) -> Router<AppState> {
    let mut root = post(move |State(s): State<AppState>, h: HeaderMap, b: Bytes| create(s, path, h, b));
    if with_list {
        root = root.get(move |State(s): State<AppState>, h: HeaderMap| list(s, path, h));
    }
    let item = get(move |State(s): State<AppState>, h: HeaderMap, Path(id): Path<String>| read(s, path, h, id))
        .put(move |State(s): State<AppState>, h: HeaderMap, Path(id): Path<String>, b: Bytes| {
            update(s, path, h, id, b)
        })
        .delete(move |State(s): State<AppState>, h: HeaderMap, Path(id): Path<String>| remove(s, path, h, id));
    router.route(path, root).route(&format!("{path}/{{id}}"), item)
}

/// The service's routes: `/pet`, `/pet/{petId}`, `/user`, `/user/{userId}` and `/admin/acl`.
pub fn router(state: AppState) -> Router {
    let router = Router::new();
    let router = collection(router, PET, true);
    let router = collection(router, USER, false);
    router.route("/admin/acl", get(admin_acl)).with_state(state)
}
