//! HTTP prediction service over a swappable model snapshot.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use turnaround_core::features::{
    base_features, FeatureSchema, FeatureToggles, FeatureValue, HolidayCalendar, Tz, DEFAULT_TIMEZONE,
};
use turnaround_core::gbdt::{feature_importance, load_model, GbdtModel};
use turnaround_core::persist::EnvelopeMeta;
use turnaround_core::portcall::{add_hours, parse_timestamp, CargoOperation, PortCall};

/// Raw inputs of one port call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(default)]
    pub call_id: Option<String>,
    #[serde(default)]
    pub vessel_id: Option<String>,
    pub arrival: DateTime<Utc>,
    #[serde(default)]
    pub unload: Option<CargoOperation>,
    #[serde(default)]
    pub load: Option<CargoOperation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn label(obj: &Map<String, Value>, side: &str, key: &str, errors: &mut Vec<FieldError>) -> Option<String> {
    match obj.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if !s.is_empty() && s.trim() == s => Some(s.clone()),
        Some(Value::String(_)) => {
            errors.push(FieldError::new(format!("{side}.{key}"), "must be non-empty without surrounding spaces"));
            None
        }
        Some(_) => {
            errors.push(FieldError::new(format!("{side}.{key}"), "expected a string"));
            None
        }
    }
}

fn operation(v: Option<&Value>, side: &str, errors: &mut Vec<FieldError>) -> Option<CargoOperation> {
    let obj = match v {
        None | Some(Value::Null) => return None,
        Some(Value::Object(o)) => o,
        Some(_) => {
            errors.push(FieldError::new(side, "expected an object or null"));
            return None;
        }
    };
    let tonnage = match obj.get("tonnage") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => match n.as_f64() {
            Some(t) if t.is_finite() && t >= 0.0 => Some(t),
            _ => {
                errors.push(FieldError::new(format!("{side}.tonnage"), "must be a non-negative number"));
                None
            }
        },
        Some(_) => {
            errors.push(FieldError::new(format!("{side}.tonnage"), "expected a number"));
            None
        }
    };
    let op = CargoOperation {
        cargo_type: label(obj, side, "cargo_type", errors),
        fiscal_cargo_type: label(obj, side, "fiscal_cargo_type", errors),
        tonnage,
        berth: label(obj, side, "berth", errors),
    };
    (!op.is_empty()).then_some(op)
}

impl PredictRequest {
    /// Parses a JSON body, collecting one message per offending field.
    pub fn from_json(body: &[u8]) -> Result<Self, Vec<FieldError>> {
        let value: Value =
            serde_json::from_slice(body).map_err(|e| vec![FieldError::new("body", format!("invalid JSON: {e}"))])?;
        let Value::Object(obj) = value else {
            return Err(vec![FieldError::new("body", "expected a JSON object")]);
        };
        let mut errors = Vec::new();
        let arrival = match obj.get("arrival") {
            None | Some(Value::Null) => {
                errors.push(FieldError::new("arrival", "required"));
                None
            }
            Some(Value::String(s)) => {
                let t = parse_timestamp(s);
                if t.is_none() {
                    errors.push(FieldError::new("arrival", format!("not a UTC timestamp: {s:?}")));
                }
                t
            }
            Some(_) => {
                errors.push(FieldError::new("arrival", "expected a timestamp string"));
                None
            }
        };
        let text = |key: &str, errors: &mut Vec<FieldError>| match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                errors.push(FieldError::new(key, "expected a string"));
                None
            }
        };
        let call_id = text("call_id", &mut errors);
        let vessel_id = text("vessel_id", &mut errors);
        let unload = operation(obj.get("unload"), "unload", &mut errors);
        let load = operation(obj.get("load"), "load", &mut errors);
        match arrival {
            Some(arrival) if errors.is_empty() => Ok(Self {
                call_id,
                vessel_id,
                arrival,
                unload,
                load,
            }),
            _ => Err(errors),
        }
    }

    pub fn to_call(&self) -> PortCall {
        PortCall {
            call_id: self.call_id.clone().unwrap_or_else(|| "request".into()),
            vessel_id: self.vessel_id.clone().unwrap_or_default(),
            arrival: Some(self.arrival),
            departure: None,
            unload: self.unload.clone(),
            load: self.load.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEcho {
    pub name: String,
    pub value: FeatureValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predicted_turnaround_hours: f64,
    pub etd: DateTime<Utc>,
    pub model_version: String,
    pub features: Vec<FeatureEcho>,
}

/// A loaded model with the calendar it was trained against.
#[derive(Debug)]
pub struct Snapshot {
    pub model: GbdtModel,
    pub calendar: HolidayCalendar,
    pub meta: EnvelopeMeta,
    pub version: String,
    pub tz: Tz,
}

impl Snapshot {
    pub fn new(model: GbdtModel, calendar: HolidayCalendar, meta: EnvelopeMeta, tz: Tz) -> Result<Self, String> {
        let base = FeatureSchema::for_toggles(&FeatureToggles::default());
        if model.schema != base {
            return Err("model uses optional feature families; the service serves base-feature models only".into());
        }
        let version = meta.sha256.chars().take(12).collect();
        Ok(Self {
            model,
            calendar,
            meta,
            version,
            tz,
        })
    }

    pub fn load(model_path: &Path, calendar_path: Option<&Path>, tz: Tz) -> Result<Self, String> {
        let (model, meta) = load_model(model_path).map_err(|e| format!("{}: {e}", model_path.display()))?;
        let calendar = match calendar_path {
            Some(p) => HolidayCalendar::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
            None => HolidayCalendar::default(),
        };
        Self::new(model, calendar, meta, tz)
    }
}

/// Same feature code path as batch training, then ETD = arrival + prediction.
pub fn handle_predict(request: &PredictRequest, snapshot: &Snapshot) -> Result<PredictResponse, String> {
    let call = request.to_call();
    let row = base_features(&call, &snapshot.calendar, snapshot.tz).map_err(|e| e.to_string())?;
    let hours = snapshot
        .model
        .predict(&row)
        .map_err(|e| e.to_string())?
        .value();
    let features = snapshot
        .model
        .schema
        .names()
        .zip(row)
        .map(|(name, value)| FeatureEcho {
            name: name.to_string(),
            value,
        })
        .collect();
    Ok(PredictResponse {
        predicted_turnaround_hours: hours,
        etd: add_hours(request.arrival, hours),
        model_version: snapshot.version.clone(),
        features,
    })
}

#[derive(Debug, Clone, Default)]
struct Sources {
    model: Option<PathBuf>,
    calendar: Option<PathBuf>,
}

/// Shared service state. The snapshot is swapped as a whole; each request
/// clones the `Arc` once and works on that version throughout.
#[derive(Debug)]
pub struct AppState {
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    last_error: RwLock<Option<String>>,
    sources: RwLock<Sources>,
    tz: Tz,
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(DEFAULT_TIMEZONE)
    }
}

impl AppState {
    pub fn new(tz: Tz) -> Self {
        Self {
            snapshot: RwLock::new(None),
            last_error: RwLock::new(None),
            sources: RwLock::new(Sources::default()),
            tz,
        }
    }

    pub fn current(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn install(&self, snapshot: Snapshot) -> String {
        let version = snapshot.version.clone();
        *self.snapshot.write().expect("snapshot lock") = Some(Arc::new(snapshot));
        version
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.read().expect("error lock").clone()
    }

    /// Loads and swaps in a new snapshot. On failure the current snapshot
    /// stays in place and the error is kept for `/model/info`.
    pub fn load(&self, model: &Path, calendar: Option<&Path>) -> Result<String, String> {
        match Snapshot::load(model, calendar, self.tz) {
            Ok(s) => {
                let version = self.install(s);
                *self.sources.write().expect("sources lock") = Sources {
                    model: Some(model.to_path_buf()),
                    calendar: calendar.map(Path::to_path_buf),
                };
                *self.last_error.write().expect("error lock") = None;
                tracing::info!(%version, model = %model.display(), "model loaded");
                Ok(version)
            }
            Err(e) => {
                tracing::error!(error = %e, "model load failed; keeping previous snapshot");
                *self.last_error.write().expect("error lock") = Some(e.clone());
                Err(e)
            }
        }
    }
}

fn error_body(status: StatusCode, message: &str, fields: &[FieldError]) -> Response {
    (status, Json(json!({ "error": message, "fields": fields }))).into_response()
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(snapshot) = state.current() else {
        return error_body(StatusCode::SERVICE_UNAVAILABLE, "no model loaded", &[]);
    };
    let request = match PredictRequest::from_json(&body) {
        Ok(r) => r,
        Err(fields) => return error_body(StatusCode::BAD_REQUEST, "invalid request", &fields),
    };
    match handle_predict(&request, &snapshot) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, &e, &[]),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_loaded": state.current().is_some() }))
}

async fn model_info(State(state): State<Arc<AppState>>) -> Response {
    let last_error = state.last_error();
    let Some(s) = state.current() else {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "no model loaded", "last_error": last_error })),
        )
            .into_response();
    };
    let importance: Vec<Value> = feature_importance(&s.model)
        .into_iter()
        .map(|(name, v)| json!({ "feature": name, "importance": v }))
        .collect();
    Json(json!({
        "version": s.version,
        "sha256": s.meta.sha256,
        "format": s.meta.format,
        "format_version": s.meta.version,
        "created_at": s.meta.created_at,
        "n_trees": s.model.trees.len(),
        "schema": s.model.schema.columns(),
        "feature_importance": importance,
        "last_error": last_error,
    }))
    .into_response()
}

#[derive(Debug, Default, Deserialize)]
struct ReloadRequest {
    model: Option<PathBuf>,
    calendar: Option<PathBuf>,
}

async fn reload(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ReloadRequest = if body.is_empty() {
        ReloadRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error_body(StatusCode::BAD_REQUEST, &format!("invalid JSON: {e}"), &[]),
        }
    };
    let current = state.sources.read().expect("sources lock").clone();
    let Some(model) = req.model.or(current.model) else {
        return error_body(StatusCode::BAD_REQUEST, "no model path given", &[FieldError::new("model", "required")]);
    };
    let calendar = req.calendar.or(current.calendar);
    let st = state.clone();
    let outcome = tokio::task::spawn_blocking(move || st.load(&model, calendar.as_deref())).await;
    match outcome {
        Ok(Ok(version)) => Json(json!({ "version": version })).into_response(),
        Ok(Err(e)) => error_body(StatusCode::UNPROCESSABLE_ENTITY, &e, &[]),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string(), &[]),
    }
}

async fn admin_status(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "version": state.current().map(|s| s.version.clone()),
        "last_error": state.last_error(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/health", get(health))
        .route("/model/info", get(model_info))
        .route("/admin/reload", post(reload))
        .route("/admin/status", get(admin_status))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
