#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use gbqa_core::artifacts::ArtifactStore;
use gbqa_core::calendar::days_in_month;
use gbqa_core::epw::{serialize_epw, EpwHeader, Field, HourlyRecord, Timestamp, WeatherSeries};
use gbqa_core::llm::{AssistantReply, ChatClient, LlmError, Role, ScriptStep, ScriptedChat};
use gbqa_core::orchestrator::{Orchestrator, OrchestratorConfig};
use gbqa_core::retrieval::OfflineEmbedder;
use gbqa_core::session::SessionStore;
use gbqa_core::tools::KnowledgeBase;
use gbqa_gateway::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const UI_ORIGIN: &str = "http://localhost:5173";
pub const TEST_UPLOAD_CAP: usize = 4 * 1024 * 1024;
pub const MARCH_PROMPT: &str = "Please visualize the daily temperature conditions for March in New York.";
pub const NY_FILE: &str = "USA_NY_New.York-Central.Park.epw";

/// A full non-leap year of hourly records with dry-bulb from `f(month, day, hour)`.
pub fn synthetic_year(station: &str, f: impl Fn(u8, u8, u8) -> f64) -> WeatherSeries {
    let mut records = Vec::with_capacity(8760);
    for m in 1..=12 {
        for d in 1..=days_in_month(m, false) {
            for h in 0..24 {
                let t = f(m, d, h);
                records.push(
                    HourlyRecord::new(2001, Timestamp::new(m, d, h))
                        .with(Field::DryBulbTemperature, t)
                        .with(Field::RelativeHumidity, 65.0)
                        .with(Field::WindSpeed, 4.1),
                );
            }
        }
    }
    WeatherSeries::new(EpwHeader::new(station, "USA", 40.78, -73.97, -5.0, 40.0), records).unwrap()
}

/// New York-like temperatures: annual swing around 12.9 °C, coldest late
/// January, daily swing peaking mid-afternoon.
pub fn new_york_epw() -> Vec<u8> {
    let series = synthetic_year("New York Central Park", |m, d, h| {
        let doy: u32 = (1..m).map(|k| days_in_month(k, false) as u32).sum::<u32>() + d as u32;
        let season = -12.0 * (2.0 * std::f64::consts::PI * (doy as f64 + 10.0) / 365.0).cos();
        let daily = 4.0 * (2.0 * std::f64::consts::PI * (h as f64 - 9.0) / 24.0).sin();
        ((12.9 + season + daily) * 10.0).round() / 10.0
    });
    serialize_epw(&series).unwrap()
}

pub struct TestApp {
    pub router: Router,
    pub state: Arc<AppState>,
    _dir: tempfile::TempDir,
}

impl TestApp {
    pub fn new(llm: Arc<dyn ChatClient>) -> Self {
        Self::with_knowledge(llm, KnowledgeBase::empty(Arc::new(OfflineEmbedder)))
    }

    pub fn with_knowledge(llm: Arc<dyn ChatClient>, knowledge: KnowledgeBase) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = OrchestratorConfig { max_upload_bytes: TEST_UPLOAD_CAP, ..OrchestratorConfig::default() };
        let kb = Arc::new(knowledge);
        let artifacts = ArtifactStore::open(dir.path().join("artifacts")).unwrap();
        let orchestrator = Orchestrator::new(llm, kb, artifacts, config);
        let sessions = SessionStore::new(dir.path().join("uploads"), Duration::from_secs(7200));
        let state = AppState::new(sessions, orchestrator);
        let router = router(state.clone(), &[UI_ORIGIN.to_string()]);
        TestApp { router, state, _dir: dir }
    }

    pub fn scripted(llm: &ScriptedChat) -> Self {
        Self::new(Arc::new(llm.clone()))
    }

    pub async fn send(&self, req: Request<Body>) -> Reply {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.into_body().collect().await.unwrap().to_bytes();
        Reply { status, headers, body }
    }

    pub async fn new_session(&self) -> String {
        let r = self.send(post_json("/api/session", json!({}))).await;
        assert_eq!(r.status, StatusCode::OK);
        r.json()["session_id"].as_str().unwrap().to_string()
    }

    pub async fn upload(&self, session_id: &str, files: &[(&str, &[u8])]) -> Reply {
        let mut parts: Vec<Part> = vec![Part::text("session_id", session_id)];
        parts.extend(files.iter().map(|(name, bytes)| Part::file(name, bytes)));
        self.send(multipart("/api/upload", &parts)).await
    }

    pub async fn chat(&self, session_id: &str, text: &str, file_refs: &[&str]) -> Reply {
        self.send(post_json("/api/chat", json!({"session_id": session_id, "text": text, "file_refs": file_refs})))
            .await
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {:?}", self.body))
    }

    pub fn expect(&self, status: StatusCode) -> Result<&Self, String> {
        if self.status == status {
            Ok(self)
        } else {
            Err(format!("expected {status}, got {} with {}", self.status, String::from_utf8_lossy(&self.body)))
        }
    }

    /// Checks the status and the error body's code.
    pub fn expect_error(&self, status: StatusCode, code: &str) -> Result<(), String> {
        self.expect(status)?;
        let body = self.json();
        if body["code"] == code && body["message"].is_string() {
            Ok(())
        } else {
            Err(format!("expected error code {code}, got {body}"))
        }
    }
}

pub fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

pub struct Part {
    name: String,
    file_name: Option<String>,
    bytes: Vec<u8>,
}

impl Part {
    pub fn text(name: &str, value: &str) -> Self {
        Part { name: name.into(), file_name: None, bytes: value.as_bytes().to_vec() }
    }

    pub fn file(file_name: &str, bytes: &[u8]) -> Self {
        Part { name: "files".into(), file_name: Some(file_name.into()), bytes: bytes.to_vec() }
    }
}

pub fn multipart(uri: &str, parts: &[Part]) -> Request<Body> {
    let boundary = "gbqa-test-boundary-7d1c";
    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        match &p.file_name {
            Some(f) => body.extend_from_slice(
                format!(
                    "Content-Disposition: form-data; name=\"{}\"; filename=\"{f}\"\r\nContent-Type: application/octet-stream\r\n\r\n",
                    p.name
                )
                .as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{}\"\r\n\r\n", p.name).as_bytes()),
        }
        body.extend_from_slice(&p.bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    Request::post(uri)
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

pub fn preflight(uri: &str, origin: &str, method: &str) -> Request<Body> {
    Request::builder()
        .method(Method::OPTIONS)
        .uri(uri)
        .header(header::ORIGIN, origin)
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, method)
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap()
}

/// The tool call from the March scenario, with the exact published parameters.
pub fn march_call(file_name: &str) -> AssistantReply {
    AssistantReply::call(
        "call_march",
        "visualize_weather_data",
        json!({
            "file_name": file_name,
            "time_step": "daily",
            "time_periods": "DATE:3/1-3/31",
            "data_type": "dry_bulb_temperature"
        }),
    )
}

/// A model reply that names every artifact attached to the latest tool results.
pub fn describe_artifacts() -> ScriptStep {
    ScriptStep::Compute(Box::new(|req| {
        let ids: Vec<String> = req
            .messages
            .iter()
            .rev()
            .take_while(|m| m.role == Role::Tool)
            .flat_map(|m| m.attachments.clone())
            .collect();
        AssistantReply::text(format!("March in New York warms steadily; see the daily chart {}.", ids.join(", ")))
    }))
}

type Check = Result<(), String>;

fn ensure(cond: bool, what: impl Into<String>) -> Check {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

pub async fn session_create() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    let a = app.send(post_json("/api/session", json!({}))).await;
    a.expect(StatusCode::OK)?;
    let b = app.send(Request::post("/api/session").body(Body::from("{not json")).unwrap()).await;
    b.expect(StatusCode::OK)?;
    let (a, b) = (a.json(), b.json());
    ensure(a["session_id"].is_string() && a["session_id"] != b["session_id"], "session ids must be distinct")
}

pub async fn upload_single_and_mixed() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    let id = app.new_session().await;
    let r = app.upload(&id, &[(NY_FILE, &new_york_epw())]).await;
    r.expect(StatusCode::OK)?;
    ensure(r.json()["stored"] == json!([NY_FILE]), format!("stored list {}", r.json()))?;
    let r = app
        .upload(&id, &[("site.jpg", b"\xff\xd8\xff"), ("brief.txt", b"net zero school"), ("data.json", b"{}")])
        .await;
    r.expect(StatusCode::OK)?;
    ensure(r.json()["stored"].as_array().map(Vec::len) == Some(3), format!("stored list {}", r.json()))?;
    // session id as a query parameter also works
    let r = app.send(multipart(&format!("/api/upload?session_id={id}"), &[Part::file("plan.png", b"png")])).await;
    r.expect(StatusCode::OK).map(|_| ())
}

pub async fn upload_allow_list() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    let id = app.new_session().await;
    for ext in ["epw", "jpeg", "jpg", "png", "txt", "json", "pdf", "docx"] {
        app.upload(&id, &[(&format!("f.{ext}"), b"x")]).await.expect(StatusCode::OK)?;
    }
    app.upload(&id, &[("setup.exe", b"MZ")]).await.expect_error(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_type")?;
    app.upload(&id, &[("noext", b"x")]).await.expect_error(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_type")?;
    // a rejected batch stores nothing
    app.upload(&id, &[("ok.txt", b"x"), ("bad.sh", b"x")]).await.expect(StatusCode::UNSUPPORTED_MEDIA_TYPE)?;
    let guard = app.state.sessions.acquire(&id).map_err(|e| e.to_string())?;
    ensure(!guard.uploaded_files.contains_key("ok.txt"), "partial batch was stored")
}

pub async fn upload_too_large() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    let id = app.new_session().await;
    let big = vec![b'a'; TEST_UPLOAD_CAP + 1];
    app.upload(&id, &[("big.txt", &big)]).await.expect_error(StatusCode::PAYLOAD_TOO_LARGE, "too_large")?;
    let fits = vec![b'a'; TEST_UPLOAD_CAP];
    app.upload(&id, &[("fits.txt", &fits)]).await.expect(StatusCode::OK).map(|_| ())
}

pub async fn upload_unknown_session() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    app.upload("0123456789abcdef", &[("a.epw", b"x")]).await.expect_error(StatusCode::NOT_FOUND, "unknown_session")?;
    let r = app.send(multipart("/api/upload", &[Part::file("a.epw", b"x")])).await;
    r.expect_error(StatusCode::BAD_REQUEST, "bad_request")
}

pub async fn upload_path_safety() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    let id = app.new_session().await;
    let r = app.upload(&id, &[("../../../etc/evil.txt", b"x")]).await;
    r.expect(StatusCode::OK)?;
    ensure(r.json()["stored"] == json!(["evil.txt"]), format!("stored {}", r.json()))?;
    let guard = app.state.sessions.acquire(&id).map_err(|e| e.to_string())?;
    let path = guard.uploaded_files["evil.txt"].clone();
    ensure(path.starts_with(guard.upload_dir()), format!("{} escaped the session area", path.display()))
}

pub async fn chat_text_turn() -> Check {
    let llm = ScriptedChat::new([AssistantReply::text("South-facing glazing with overhangs.")]);
    let app = TestApp::scripted(&llm);
    let id = app.new_session().await;
    let r = app.chat(&id, "How should I orient the windows?", &[]).await;
    r.expect(StatusCode::OK)?;
    let body = r.json();
    ensure(body["text"] == "South-facing glazing with overhangs." && body["artifacts"] == json!([]), body.to_string())
}

pub async fn chat_errors() -> Check {
    let llm = ScriptedChat::new([ScriptStep::Fail(LlmError::Upstream("connection reset".into()))]);
    let app = TestApp::scripted(&llm);
    let id = app.new_session().await;
    app.chat("ffffffffffffffffffffffffffffffff", "hi", &[]).await.expect_error(StatusCode::NOT_FOUND, "unknown_session")?;
    app.chat(&id, "plot it", &["missing.epw"]).await.expect_error(StatusCode::BAD_REQUEST, "file_not_found")?;
    app.send(post_json("/api/chat", json!({"text": "no session"}))).await.expect_error(StatusCode::BAD_REQUEST, "bad_request")?;
    {
        let _held = app.state.sessions.acquire(&id).map_err(|e| e.to_string())?;
        app.chat(&id, "hi", &[]).await.expect_error(StatusCode::CONFLICT, "busy")?;
    }
    app.chat(&id, "hi", &[]).await.expect_error(StatusCode::BAD_GATEWAY, "upstream_error")?;
    ensure(llm.call_count() == 1, "only the last request should reach the model")
}

pub async fn chat_tool_failures_map_to_502() -> Check {
    let looping = ScriptedChat::repeating(AssistantReply::call("c", "query_green_building_knowledge", json!({"query": "x"})));
    let app = TestApp::scripted(&looping);
    let id = app.new_session().await;
    app.chat(&id, "loop", &[]).await.expect_error(StatusCode::BAD_GATEWAY, "tool_rounds_exceeded")?;

    let bad = AssistantReply::call("c", "visualize_weather_data", json!({"file_name": 7}));
    let app = TestApp::scripted(&ScriptedChat::new([bad.clone(), bad]));
    let id = app.new_session().await;
    app.chat(&id, "chart", &[]).await.expect_error(StatusCode::BAD_GATEWAY, "tool_validation_failed")
}

/// Upload in one request, chart in a later one, then fetch the artifact.
pub async fn chart_turn_and_artifact() -> Check {
    let llm = ScriptedChat::new([march_call(NY_FILE).into(), describe_artifacts()]);
    let app = TestApp::scripted(&llm);
    let id = app.new_session().await;
    app.upload(&id, &[(NY_FILE, &new_york_epw())]).await.expect(StatusCode::OK)?;
    let r = app.chat(&id, MARCH_PROMPT, &[NY_FILE]).await;
    r.expect(StatusCode::OK)?;
    let body = r.json();
    let artifacts = body["artifacts"].as_array().cloned().unwrap_or_default();
    ensure(artifacts.len() == 1, format!("expected 1 artifact, got {body}"))?;
    let art = &artifacts[0];
    let url = art["url"].as_str().unwrap_or_default();
    ensure(art["media_type"] == "image/svg+xml", format!("media type {}", art["media_type"]))?;
    ensure(body["text"].as_str().unwrap_or_default().contains(art["artifact_id"].as_str().unwrap_or("?")), "reply does not reference the chart")?;

    let first = app.send(Request::get(url).body(Body::empty()).unwrap()).await;
    first.expect(StatusCode::OK)?;
    ensure(first.headers[header::CONTENT_TYPE] == "image/svg+xml", "artifact content type")?;
    let second = app.send(Request::get(url).body(Body::empty()).unwrap()).await;
    ensure(first.body == second.body, "artifact bytes changed between fetches")?;
    let svg = String::from_utf8_lossy(&first.body);
    ensure(svg.matches("class=\"point\"").count() == 31, "chart should have 31 daily points")
}

pub async fn artifact_unknown() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    for id in ["0123456789abcdef0123456789abcdef", "..%2F..%2Fetc%2Fpasswd"] {
        app.send(Request::get(format!("/api/artifacts/{id}")).body(Body::empty()).unwrap())
            .await
            .expect_error(StatusCode::NOT_FOUND, "artifact_not_found")?;
    }
    Ok(())
}

pub async fn cors_preflight() -> Check {
    let app = TestApp::scripted(&ScriptedChat::default());
    for (uri, method) in [
        ("/api/session", "POST"),
        ("/api/chat", "POST"),
        ("/api/upload", "POST"),
        ("/api/artifacts/abc", "GET"),
    ] {
        let r = app.send(preflight(uri, UI_ORIGIN, method)).await;
        ensure(r.status.is_success(), format!("preflight {uri}: {}", r.status))?;
        ensure(
            r.headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_some_and(|v| v == UI_ORIGIN),
            format!("preflight {uri}: missing allow-origin"),
        )?;
        let methods = r.headers.get(header::ACCESS_CONTROL_ALLOW_METHODS).map(|v| v.to_str().unwrap_or_default().to_string());
        ensure(methods.is_some_and(|m| m.contains(method)), format!("preflight {uri}: {method} not allowed"))?;
    }
    let foreign = app.send(preflight("/api/chat", "http://evil.example", "POST")).await;
    ensure(foreign.headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none(), "foreign origin was allowed")?;
    let mut simple = post_json("/api/session", json!({}));
    simple.headers_mut().insert(header::ORIGIN, UI_ORIGIN.parse().unwrap());
    let r = app.send(simple).await;
    ensure(r.headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_some_and(|v| v == UI_ORIGIN), "simple request lacks allow-origin")
}

/// Every gateway contract check, by name.
pub async fn gateway_contract() -> Vec<(&'static str, Check)> {
    vec![
        ("POST /api/session", session_create().await),
        ("POST /api/upload single + mixed", upload_single_and_mixed().await),
        ("POST /api/upload allow-list / 415", upload_allow_list().await),
        ("POST /api/upload 413", upload_too_large().await),
        ("POST /api/upload 404 / 400", upload_unknown_session().await),
        ("POST /api/upload path safety", upload_path_safety().await),
        ("POST /api/chat text turn", chat_text_turn().await),
        ("POST /api/chat 404 / 400 / 409 / 502", chat_errors().await),
        ("POST /api/chat tool failures 502", chat_tool_failures_map_to_502().await),
        ("chart turn + GET /api/artifacts", chart_turn_and_artifact().await),
        ("GET /api/artifacts 404", artifact_unknown().await),
        ("CORS preflight", cors_preflight().await),
    ]
}
