use std::net::SocketAddr;
use std::process::Command;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tempocurate::service::{self, Config, NOW_HEADER};
use tempocurate_core::Database;
use tempocurate_testkit::fixtures::{F1_U1, F1_U2, F2_U2};
use tower::ServiceExt;

fn app(test_mode: bool) -> Router {
    service::router(Database::open_in_memory().unwrap(), Config { test_mode, ui_dir: None })
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn json_call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (s, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn csv(file: &str, release: &str, body: &str) -> Request<Body> {
    Request::post(format!("/uploads?file_id={file}&release_date={release}"))
        .header("content-type", "text/csv")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn post_json(uri: &str, body: Value, now: Option<&str>) -> Request<Body> {
    let mut b = Request::post(uri).header("content-type", "application/json");
    if let Some(n) = now {
        b = b.header(NOW_HEADER, n);
    }
    b.body(Body::from(body.to_string())).unwrap()
}

async fn seeded() -> Router {
    let app = app(true);
    assert_eq!(call(&app, csv("U1", "2020-04-29", F1_U1)).await.0, StatusCode::OK);
    assert_eq!(call(&app, csv("U2", "2020-05-06", F1_U2)).await.0, StatusCode::OK);
    app
}

#[tokio::test]
async fn health_and_ui() {
    let app = app(false);
    let (s, v) = json_call(&app, get("/health")).await;
    assert_eq!((s, v), (StatusCode::OK, json!({ "status": "ok" })));
    let (s, body) = call(&app, get("/ui")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8_lossy(&body).contains("<!doctype html>"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>curate</h1>").unwrap();
    let app = service::router(
        Database::open_in_memory().unwrap(),
        Config {
            test_mode: false,
            ui_dir: Some(dir.path().to_path_buf()),
        },
    );
    let (s, body) = call(&app, get("/ui/index.html")).await;
    assert_eq!((s, body), (StatusCode::OK, b"<h1>curate</h1>".to_vec()));
}

#[tokio::test]
async fn f1_over_http() {
    let app = app(true);
    let (s, v) = json_call(&app, csv("U1", "2020-04-29", F1_U1)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["new_cells"].as_array().unwrap().len(), v["proposals"].as_array().unwrap().len()), (5, 0));

    // Multipart upload of U2.
    let boundary = "XBOUNDARYX";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"u2.csv\"\r\nContent-Type: text/csv\r\n\r\n{F1_U2}\r\n--{boundary}--\r\n"
    );
    let req = Request::post("/uploads?file_id=U2&release_date=2020-05-06")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (s, v) = json_call(&app, req).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["proposals"].as_array().unwrap().len(), 4);

    let (_, groups) = json_call(&app, get("/updates?status=pending&group=week")).await;
    assert_eq!(groups["groups"].as_array().unwrap().len(), 1);
    assert_eq!(groups["groups"][0]["proposals"].as_array().unwrap().len(), 4);

    let (s, _) = json_call(&app, post_json("/updates/accept", json!({ "ids": [1, 2, 3], "effective": "2020-05-06" }), None)).await;
    assert_eq!(s, StatusCode::OK);
    let (s, h) = json_call(&app, get("/cells/2020-04-20/Sex/Female/history")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["versions"].as_array().unwrap().len(), 2);

    let (s, v) = json_call(&app, get("/cells/2020-04-21/Sex/Female/history")).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_request")), "week must be a Monday");
    let (s, v) = json_call(&app, get("/cells/2020-04-20/Sex/Nobody/history")).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_cell")));
    let (s, v) = json_call(&app, get("/cells/2020-04-27/Sex/Female/history")).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_cell")));
}

#[tokio::test]
async fn failed_decisions_change_nothing() {
    let app = seeded().await;
    json_call(&app, post_json("/updates/reject", json!({ "ids": [4] }), None)).await;
    let before = (call(&app, get("/updates?status=pending")).await, call(&app, get("/snapshot?asof=2020-06-01")).await);
    let (s, v) = json_call(&app, post_json("/updates/accept", json!({ "ids": [1, 4] }), None)).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("not_pending")));
    let (s, _) = json_call(&app, post_json("/updates/accept", json!({ "ids": [1, 99] }), None)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let after = (call(&app, get("/updates?status=pending")).await, call(&app, get("/snapshot?asof=2020-06-01")).await);
    assert_eq!(before, after);
}

#[tokio::test]
async fn uploads_are_idempotent_by_file_id() {
    let app = app(false);
    let first = call(&app, csv("U1", "2020-04-29", F1_U1)).await;
    assert_eq!(call(&app, csv("U1", "2020-04-29", F1_U1)).await, first);
    let (s, v) = json_call(&app, csv("U1", "2020-04-29", F1_U2)).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("duplicate_upload")));
    let (s, v) = json_call(&app, csv("U0", "2020-04-01", F1_U1)).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("release_out_of_order")));
    let (s, v) = json_call(&app, csv("U9", "2020-05-06", "nonsense")).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_csv")));
    let (_, v) = json_call(&app, get("/uploads")).await;
    assert_eq!(v["uploads"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn f2_violation_surfaces_in_report() {
    let app = app(false);
    call(&app, csv("U1", "2020-04-29", F1_U1)).await;
    let (_, v) = json_call(&app, csv("U2", "2020-05-06", F2_U2)).await;
    assert_eq!(
        v["violations"],
        json!([{ "week": "2020-04-20", "dimension": "Sex", "reported_total": 28, "computed_sum": 29 }])
    );
}

#[tokio::test]
async fn correlation_errors_are_422() {
    let app = seeded().await;
    json_call(&app, post_json("/updates/accept", json!({ "ids": [1, 2, 3] }), None)).await;
    let (s, v) = json_call(&app, get("/provenance/correlation?a_dim=Sex&a_sub=Male&b_dim=Total&b_sub=All")).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("undefined_correlation")));
    let (s, v) = json_call(&app, get("/provenance/correlation?a_dim=Sex&a_sub=Female&b_dim=Total&b_sub=All")).await;
    assert_eq!((s, v["correlation"].as_f64()), (StatusCode::OK, Some(1.0)));
}

fn request_log() -> Vec<(&'static str, &'static str, String, Option<&'static str>)> {
    vec![
        ("POST", "/uploads?file_id=U1&release_date=2020-04-29", F1_U1.to_string(), None),
        ("POST", "/uploads?file_id=U2&release_date=2020-05-06", F1_U2.to_string(), None),
        ("GET", "/updates?group=week", String::new(), None),
        ("POST", "/updates/accept", r#"{"ids":[1,2,3]}"#.into(), Some("2020-05-07T10:00:00Z")),
        ("POST", "/updates/reject", r#"{"ids":[4]}"#.into(), Some("2020-05-07T10:05:00Z")),
        ("POST", "/updates/reject", r#"{"ids":[4]}"#.into(), Some("2020-05-07T10:06:00Z")),
        ("GET", "/provenance/rejected", String::new(), None),
        ("GET", "/updates?status=accepted", String::new(), None),
        ("GET", "/snapshot?asof=2020-05-06", String::new(), None),
        ("GET", "/provenance/most-updated?dimension=HealthBoard", String::new(), None),
    ]
}

async fn replay(app: &Router) -> Vec<(StatusCode, Vec<u8>)> {
    let mut out = Vec::new();
    for (method, uri, body, now) in request_log() {
        let mut b = Request::builder().method(method).uri(uri);
        if let Some(n) = now {
            b = b.header(NOW_HEADER, n);
        }
        out.push(call(app, b.body(Body::from(body)).unwrap()).await);
    }
    out
}

#[tokio::test]
async fn replay_is_byte_identical() {
    let a = replay(&app(true)).await;
    let b = replay(&app(true)).await;
    assert_eq!(a, b);
    let decided: Value = serde_json::from_slice(&a[6].1).unwrap();
    assert_eq!(decided["rejected"][0]["decided_at"], "2020-05-07T10:05:00Z");
}

#[tokio::test]
async fn clock_header_ignored_outside_test_mode() {
    let app = app(false);
    call(&app, csv("U1", "2020-04-29", F1_U1)).await;
    call(&app, csv("U2", "2020-05-06", F1_U2)).await;
    let (_, v) = json_call(&app, post_json("/updates/reject", json!({ "ids": [4] }), Some("2000-01-01T00:00:00Z"))).await;
    assert_ne!(v["rejected"][0]["decided_at"], "2000-01-01T00:00:00Z");
}

#[tokio::test]
async fn restart_keeps_history() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("svc.db");
    {
        let app = service::router(Database::open(&path).unwrap(), Config::default());
        call(&app, csv("U1", "2020-04-29", F1_U1)).await;
        call(&app, csv("U2", "2020-05-06", F1_U2)).await;
        json_call(&app, post_json("/updates/accept", json!({ "ids": [1] }), None)).await;
    }
    let app = service::router(Database::open(&path).unwrap(), Config::default());
    let (_, h) = json_call(&app, get("/cells/2020-04-20/Sex/Female/history")).await;
    let counts: Vec<_> = h["versions"].as_array().unwrap().iter().map(|v| v["count"].clone()).collect();
    assert_eq!(counts, vec![json!(12), json!(14)]);
}

#[tokio::test]
async fn second_bind_on_same_port_fails() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap();
    let err = service::serve(Database::open_in_memory().unwrap(), addr, Config::default())
        .await
        .unwrap_err();
    assert_eq!(err.kind(), std::io::ErrorKind::AddrInUse);
    assert!(err.to_string().contains("already in use"));
}

/// Serves on an ephemeral port from a background runtime.
fn spawn_server() -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app(true)).await.unwrap();
        });
    });
    addr
}

#[test]
fn direct_and_remote_cli_agree() {
    let addr = spawn_server();
    let url = format!("http://{addr}");
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("direct.db");
    let u1 = dir.path().join("u1.csv");
    let u2 = dir.path().join("u2.csv");
    std::fs::write(&u1, F1_U1).unwrap();
    std::fs::write(&u2, F1_U2).unwrap();
    let (u1, u2) = (u1.to_str().unwrap(), u2.to_str().unwrap());
    let script: Vec<Vec<&str>> = vec![
        vec!["upload", "--file", u1, "--file-id", "U1", "--release", "2020-04-29"],
        vec!["upload", "--file", u2, "--file-id", "U2", "--release", "2020-05-06"],
        vec!["pending", "--by-week"],
        vec!["accept", "--ids", "1,2,3", "--now", "2020-05-07T10:00:00Z"],
        vec!["reject", "--ids", "4", "--now", "2020-05-07T10:05:00Z"],
        vec!["accept", "--ids", "4", "--now", "2020-05-07T10:06:00Z"],
        vec!["history", "--cell", "2020-04-20/Sex/Female"],
        vec!["snapshot", "--asof", "2020-05-06"],
        vec!["query", "first", "--cell", "2020-04-20/LocalAuthority/Edinburgh"],
        vec!["query", "current", "--cell", "2020-04-20/Total/All", "--asof", "2020-05-01"],
        vec!["query", "range", "--cell", "2020-04-20/HealthBoard/Lothian"],
        vec!["query", "rejected", "--dimension", "LocalAuthority"],
        vec!["query", "counts", "--dimension", "Sex"],
        vec!["query", "most-updated", "--dimension", "HealthBoard"],
        vec!["query", "correlation", "--a", "Sex/Male", "--b", "Total/All"],
        vec!["query", "correlation", "--a", "Sex/Female", "--b", "Total/All"],
        vec!["uploads"],
    ];
    let bin = env!("CARGO_BIN_EXE_tempocurate");
    for args in &script {
        let direct = Command::new(bin).args(args).arg("--json").arg("--db").arg(&db).env_remove("TEMPOCURATE_URL").output().unwrap();
        let remote = Command::new(bin).args(args).arg("--json").arg("--url").arg(&url).output().unwrap();
        assert_eq!(direct.status.code(), remote.status.code(), "{args:?}");
        assert_eq!(
            String::from_utf8_lossy(&direct.stdout),
            String::from_utf8_lossy(&remote.stdout),
            "{args:?}"
        );
        let expect_failure = args[0] == "accept" && args[2] == "4" || args.contains(&"Sex/Male");
        assert_eq!(direct.status.code(), Some(if expect_failure { 1 } else { 0 }), "{args:?}: {}", String::from_utf8_lossy(&direct.stderr));
    }
}

#[test]
fn cli_exit_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("c.db");
    let bin = env!("CARGO_BIN_EXE_tempocurate");
    let run = |args: &[&str]| Command::new(bin).args(args).arg("--db").arg(&db).env_remove("TEMPOCURATE_URL").output().unwrap();
    assert_eq!(run(&["init"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["history", "--cell", "not-a-cell"]).status.code(), Some(2));
    let out = run(&["accept", "--ids", "7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_update"));
    let out = run(&["query", "correlation", "--a", "Sex/Female", "--b", "Total/All"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undefined_correlation"));
    let help = String::from_utf8_lossy(&Command::new(bin).arg("--help").output().unwrap().stdout).to_string();
    for sub in ["init", "upload", "pending", "accept", "reject", "history", "snapshot", "query", "serve"] {
        assert!(help.contains(sub), "help lacks {sub}");
    }
    // Environment variable supplies the default database.
    let out = Command::new(bin).arg("uploads").arg("--json").env("TEMPOCURATE_DB", &db).output().unwrap();
    assert_eq!(serde_json::from_slice::<Value>(&out.stdout).unwrap(), json!({ "uploads": [] }));
}
