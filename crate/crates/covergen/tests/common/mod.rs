#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use covergen::server::{app, AppState};
use covergen::ServiceConfig;
use covergen_core::augment::sample_vocabulary;
use covergen_core::genai::{CoverBackend, StubBackend};
use covergen_core::wndb::fixture_lexicon;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let path = schema_dir().join(format!("{name}.schema.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&value).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Errors from validating `instance` against the named schema, joined; empty when valid.
pub fn schema_errors(name: &str, instance: &Value) -> String {
    schema(name)
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn assert_schema(name: &str, instance: &Value) {
    let errors = schema_errors(name, instance);
    assert!(errors.is_empty(), "{name} schema: {errors}\n{instance:#}");
}

pub fn stub_state(root: &Path) -> AppState {
    state_with_backend(root, Arc::new(StubBackend))
}

pub fn state_with_backend(root: &Path, backend: Arc<dyn CoverBackend>) -> AppState {
    let config = ServiceConfig {
        run_store: root.to_path_buf(),
        ..Default::default()
    };
    AppState {
        lexicon: Arc::new(fixture_lexicon()),
        vocabulary: Arc::new(sample_vocabulary()),
        backend,
        config: Arc::new(config),
    }
}

pub fn stub_app(root: &Path) -> Router {
    app(stub_state(root))
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes)
            .unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", String::from_utf8_lossy(&self.bytes)))
    }
}

pub async fn send(router: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        bytes,
    }
}
