//! Shared HTTP client helpers and a headless session driver.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use diagnostica_circuit::{FcnClassifier, ModelRegistry, StubClassifier};
use diagnostica_gateway::server::{AppState, Server};
use diagnostica_kg::{fixtures, KnowledgeGraph};
use diagnostica_neural::{CamMethod, FcnConfig, FcnModel, ANOMALOUS, CLASSES};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

pub struct Api {
    pub server: Server,
    pub client: Client,
}

impl Api {
    pub async fn start(kg: KnowledgeGraph, registry: ModelRegistry) -> Api {
        let state = AppState::new(kg, registry, None);
        Self::with_state(state).await
    }

    pub async fn with_state(state: Arc<AppState>) -> Api {
        let server = Server::start(state, "127.0.0.1:0".parse().unwrap()).await.unwrap();
        Api { server, client: Client::new() }
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(self.server.url(path)).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(self.server.url(path)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    pub async fn post_raw(&self, path: &str, content_type: &str, body: String) -> (StatusCode, Value) {
        let r = self
            .client
            .post(self.server.url(path))
            .header("content-type", content_type)
            .body(body)
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    /// Payload of a 2xx response.
    pub async fn get_ok(&self, path: &str) -> Value {
        let (status, body) = self.get(path).await;
        assert!(status.is_success(), "GET {path}: {status} {body}");
        payload(body)
    }

    pub async fn post_ok(&self, path: &str, body: Value) -> Value {
        let (status, reply) = self.post(path, body.clone()).await;
        assert!(status.is_success(), "POST {path} {body}: {status} {reply}");
        payload(reply)
    }
}

/// Checks the envelope shape and unwraps the payload.
pub fn payload(body: Value) -> Value {
    assert!(body["request_id"].is_string(), "{body}");
    assert!(body.get("error").is_none(), "{body}");
    body["payload"].clone()
}

/// Checks the envelope shape and returns the error code.
pub fn error_code(body: &Value) -> String {
    assert!(body["request_id"].is_string(), "{body}");
    assert!(body.get("payload").is_none(), "{body}");
    body["error"]["code"].as_str().expect("error code").to_string()
}

/// FCN that always predicts anomalous; its heatmaps still come from the CAM.
pub fn always_anomalous_model(n: usize) -> FcnModel {
    let mut m = FcnModel::new(FcnConfig::tiny(n), 7).unwrap();
    let mut bias = [-20.0; CLASSES];
    bias[ANOMALOUS] = 20.0;
    m.set_dense_bias(bias);
    m
}

/// Causal example registry: FCN at `C_D`, stubs at `C_A` (anomalous) and
/// `C_C` (regular), nothing at `C_B` so its request turns manual.
pub fn causal_registry() -> ModelRegistry {
    let mut registry = ModelRegistry::new();
    registry.register("C_D", Arc::new(FcnClassifier::new("fcn-c-d", always_anomalous_model(32), CamMethod::GradCam)));
    let stub = Arc::new(StubClassifier::new(["C_A"]));
    registry.register("C_A", stub.clone());
    registry.register("C_C", stub);
    registry
}

pub fn causal_graph() -> KnowledgeGraph {
    fixtures::causal_graph()
}

pub fn spike(n: usize, at: usize) -> Vec<f64> {
    (0..n).map(|t| if (at..at + 4).contains(&t) { 5.0 } else { (t as f64 * 0.3).sin() * 0.2 }).collect()
}

pub struct SessionRun {
    pub id: String,
    pub report: Value,
    pub requests: usize,
}

/// Drives a session to its report over HTTP only; components in `anomalous`
/// are reported anomalous on manual inspection, the sensor answer is
/// `sensor_defective`. Every other oscillogram goes up as CSV.
pub async fn drive_session(api: &Api, start: Value, anomalous: &BTreeSet<&str>, sensor_defective: bool) -> SessionRun {
    let (status, body) = api.post("/sessions", start).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = payload(body)["id"].as_str().unwrap().to_string();
    let mut requests = 0;
    let mut csv_turn = false;
    for _ in 0..100 {
        let actions = api.get_ok(&format!("/sessions/{id}/actions")).await;
        let state = actions["state"].as_str().unwrap().to_string();
        let mut list: Vec<Value> = actions["actions"].as_array().unwrap().clone();
        if list.is_empty() {
            assert!(state == "REPORT" || state == "NO_DIAGNOSIS", "stalled in {state}");
            break;
        }
        list.sort_by_key(|a| a["kind"] != "record_oscillogram");
        let a = &list[0];
        let component = a["component"].as_str().map(str::to_string);
        match a["kind"].as_str().unwrap() {
            "record_oscillogram" => {
                let c = component.unwrap();
                let series = spike(48, 20);
                requests += 1;
                csv_turn = !csv_turn;
                let (status, body) = if csv_turn {
                    let text: String = series.iter().map(|v| format!("{v}\n")).collect();
                    api.post_raw(&format!("/sessions/{id}/oscillograms?component={c}"), "text/csv", text).await
                } else {
                    api.post(&format!("/sessions/{id}/oscillograms"), json!({"component": c, "values": series})).await
                };
                assert!(status.is_success(), "{status} {body}");
                if payload(body)["outcome"] == "converted_to_manual" {
                    requests -= 1;
                }
            }
            "manual_inspection" => {
                let c = component.unwrap();
                requests += 1;
                let verdict = anomalous.contains(c.as_str());
                api.post_ok(&format!("/sessions/{id}/manual-results"), json!({"component": c, "anomalous": verdict}))
                    .await;
            }
            "confirm_sensor_hypothesis" => {
                api.post_ok(&format!("/sessions/{id}/manual-results"), json!({"anomalous": sensor_defective})).await;
            }
            other => panic!("unknown action {other}"),
        }
    }
    let report = api.post_ok(&format!("/sessions/{id}/finalize"), json!({})).await;
    SessionRun { id, report, requests }
}

/// Every entity the report points at exists; returns how many were checked.
pub async fn check_artifacts(api: &Api, report: &Value) -> usize {
    let mut ids: Vec<String> = vec![report["diag_log"].as_str().unwrap().to_string()];
    for c in report["classifications"].as_array().unwrap() {
        ids.push(c["id"].as_str().unwrap().to_string());
        for key in ["oscillogram", "heatmap"] {
            if let Some(x) = c.get(key).and_then(Value::as_str) {
                ids.push(x.to_string());
            }
        }
        let reason = c["reason"].as_object().unwrap();
        ids.extend(reason.values().map(|v| v.as_str().unwrap().to_string()));
    }
    for p in report["fault_paths"].as_array().unwrap() {
        ids.push(p["id"].as_str().unwrap().to_string());
    }
    for h in report["heatmap_refs"].as_array().unwrap() {
        let id = h.as_str().unwrap();
        let heatmap = api.get_ok(&format!("/heatmaps/{id}")).await;
        assert!(!heatmap["values"].as_array().unwrap().is_empty());
        ids.push(id.to_string());
    }
    for id in &ids {
        let (status, body) = api.get(&format!("/kg/entities/{id}")).await;
        assert_eq!(status, StatusCode::OK, "{id}: {body}");
    }
    ids.len()
}
