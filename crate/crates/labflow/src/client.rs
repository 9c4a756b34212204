//! Blocking HTTP client for the API.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use labflow_core::compute::{Assignment, JobRecord, NextJob};
use labflow_core::platform::AssetRef;
use labflow_core::registry::{AssetRecord, ContentDocument};
use labflow_core::resources::HostState;
use labflow_core::workflow::{JobState, WorkflowSpec};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ApiFailure {
    #[serde(skip)]
    pub status: u16,
    #[serde(rename = "error")]
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub field: Option<String>,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{} ({}): {}", .0.code, .0.status, .0.message)]
    Api(ApiFailure),
    #[error("cannot reach {url}: {message}")]
    Transport { url: String, message: String },
    #[error("unexpected response from {url}: {message}")]
    Decode { url: String, message: String },
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            Self::Api(f) => Some(&f.code),
            _ => None,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Transport { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogAck {
    pub offset: usize,
    pub cancel_requested: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogSlice {
    pub job_id: String,
    pub from: usize,
    pub next_offset: usize,
    pub size: usize,
    pub text: String,
    pub data_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub username: String,
    pub token: String,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub content_id: String,
    pub score: usize,
    pub name: String,
    pub content_type: String,
}

#[derive(Clone)]
pub struct ApiClient {
    base: String,
    token: Option<String>,
    http: Client,
}

impl ApiClient {
    pub fn new(base: &str, token: Option<String>) -> Self {
        let http = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("HTTP client without TLS always builds");
        Self { base: base.trim_end_matches('/').to_string(), token, http }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn with_token(&self, token: Option<String>) -> Self {
        Self { base: self.base.clone(), token, http: self.http.clone() }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/api/v1{}", self.base, path)
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        let builder = self.http.request(method, self.url(path));
        match &self.token {
            Some(token) => builder.bearer_auth(token),
            None => builder,
        }
    }

    /// Sends a request and returns the status and raw JSON body.
    pub fn send_raw(&self, method: Method, path: &str, body: Option<&Value>) -> Result<(u16, Value), ClientError> {
        let url = self.url(path);
        let mut builder = self.request(method, path);
        if let Some(body) = body {
            builder = builder.json(body);
        }
        let response = builder
            .send()
            .map_err(|e| ClientError::Transport { url: url.clone(), message: e.to_string() })?;
        let status = response.status().as_u16();
        let bytes = response
            .bytes()
            .map_err(|e| ClientError::Transport { url: url.clone(), message: e.to_string() })?;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode { url, message: e.to_string() })?
        };
        Ok((status, value))
    }

    fn call<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&Value>) -> Result<T, ClientError> {
        let (status, value) = self.send_raw(method, path, body)?;
        if status >= 400 {
            let mut failure: ApiFailure = serde_json::from_value(value).map_err(|e| ClientError::Decode {
                url: self.url(path),
                message: format!("status {status}: {e}"),
            })?;
            failure.status = status;
            return Err(ClientError::Api(failure));
        }
        serde_json::from_value(value).map_err(|e| ClientError::Decode { url: self.url(path), message: e.to_string() })
    }

    fn field(value: Value, key: &str) -> String {
        value[key].as_str().unwrap_or_default().to_string()
    }

    pub fn create_user(&self, username: &str, password: &str) -> Result<(), ClientError> {
        self.call::<Value>(Method::POST, "/users", Some(&json!({"username": username, "password": password})))
            .map(drop)
    }

    pub fn login(&self, username: &str, password: &str) -> Result<Session, ClientError> {
        self.call(Method::POST, "/auth/login", Some(&json!({"username": username, "password": password})))
    }

    pub fn whoami(&self) -> Result<String, ClientError> {
        self.call::<Value>(Method::GET, "/auth/whoami", None).map(|v| Self::field(v, "username"))
    }

    pub fn create_team(&self) -> Result<String, ClientError> {
        self.call::<Value>(Method::POST, "/teams", Some(&json!({}))).map(|v| Self::field(v, "team_id"))
    }

    pub fn add_member(&self, team: &str, user: &str) -> Result<(), ClientError> {
        self.call::<Value>(Method::POST, &format!("/teams/{team}/members"), Some(&json!({"user": user})))
            .map(drop)
    }

    pub fn grant(&self, subject: &str, actions: &[&str], resource: &str) -> Result<(), ClientError> {
        self.call::<Value>(
            Method::POST,
            "/grants",
            Some(&json!({"subject": subject, "actions": actions, "resource": resource})),
        )
        .map(drop)
    }

    pub fn submit_workflow(&self, spec: &WorkflowSpec) -> Result<String, ClientError> {
        let body = serde_json::to_value(spec).expect("spec serializes");
        self.submit_workflow_value(&body)
    }

    pub fn submit_workflow_value(&self, body: &Value) -> Result<String, ClientError> {
        self.call::<Value>(Method::POST, "/workflows", Some(body)).map(|v| Self::field(v, "workflow_id"))
    }

    pub fn get_workflow(&self, workflow_id: &str) -> Result<Value, ClientError> {
        self.call(Method::GET, &format!("/workflows/{workflow_id}"), None)
    }

    pub fn cancel_workflow(&self, workflow_id: &str) -> Result<usize, ClientError> {
        self.call::<Value>(Method::POST, &format!("/workflows/{workflow_id}/cancel"), None)
            .map(|v| v["affected_jobs"].as_u64().unwrap_or(0) as usize)
    }

    pub fn list_jobs(&self, workflow: Option<&str>, state: Option<JobState>) -> Result<Vec<JobRecord>, ClientError> {
        let mut query = Vec::new();
        if let Some(w) = workflow {
            query.push(format!("workflow={w}"));
        }
        if let Some(s) = state {
            query.push(format!("state={}", s.as_str()));
        }
        self.call(Method::GET, &format!("/jobs?{}", query.join("&")), None)
    }

    pub fn get_job(&self, job_id: &str) -> Result<JobRecord, ClientError> {
        self.call(Method::GET, &format!("/jobs/{job_id}"), None)
    }

    pub fn get_logs(&self, job_id: &str, from: usize) -> Result<LogSlice, ClientError> {
        self.call(Method::GET, &format!("/jobs/{job_id}/logs?from={from}"), None)
    }

    pub fn search(&self, query: &str, content_type: Option<&str>) -> Result<Vec<SearchResult>, ClientError> {
        let mut url = reqwest::Url::parse("http://x/contents/search").expect("static url");
        url.query_pairs_mut().append_pair("q", query);
        if let Some(t) = content_type {
            url.query_pairs_mut().append_pair("type", t);
        }
        let path = format!("{}?{}", url.path(), url.query().unwrap_or(""));
        self.call(Method::GET, &path, None)
    }

    pub fn register_content(&self, document: &Value) -> Result<String, ClientError> {
        self.call::<Value>(Method::POST, "/contents", Some(document)).map(|v| Self::field(v, "content_id"))
    }

    pub fn get_content(&self, content_id: &str) -> Result<ContentDocument, ClientError> {
        self.call(Method::GET, &format!("/contents/{content_id}"), None)
    }

    pub fn list_contents(&self, content_type: Option<&str>, owner: Option<&str>) -> Result<Vec<ContentDocument>, ClientError> {
        let mut query = Vec::new();
        if let Some(t) = content_type {
            query.push(format!("type={t}"));
        }
        if let Some(o) = owner {
            query.push(format!("owner={o}"));
        }
        self.call(Method::GET, &format!("/contents?{}", query.join("&")), None)
    }

    pub fn launch(&self, content_id: &str) -> Result<String, ClientError> {
        self.call::<Value>(Method::POST, &format!("/contents/{content_id}/launch"), None)
            .map(|v| Self::field(v, "workflow_id"))
    }

    pub fn get_asset(&self, asset_id: &str) -> Result<AssetRecord, ClientError> {
        self.call(Method::GET, &format!("/assets/{asset_id}"), None)
    }

    // Agent calls.

    pub fn register_host(&self, host_id: &str, cpu: u32, gpu: u32) -> Result<HostState, ClientError> {
        self.call(
            Method::POST,
            "/hosts",
            Some(&json!({"host_id": host_id, "cpu_capacity": cpu, "gpu_capacity": gpu})),
        )
    }

    pub fn list_hosts(&self) -> Result<Vec<HostState>, ClientError> {
        self.call(Method::GET, "/hosts", None)
    }

    pub fn poll(&self, host_id: &str) -> Result<Vec<Assignment>, ClientError> {
        self.call(Method::POST, &format!("/hosts/{host_id}/poll"), None)
    }

    pub fn next_job(&self, worker_id: &str) -> Result<NextJob, ClientError> {
        self.call(Method::GET, &format!("/workers/{worker_id}/next"), None)
    }

    pub fn append_log(&self, job_id: &str, chunk: &[u8]) -> Result<LogAck, ClientError> {
        self.call(Method::POST, &format!("/jobs/{job_id}/logs"), Some(&json!({"data_b64": B64.encode(chunk)})))
    }

    pub fn report_status(&self, job_id: &str, state: JobState, log: &[u8], assets: &[AssetRef]) -> Result<Vec<String>, ClientError> {
        let body = json!({"state": state, "log_b64": B64.encode(log), "asset_uris": assets});
        self.call::<Value>(Method::POST, &format!("/jobs/{job_id}/status"), Some(&body)).map(|v| {
            v["asset_ids"]
                .as_array()
                .map(|ids| ids.iter().filter_map(|i| i.as_str().map(String::from)).collect())
                .unwrap_or_default()
        })
    }

    pub fn worker_done(&self, worker_id: &str) -> Result<(), ClientError> {
        self.call::<Value>(Method::POST, &format!("/workers/{worker_id}/done"), None).map(drop)
    }
}
