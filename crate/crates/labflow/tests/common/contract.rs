//! Black-box checks of the HTTP contract, shared by the contract tests and
//! the acceptance suite.

use reqwest::Method;
use serde_json::{json, Value};

use labflow::client::ApiClient;

use super::{ManualClock, TestServer, PASSWORD};

/// Sends a request and expects the given status and error code.
pub fn expect_error(client: &ApiClient, method: Method, path: &str, body: Option<Value>, status: u16, code: &str) -> Result<Value, String> {
    let (got_status, value) = client.send_raw(method.clone(), path, body.as_ref()).map_err(|e| e.to_string())?;
    let got_code = value["error"].as_str().unwrap_or_default();
    if got_status != status || got_code != code {
        return Err(format!("{method} {path}: expected {status} {code}, got {got_status} {value}"));
    }
    if !value["message"].is_string() {
        return Err(format!("{method} {path}: error body lacks a message: {value}"));
    }
    Ok(value)
}

fn ok(client: &ApiClient, method: Method, path: &str, body: Option<Value>) -> Result<Value, String> {
    let (status, value) = client.send_raw(method.clone(), path, body.as_ref()).map_err(|e| e.to_string())?;
    if status >= 400 {
        return Err(format!("{method} {path}: unexpected {status} {value}"));
    }
    Ok(value)
}

pub fn model_doc(name: &str) -> Value {
    json!({
        "content_type": "model",
        "name": name,
        "version": "1.0",
        "uri": "file:///models/x",
        "parameters": [{"param_name": "epochs", "widget": "int_slider", "default": 5, "min": 1, "max": 10}]
    })
}

pub fn workflow(jobs: Value, num_workers: u32) -> Value {
    json!({"jobs": jobs, "num_workers": num_workers, "worker_request": {"cpu": 1, "gpu": 0}})
}

/// Every error code a client can provoke, with the expected HTTP status.
pub const REACHABLE_CODES: &[(&str, u16)] = &[
    ("InvalidRequest", 400),
    ("NotFound", 404),
    ("InvalidUsername", 400),
    ("DuplicateUser", 409),
    ("BadCredentials", 401),
    ("ExpiredToken", 401),
    ("Unauthenticated", 401),
    ("UnknownNode", 404),
    ("KindMismatch", 400),
    ("NotTeamOwner", 403),
    ("NotOwner", 403),
    ("EmptyActionSet", 400),
    ("SchemaViolation", 400),
    ("UnknownContentType", 400),
    ("DuplicateContent", 409),
    ("UnknownContent", 404),
    ("UnknownAsset", 404),
    ("NotLaunchable", 409),
    ("AccessDenied", 403),
    ("CyclicDependency", 400),
    ("UnknownDependency", 400),
    ("InvalidWorkerCount", 400),
    ("DuplicateJob", 400),
    ("InvalidJobId", 400),
    ("InvalidResourceRequest", 400),
    ("UnknownWorkflow", 404),
    ("UnknownJob", 404),
    ("DuplicateHost", 409),
    ("InvalidHostId", 400),
    ("UnknownHost", 404),
    ("UnknownWorker", 404),
    ("IllegalTransition", 409),
    ("WorkerBusy", 409),
];

/// Provokes every code in [`REACHABLE_CODES`] against a fresh server and
/// returns one result per code, in table order.
pub fn provoke_all_codes() -> Vec<(&'static str, Result<(), String>)> {
    let clock = ManualClock::default();
    clock.advance(1_000);
    let mut options = clock.options();
    options.token_ttl_ms = 60_000;
    let env = TestServer::with_options(options);
    let anon = env.anon();
    let owner = env.user("owner");
    let other = env.user("other");
    let agent = env.anon();

    let mut results = Vec::new();
    let mut check = |code: &'static str, outcome: Result<Value, String>| {
        results.push((code, outcome.map(drop)));
    };
    use Method as M;

    check("InvalidRequest", expect_error(&anon, M::POST, "/users", Some(json!({"username": 3})), 400, "InvalidRequest"));
    check("NotFound", expect_error(&anon, M::GET, "/nope", None, 404, "NotFound"));
    check("InvalidUsername", expect_error(&anon, M::POST, "/users", Some(json!({"username": "bad name!", "password": PASSWORD})), 400, "InvalidUsername"));
    check("DuplicateUser", expect_error(&anon, M::POST, "/users", Some(json!({"username": "owner", "password": PASSWORD})), 409, "DuplicateUser"));
    check("BadCredentials", expect_error(&anon, M::POST, "/auth/login", Some(json!({"username": "owner", "password": "wrong"})), 401, "BadCredentials"));
    check("Unauthenticated", expect_error(&anon, M::POST, "/workflows", Some(workflow(json!([{"job_id": "a"}]), 1)), 401, "Unauthenticated"));

    let team = ok(&owner, M::POST, "/teams", None).map(|v| v["team_id"].as_str().unwrap_or_default().to_string());
    let team = team.unwrap_or_default();
    let content = ok(&owner, M::POST, "/contents", Some(model_doc("seg")))
        .map(|v| v["content_id"].as_str().unwrap_or_default().to_string())
        .unwrap_or_default();
    check("UnknownNode", expect_error(&owner, M::POST, "/grants", Some(json!({"subject": "ghost", "actions": ["read"], "resource": content})), 404, "UnknownNode"));
    check("KindMismatch", expect_error(&owner, M::POST, &format!("/teams/{team}/members"), Some(json!({"user": content})), 400, "KindMismatch"));
    check("NotTeamOwner", expect_error(&other, M::POST, &format!("/teams/{team}/members"), Some(json!({"user": "other"})), 403, "NotTeamOwner"));
    check("NotOwner", expect_error(&other, M::POST, "/grants", Some(json!({"subject": "other", "actions": ["read"], "resource": content})), 403, "NotOwner"));
    check("EmptyActionSet", expect_error(&owner, M::POST, "/grants", Some(json!({"subject": "other", "actions": [], "resource": content})), 400, "EmptyActionSet"));

    let mut bad = model_doc("x");
    bad["colour"] = json!("red");
    check("SchemaViolation", expect_error(&owner, M::POST, "/contents", Some(bad), 400, "SchemaViolation").and_then(|v| {
        if v["field"] == "colour" { Ok(v) } else { Err(format!("field not named: {v}")) }
    }));
    let mut unknown_type = model_doc("x");
    unknown_type["content_type"] = json!("dataset");
    check("UnknownContentType", expect_error(&owner, M::POST, "/contents", Some(unknown_type), 400, "UnknownContentType"));
    check("DuplicateContent", expect_error(&owner, M::POST, "/contents", Some(model_doc("seg")), 409, "DuplicateContent"));
    check("UnknownContent", expect_error(&owner, M::GET, "/contents/ct-999999", None, 404, "UnknownContent"));
    check("UnknownAsset", expect_error(&owner, M::GET, "/assets/as-999999", None, 404, "UnknownAsset"));
    check("NotLaunchable", expect_error(&owner, M::POST, &format!("/contents/{content}/launch"), None, 409, "NotLaunchable"));
    check("AccessDenied", expect_error(&other, M::GET, &format!("/contents/{content}"), None, 403, "AccessDenied"));

    let cyclic = workflow(json!([{"job_id": "a", "depends_on": ["b"]}, {"job_id": "b", "depends_on": ["a"]}]), 1);
    check("CyclicDependency", expect_error(&owner, M::POST, "/workflows", Some(cyclic), 400, "CyclicDependency"));
    check("UnknownDependency", expect_error(&owner, M::POST, "/workflows", Some(workflow(json!([{"job_id": "a", "depends_on": ["z"]}]), 1)), 400, "UnknownDependency"));
    check("InvalidWorkerCount", expect_error(&owner, M::POST, "/workflows", Some(workflow(json!([{"job_id": "a"}]), 0)), 400, "InvalidWorkerCount"));
    check("DuplicateJob", expect_error(&owner, M::POST, "/workflows", Some(workflow(json!([{"job_id": "a"}, {"job_id": "a"}]), 1)), 400, "DuplicateJob"));
    check("InvalidJobId", expect_error(&owner, M::POST, "/workflows", Some(workflow(json!([{"job_id": "a b"}]), 1)), 400, "InvalidJobId"));
    let empty_request = json!({"jobs": [{"job_id": "a"}], "num_workers": 1, "worker_request": {"cpu": 0, "gpu": 0}});
    check("InvalidResourceRequest", expect_error(&owner, M::POST, "/workflows", Some(empty_request), 400, "InvalidResourceRequest"));
    check("UnknownWorkflow", expect_error(&owner, M::GET, "/workflows/wf-999999", None, 404, "UnknownWorkflow"));
    check("UnknownJob", expect_error(&owner, M::GET, "/jobs/wf-999999.a", None, 404, "UnknownJob"));

    let host = json!({"host_id": "h1", "cpu_capacity": 2, "gpu_capacity": 0});
    let registered = ok(&agent, M::POST, "/hosts", Some(host.clone()));
    check("DuplicateHost", registered.and_then(|_| expect_error(&agent, M::POST, "/hosts", Some(host), 409, "DuplicateHost")));
    check("InvalidHostId", expect_error(&agent, M::POST, "/hosts", Some(json!({"host_id": "", "cpu_capacity": 1, "gpu_capacity": 0})), 400, "InvalidHostId"));
    check("UnknownHost", expect_error(&agent, M::POST, "/hosts/h9/poll", None, 404, "UnknownHost"));
    check("UnknownWorker", expect_error(&agent, M::GET, "/workers/wf-999999.w0/next", None, 404, "UnknownWorker"));

    // A running job: two jobs on one worker, the second waiting on the first.
    let flow = ok(&owner, M::POST, "/workflows", Some(workflow(json!([{"job_id": "a"}, {"job_id": "b", "depends_on": ["a"]}]), 1)))
        .map(|v| v["workflow_id"].as_str().unwrap_or_default().to_string())
        .unwrap_or_default();
    let running = ok(&agent, M::POST, "/hosts/h1/poll", None).and_then(|assignments| {
        let worker = assignments[0]["worker_id"].as_str().ok_or("no assignment")?.to_string();
        let next = ok(&agent, M::GET, &format!("/workers/{worker}/next"), None)?;
        Ok((worker, next["job"]["job_id"].as_str().unwrap_or_default().to_string()))
    });
    match running {
        Ok((worker, job)) => {
            check("IllegalTransition", expect_error(&agent, M::POST, &format!("/jobs/{flow}.b/status"), Some(json!({"state": "COMPLETED"})), 409, "IllegalTransition"));
            check("WorkerBusy", expect_error(&agent, M::POST, &format!("/workers/{worker}/done"), None, 409, "WorkerBusy"));
            let _ = job;
        }
        Err(e) => {
            check("IllegalTransition", Err(e.clone()));
            check("WorkerBusy", Err(e));
        }
    }

    // Last, since it moves the clock past every session.
    clock.advance(60_001);
    check("ExpiredToken", expect_error(&owner, M::GET, "/auth/whoami", None, 401, "ExpiredToken"));

    let mut ordered = Vec::new();
    for (code, _) in REACHABLE_CODES {
        match results.iter().position(|(c, _)| c == code) {
            Some(i) => ordered.push(results.swap_remove(i)),
            None => ordered.push((*code, Err("never provoked".to_string()))),
        }
    }
    ordered
}

/// Unknown keys are rejected at every level of a content document and of
/// the other request bodies, and the response names the key.
pub fn strict_parsing() -> Result<(), String> {
    let env = TestServer::start();
    let owner = env.user("owner");
    let mut doc = model_doc("strict");
    doc["parameters"][0]["colour"] = json!("red");
    let v = expect_error(&owner, Method::POST, "/contents", Some(doc), 400, "SchemaViolation")?;
    if v["field"] != "parameters[0].colour" {
        return Err(format!("nested key not named: {v}"));
    }
    let mut doc = model_doc("strict");
    doc["service"] = json!({"command": ["x"], "restart": true});
    let v = expect_error(&owner, Method::POST, "/contents", Some(doc), 400, "SchemaViolation")?;
    if v["field"] != "service.restart" {
        return Err(format!("service key not named: {v}"));
    }
    let mut doc = model_doc("strict");
    doc["parameters"][0]["widget"] = json!("color_picker");
    let v = expect_error(&owner, Method::POST, "/contents", Some(doc), 400, "SchemaViolation")?;
    if v["field"] != "parameters[0].widget" {
        return Err(format!("widget not named: {v}"));
    }
    let body = json!({"jobs": [{"job_id": "a", "retries": 3}], "num_workers": 1, "worker_request": {"cpu": 1, "gpu": 0}});
    expect_error(&owner, Method::POST, "/workflows", Some(body), 400, "InvalidRequest")?;
    expect_error(&owner, Method::POST, "/teams", Some(json!({"name": "x"})), 400, "InvalidRequest")?;
    // The accepted document comes back with nothing added but its id and owner.
    let id = ok(&owner, Method::POST, "/contents", Some(model_doc("strict")))?["content_id"].as_str().unwrap_or_default().to_string();
    let got = ok(&owner, Method::GET, &format!("/contents/{id}"), None)?;
    if got["owner"] != "owner" || got["content_id"] != id.as_str() {
        return Err(format!("stored document differs: {got}"));
    }
    Ok(())
}
