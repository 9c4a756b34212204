//! Demo fixtures, seeding and the scripted TRAIN/TEST pipeline, plus the
//! placeholder tasks the process runner executes for it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use labflow_core::compute::JobRecord;
use labflow_core::registry::{ContentDocument, ContentType};
use labflow_core::resources::ResourceRequest;
use labflow_core::workflow::{JobSpec, JobState, RunnerKind, WorkflowSpec};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::agent::runner::{ASSET_MARKER, ENV_OUTPUT_URI, ENV_PARAMETERS};
use crate::client::{ApiClient, ClientError};

pub const MODEL_FIXTURE: &str = include_str!("../fixtures/segmentation_model.json");
pub const LABEL_MAKER_FIXTURE: &str = include_str!("../fixtures/label_maker.json");
pub const DATA_CLINIC_FIXTURE: &str = include_str!("../fixtures/data_clinic.json");
pub const MLCOACH_FIXTURE: &str = include_str!("../fixtures/mlcoach.json");
pub const WORKFLOW_FIXTURE: &str = include_str!("../fixtures/train_test_workflow.json");

/// Every fixture document, model first.
pub const FIXTURES: [&str; 5] = [MODEL_FIXTURE, LABEL_MAKER_FIXTURE, DATA_CLINIC_FIXTURE, MLCOACH_FIXTURE, WORKFLOW_FIXTURE];

pub const OWNER: &str = "owner";
pub const TEAMMATE: &str = "teammate";
pub const STRANGER: &str = "stranger";
pub const DEMO_PASSWORD: &str = "labflow-demo";

pub const TRAINED_MODEL_KIND: &str = "trained-model";
pub const SEGMENTATION_KIND: &str = "segmentation";

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Api(#[from] ClientError),
    #[error("workflow {workflow_id} did not finish within {seconds} s")]
    TimeoutWaitingForCompletion { workflow_id: String, seconds: u64 },
    #[error("{0}")]
    PipelineFailed(String),
    #[error("demo content is missing; run `labflow seed` first")]
    NotSeeded,
}

impl DemoError {
    pub fn code(&self) -> &str {
        match self {
            Self::Api(e) => e.code().unwrap_or("Unreachable"),
            Self::TimeoutWaitingForCompletion { .. } => "TimeoutWaitingForCompletion",
            Self::PipelineFailed(_) => "PipelineFailed",
            Self::NotSeeded => "NotSeeded",
        }
    }
}

fn fixture_value(text: &str) -> Value {
    serde_json::from_str(text).expect("fixtures are valid JSON")
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedReport {
    pub users: Vec<String>,
    pub team_id: String,
    pub model_id: String,
    pub app_ids: Vec<String>,
    pub workflow_content_id: String,
}

fn ensure_user(api: &ApiClient, username: &str) -> Result<(), ClientError> {
    match api.create_user(username, DEMO_PASSWORD) {
        Err(e) if e.code() == Some("DuplicateUser") => Ok(()),
        other => other,
    }
}

/// Creates the demo users, content, team and grant. Users that already
/// exist are reused; if the model is already registered nothing else is
/// written and `DuplicateContent` is returned.
pub fn seed(api: &ApiClient) -> Result<SeedReport, DemoError> {
    for user in [OWNER, TEAMMATE, STRANGER] {
        ensure_user(api, user)?;
    }
    let session = api.login(OWNER, DEMO_PASSWORD)?;
    let owner = api.with_token(Some(session.token));
    let model_id = owner.register_content(&fixture_value(MODEL_FIXTURE))?;
    let app_ids = [LABEL_MAKER_FIXTURE, DATA_CLINIC_FIXTURE, MLCOACH_FIXTURE]
        .into_iter()
        .map(|f| owner.register_content(&fixture_value(f)))
        .collect::<Result<Vec<_>, _>>()?;
    let workflow_content_id = owner.register_content(&fixture_value(WORKFLOW_FIXTURE))?;
    let team_id = owner.create_team()?;
    owner.add_member(&team_id, TEAMMATE)?;
    owner.grant(&team_id, &["read"], &model_id)?;
    Ok(SeedReport {
        users: [OWNER, TEAMMATE, STRANGER].map(String::from).to_vec(),
        team_id,
        model_id,
        app_ids,
        workflow_content_id,
    })
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub runner: RunnerKind,
    /// Limit for each wait on a workflow.
    pub timeout: Duration,
    pub launch_apps: bool,
    pub poll_interval: Duration,
    /// Where process-runner tasks write their placeholder files.
    pub work_dir: PathBuf,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            runner: RunnerKind::Process,
            timeout: Duration::from_secs(60),
            launch_apps: true,
            poll_interval: Duration::from_millis(200),
            work_dir: std::env::temp_dir().join("labflow-demo"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobRow {
    pub workflow_id: String,
    pub job_id: String,
    pub name: String,
    pub state: JobState,
    pub assets: Vec<String>,
}

impl From<&JobRecord> for JobRow {
    fn from(job: &JobRecord) -> Self {
        Self {
            workflow_id: job.workflow_id.clone(),
            job_id: job.spec.job_id.clone(),
            name: job.spec.name.clone(),
            state: job.state,
            assets: job.assets.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub train_workflow: String,
    pub test_workflow: String,
    pub model_uri: String,
    pub app_workflows: Vec<String>,
    pub jobs: Vec<JobRow>,
}

impl DemoReport {
    pub fn table(&self) -> String {
        let mut out = format!("{:<18} {:<26} {:<20} {:<10} {}\n", "WORKFLOW", "JOB", "NAME", "STATE", "ASSETS");
        for row in &self.jobs {
            out.push_str(&format!(
                "{:<18} {:<26} {:<20} {:<10} {}\n",
                row.workflow_id,
                row.job_id,
                row.name,
                row.state.as_str(),
                row.assets.join(",")
            ));
        }
        out
    }
}

fn file_uri(path: &Path) -> String {
    format!("file://{}", path.display())
}

fn unique_dir(base: &Path) -> PathBuf {
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    base.join(format!("{}-{nanos}", std::process::id()))
}

/// Waits until every job of `workflow_id` is terminal.
pub fn wait_for_workflow(api: &ApiClient, workflow_id: &str, timeout: Duration, poll: Duration) -> Result<Vec<JobRecord>, DemoError> {
    let deadline = Instant::now() + timeout;
    loop {
        let jobs = api.list_jobs(Some(workflow_id), None)?;
        if !jobs.is_empty() && jobs.iter().all(|j| j.state.is_terminal()) {
            return Ok(jobs);
        }
        if Instant::now() >= deadline {
            return Err(DemoError::TimeoutWaitingForCompletion { workflow_id: workflow_id.into(), seconds: timeout.as_secs() });
        }
        thread::sleep(poll);
    }
}

fn single_job(job: JobSpec) -> WorkflowSpec {
    WorkflowSpec::new(vec![job], 1, ResourceRequest::new(1, 0))
}

fn expect_completed(api: &ApiClient, jobs: &[JobRecord], step: &str) -> Result<(), DemoError> {
    match jobs.iter().find(|j| j.state != JobState::Completed) {
        Some(job) => {
            let log = api.get_logs(&job.spec.job_id, 0).map(|l| l.text).unwrap_or_default();
            Err(DemoError::PipelineFailed(format!(
                "{step} job {} ended {}: {}",
                job.spec.job_id,
                job.state.as_str(),
                log.trim_end()
            )))
        }
        None => Ok(()),
    }
}

/// Runs TRAIN, then TEST on the trained model, then launches the three
/// apps at once. Needs a seeded server and a running launcher.
pub fn run_demo(api: &ApiClient, options: &DemoOptions) -> Result<DemoReport, DemoError> {
    let session = api.login(OWNER, DEMO_PASSWORD)?;
    let api = api.with_token(Some(session.token));
    let model_name = fixture_value(MODEL_FIXTURE)["name"].as_str().unwrap_or_default().to_string();
    let model: ContentDocument = api
        .list_contents(Some(ContentType::Model.as_str()), Some(OWNER))?
        .into_iter()
        .find(|d| d.name == model_name)
        .ok_or(DemoError::NotSeeded)?;
    let defaults: BTreeMap<String, Value> = model
        .parameters
        .iter()
        .map(|p| (p.param_name.clone(), p.default.clone()))
        .collect();
    let run_dir = unique_dir(&options.work_dir);

    // TRAIN
    let model_path = run_dir.join("model.json");
    let mut train = JobSpec::new("train");
    train.name = "TRAIN".into();
    train.parameters = defaults.clone();
    train.parameters.insert("action".into(), "TRAIN".into());
    train.parameters.insert("content_id".into(), model.content_id.clone().into());
    train.output_uri = Some(file_uri(&model_path));
    train = match options.runner {
        RunnerKind::Process => train.with_runner(RunnerKind::Process, &["labflow", "task", "train"]),
        RunnerKind::Mock => {
            let asset = format!("asset={TRAINED_MODEL_KIND} {}", file_uri(&model_path));
            train.with_runner(RunnerKind::Mock, &["log=training", "sleep_ms=100", &asset, "exit=success"])
        }
    };
    let train_workflow = api.submit_workflow(&single_job(train))?;
    let train_jobs = wait_for_workflow(&api, &train_workflow, options.timeout, options.poll_interval)?;
    expect_completed(&api, &train_jobs, "TRAIN")?;
    let mut model_uri = None;
    for asset_id in &train_jobs[0].assets {
        let asset = api.get_asset(asset_id)?;
        if asset.kind == TRAINED_MODEL_KIND {
            model_uri = Some(asset.uri);
        }
    }
    let model_uri = model_uri.ok_or_else(|| DemoError::PipelineFailed("TRAIN registered no trained-model asset".into()))?;

    // TEST
    let output_path = run_dir.join("segmentation.json");
    let mut test = JobSpec::new("test");
    test.name = "TEST".into();
    test.parameters = defaults;
    test.parameters.insert("action".into(), "TEST".into());
    test.parameters.insert("content_id".into(), model.content_id.clone().into());
    test.parameters.insert("model_uri".into(), model_uri.clone().into());
    test.output_uri = Some(file_uri(&output_path));
    test = match options.runner {
        RunnerKind::Process => test.with_runner(RunnerKind::Process, &["labflow", "task", "test"]),
        RunnerKind::Mock => {
            let load = format!("log=loading {model_uri}");
            let asset = format!("asset={SEGMENTATION_KIND} {}", file_uri(&output_path));
            test.with_runner(RunnerKind::Mock, &[&load, "sleep_ms=100", &asset, "exit=success"])
        }
    };
    let test_workflow = api.submit_workflow(&single_job(test))?;
    let test_jobs = wait_for_workflow(&api, &test_workflow, options.timeout, options.poll_interval)?;
    expect_completed(&api, &test_jobs, "TEST")?;
    if test_jobs[0].spec.parameters.get("model_uri") != Some(&Value::String(model_uri.clone())) {
        return Err(DemoError::PipelineFailed("TEST does not reference the trained model".into()));
    }

    let mut jobs: Vec<JobRow> = train_jobs.iter().chain(&test_jobs).map(JobRow::from).collect();
    let mut app_workflows = Vec::new();
    if options.launch_apps {
        let apps: Vec<ContentDocument> = api
            .list_contents(Some(ContentType::App.as_str()), Some(OWNER))?
            .into_iter()
            .filter(|d| d.is_launchable())
            .collect();
        for app in &apps {
            app_workflows.push(api.launch(&app.content_id)?);
        }
        for workflow_id in &app_workflows {
            let app_jobs = wait_for_workflow(&api, workflow_id, options.timeout, options.poll_interval)?;
            expect_completed(&api, &app_jobs, "app")?;
            jobs.extend(app_jobs.iter().map(JobRow::from));
        }
    }
    Ok(DemoReport { train_workflow, test_workflow, model_uri, app_workflows, jobs })
}

// Placeholder tasks run by the process runner.

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn path_from_uri(uri: &str) -> Result<PathBuf, TaskError> {
    uri.strip_prefix("file://")
        .map(PathBuf::from)
        .ok_or_else(|| TaskError::Input(format!("only file:// URIs are supported, got {uri}")))
}

fn task_parameters() -> Result<BTreeMap<String, Value>, TaskError> {
    let raw = std::env::var(ENV_PARAMETERS).unwrap_or_else(|_| "{}".into());
    serde_json::from_str(&raw).map_err(|e| TaskError::Input(format!("{ENV_PARAMETERS}: {e}")))
}

fn task_output(default_name: &str) -> Result<PathBuf, TaskError> {
    match std::env::var(ENV_OUTPUT_URI) {
        Ok(uri) => path_from_uri(&uri),
        Err(_) => Ok(unique_dir(&std::env::temp_dir().join("labflow-demo")).join(default_name)),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), TaskError> {
    let io = |source| TaskError::Io { path: path.into(), source };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

/// Simulated training: writes a placeholder model holding the parameters
/// and announces it as a trained-model asset. Returns the lines to print.
pub fn task_train() -> Result<Vec<String>, TaskError> {
    let parameters = task_parameters()?;
    let path = task_output("model.json")?;
    let mut lines: Vec<String> = (1..=3).map(|epoch| format!("epoch {epoch}/3")).collect();
    let model = serde_json::json!({"kind": TRAINED_MODEL_KIND, "parameters": parameters});
    write(&path, &model.to_string())?;
    lines.push(format!("{ASSET_MARKER} {TRAINED_MODEL_KIND} {}", file_uri(&path)));
    Ok(lines)
}

/// Simulated inference: loads the model named by `model_uri` and writes a
/// placeholder segmentation.
pub fn task_test() -> Result<Vec<String>, TaskError> {
    let parameters = task_parameters()?;
    let model_uri = parameters
        .get("model_uri")
        .and_then(Value::as_str)
        .ok_or_else(|| TaskError::Input("parameter model_uri is required".into()))?;
    let model_path = path_from_uri(model_uri)?;
    let model = std::fs::read_to_string(&model_path)
        .map_err(|e| TaskError::Input(format!("cannot load model {}: {e}", model_path.display())))?;
    let path = task_output("segmentation.json")?;
    write(&path, &serde_json::json!({"model_uri": model_uri, "model_bytes": model.len()}).to_string())?;
    Ok(vec![
        format!("loaded model {model_uri}"),
        format!("{ASSET_MARKER} {SEGMENTATION_KIND} {}", file_uri(&path)),
    ])
}
