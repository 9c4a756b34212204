mod common;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{all_terminal, check_dependency_order, wait_until, TestLauncher, TestServer};
use labflow::agent::runner::Runners;
use labflow::agent::worker::{worker_loop, WorkerOptions};
use labflow::agent::{ComputeApi, LocalApi};
use labflow::client::ApiClient;
use labflow::service::{Hub, HubOptions};
use labflow_core::compute::NextJob;
use labflow_core::resources::ResourceRequest;
use labflow_core::workflow::{JobSpec, JobState, RunnerKind, WorkflowSpec};
use labflow_core::Command;
use serde_json::json;

fn fast() -> WorkerOptions {
    WorkerOptions { poll_interval: Duration::from_millis(20), flush_interval: Duration::from_millis(20), ..WorkerOptions::default() }
}

/// A hub with user `u`, host `h` and one submitted workflow; returns the
/// ids of the workers handed to `h`.
fn local_setup(spec: WorkflowSpec, cpu: u32) -> (Arc<Hub>, String, Vec<String>) {
    let hub = Arc::new(Hub::in_memory(HubOptions::default()));
    hub.register_user("u", "pw", Default::default()).unwrap();
    let api = LocalApi(hub.clone());
    api.register_host("h", cpu, 0).unwrap();
    let wf = match hub.execute(Command::SubmitWorkflow { principal: "u".into(), spec, now: 1 }).unwrap() {
        labflow_core::Outcome::Id(id) => id,
        other => panic!("{other:?}"),
    };
    let workers = api.poll("h").unwrap().into_iter().map(|a| a.worker_id).collect();
    (hub, wf, workers)
}

fn jobs(hub: &Hub, wf: &str) -> Vec<labflow_core::compute::JobRecord> {
    hub.read(|p| p.compute().jobs(Some(wf), None).cloned().collect())
}

#[test]
fn worker_runs_chain_and_releases_resources() {
    let spec = WorkflowSpec::new(
        vec![
            JobSpec::new("a").with_runner(RunnerKind::Mock, &["log=a", "asset=report file:///a.txt"]),
            JobSpec::new("b").with_runner(RunnerKind::Mock, &["log=b"]).depends_on(&["a"]),
        ],
        1,
        ResourceRequest::new(1, 0),
    );
    let (hub, wf, workers) = local_setup(spec, 1);
    let api = LocalApi(hub.clone());
    worker_loop(&workers[0], &api, &Runners::new(RunnerKind::Mock), &fast(), &AtomicBool::new(false)).unwrap();
    let jobs = jobs(&hub, &wf);
    assert!(jobs.iter().all(|j| j.state == JobState::Completed));
    check_dependency_order(&jobs).unwrap();
    assert_eq!(jobs[0].log, b"a\n##asset report file:///a.txt\n");
    assert_eq!(jobs[0].assets.len(), 1);
    let asset = hub.read(|p| p.registry().asset(&jobs[0].assets[0]).cloned()).unwrap();
    assert_eq!((asset.kind.as_str(), asset.uri.as_str()), ("report", "file:///a.txt"));
    hub.read(|p| {
        let host = p.compute().host("h").unwrap();
        assert_eq!(host.available(), host.capacity());
    });
}

#[test]
fn spawn_failure_reports_failed_with_diagnostic() {
    let spec = WorkflowSpec::new(
        vec![
            JobSpec::new("a").with_runner(RunnerKind::Process, &["/nonexistent/labflow-test-binary"]),
            JobSpec::new("b").depends_on(&["a"]),
        ],
        1,
        ResourceRequest::new(1, 0),
    );
    let (hub, wf, workers) = local_setup(spec, 1);
    worker_loop(&workers[0], &LocalApi(hub.clone()), &Runners::new(RunnerKind::Mock), &fast(), &AtomicBool::new(false)).unwrap();
    let jobs = jobs(&hub, &wf);
    assert_eq!(jobs[0].state, JobState::Failed);
    let log = String::from_utf8_lossy(&jobs[0].log).to_string();
    assert!(log.contains("failed to start job") && log.contains("/nonexistent/labflow-test-binary"), "{log}");
    assert_eq!(jobs[1].state, JobState::Canceled, "dependents of a failed job are canceled");
}

#[test]
fn unsupported_runner_fails_the_job() {
    let spec = WorkflowSpec::new(vec![JobSpec::new("a").with_runner(RunnerKind::Process, &["true"])], 1, ResourceRequest::new(1, 0));
    let (hub, wf, workers) = local_setup(spec, 1);
    worker_loop(&workers[0], &LocalApi(hub.clone()), &Runners::mock_only(), &fast(), &AtomicBool::new(false)).unwrap();
    let job = jobs(&hub, &wf).remove(0);
    assert_eq!(job.state, JobState::Failed);
    assert!(String::from_utf8_lossy(&job.log).contains("not enabled"));
}

#[test]
fn process_jobs_stream_logs_before_finishing() {
    let script = "echo first; sleep 0.5; echo second";
    let spec = WorkflowSpec::new(vec![JobSpec::new("a").with_runner(RunnerKind::Process, &["sh", "-c", script])], 1, ResourceRequest::new(1, 0));
    let (hub, wf, workers) = local_setup(spec, 1);
    let api = LocalApi(hub.clone());
    let worker = workers[0].clone();
    let handle = std::thread::spawn(move || worker_loop(&worker, &api, &Runners::new(RunnerKind::Process), &fast(), &AtomicBool::new(false)));
    let job_id = format!("{wf}.a");
    assert!(wait_until(Duration::from_secs(5), || hub.read(|p| p.compute().job(&job_id).unwrap().log == b"first\n")));
    assert_eq!(jobs(&hub, &wf)[0].state, JobState::Running);
    handle.join().unwrap().unwrap();
    let job = jobs(&hub, &wf).remove(0);
    assert_eq!((job.state, job.log.as_slice()), (JobState::Completed, b"first\nsecond\n".as_slice()));
}

#[test]
fn cancel_kills_a_running_process() {
    let poll = Duration::from_millis(100);
    let spec = WorkflowSpec::new(
        vec![
            JobSpec::new("a").with_runner(RunnerKind::Process, &["sh", "-c", "echo started; sleep 60"]),
            JobSpec::new("b").depends_on(&["a"]),
        ],
        1,
        ResourceRequest::new(1, 0),
    );
    let (hub, wf, workers) = local_setup(spec, 1);
    let api = LocalApi(hub.clone());
    let worker = workers[0].clone();
    let options = WorkerOptions { poll_interval: poll, ..WorkerOptions::default() };
    let handle = std::thread::spawn(move || worker_loop(&worker, &api, &Runners::new(RunnerKind::Process), &options, &AtomicBool::new(false)));
    assert!(wait_until(Duration::from_secs(5), || jobs(&hub, &wf)[0].log_size > 0));
    let started = Instant::now();
    hub.execute(Command::CancelWorkflow { principal: "u".into(), workflow_id: wf.clone(), now: 2 }).unwrap();
    assert!(wait_until(Duration::from_secs(5), || all_terminal(&jobs(&hub, &wf))));
    let elapsed = started.elapsed();
    assert!(elapsed <= 2 * poll, "took {elapsed:?}");
    handle.join().unwrap().unwrap();
    let states: Vec<JobState> = jobs(&hub, &wf).iter().map(|j| j.state).collect();
    assert_eq!(states, [JobState::Canceled, JobState::Canceled]);
}

/// A worker keeps retrying while the server is away.
#[test]
fn worker_survives_an_unreachable_server() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let api = ApiClient::new(&format!("http://{addr}"), None);
    let err = api.next_job("wf-000001.w0").unwrap_err();
    assert!(err.is_transport());

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = std::thread::spawn(move || worker_loop("wf-000001.w0", &api, &Runners::mock_only(), &fast(), &flag));
    std::thread::sleep(Duration::from_millis(200));
    assert!(!handle.is_finished(), "transport errors must not end the worker");
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    assert!(handle.join().unwrap().is_err());
}

#[test]
fn launcher_starts_workers_over_http() {
    let env = TestServer::start();
    let alice = env.user("alice");
    let _launcher = TestLauncher::mock(&env.url, "h1", 4, Duration::from_millis(20));
    let body = json!({
        "jobs": [
            {"job_id": "a", "command": ["log=one", "sleep_ms=20"]},
            {"job_id": "b", "command": ["log=two"], "depends_on": ["a"]},
            {"job_id": "c", "command": ["exit=failure"]},
            {"job_id": "d", "depends_on": ["c"]}
        ],
        "num_workers": 2,
        "worker_request": {"cpu": 1, "gpu": 0}
    });
    let wf = alice.submit_workflow_value(&body).unwrap();
    assert!(wait_until(Duration::from_secs(10), || all_terminal(&alice.list_jobs(Some(&wf), None).unwrap())));
    let jobs = alice.list_jobs(Some(&wf), None).unwrap();
    check_dependency_order(&jobs).unwrap();
    let states: Vec<JobState> = jobs.iter().map(|j| j.state).collect();
    assert_eq!(states, [JobState::Completed, JobState::Completed, JobState::Failed, JobState::Canceled]);
    assert_eq!(alice.get_logs(&format!("{wf}.b"), 0).unwrap().text, "two\n");
    assert!(wait_until(Duration::from_secs(5), || {
        let host = &alice.list_hosts().unwrap()[0];
        host.cpu_available == host.cpu_capacity
    }));
    assert_eq!(alice.get_workflow(&wf).unwrap()["status"], "FAILED");
}

#[test]
fn launcher_waits_for_the_server() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let url = format!("http://{addr}");
    let _launcher = TestLauncher::mock(&url, "late", 1, Duration::from_millis(20));
    std::thread::sleep(Duration::from_millis(150));
    let hub = Arc::new(Hub::in_memory(HubOptions::default()));
    let _server = labflow::http::spawn_server(hub.clone(), &addr.to_string(), None).unwrap();
    assert!(wait_until(Duration::from_secs(5), || hub.read(|p| p.compute().host("late").is_ok())));
}

#[test]
fn next_job_waits_on_dependencies_in_other_workers() {
    // Job b sits on a different worker than a; that worker waits.
    let spec = WorkflowSpec::new(vec![JobSpec::new("a"), JobSpec::new("b").depends_on(&["a"])], 2, ResourceRequest::new(1, 0));
    let (hub, _, workers) = local_setup(spec, 2);
    let api = LocalApi(hub);
    let waiting = workers.iter().find(|w| matches!(api.next_job(w).unwrap(), NextJob::Wait));
    assert!(waiting.is_some());
}
