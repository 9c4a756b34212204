//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use labflow::agent::launcher::{launcher_loop, LauncherConfig, ThreadSpawner};
use labflow::agent::runner::Runners;
use labflow::agent::worker::WorkerOptions;
use labflow::agent::ComputeApi;
use labflow::client::ApiClient;
use labflow::http::{spawn_server, ServerHandle};
use labflow::service::{Hub, HubOptions};
use labflow_core::compute::JobRecord;
use labflow_core::workflow::{JobState, RunnerKind};

pub const PASSWORD: &str = "correct horse";

pub struct TestServer {
    pub hub: Arc<Hub>,
    pub server: ServerHandle,
    pub url: String,
}

impl TestServer {
    pub fn start() -> Self {
        Self::with_options(HubOptions::default())
    }

    pub fn with_options(options: HubOptions) -> Self {
        Self::with_hub(Hub::in_memory(options))
    }

    pub fn with_hub(hub: Hub) -> Self {
        let hub = Arc::new(hub);
        let server = spawn_server(hub.clone(), "127.0.0.1:0", None).expect("bind test server");
        let url = server.base_url();
        Self { hub, server, url }
    }

    pub fn anon(&self) -> ApiClient {
        ApiClient::new(&self.url, None)
    }

    /// Registers `name` and returns a client logged in as them.
    pub fn user(&self, name: &str) -> ApiClient {
        let anon = self.anon();
        anon.create_user(name, PASSWORD).expect("create user");
        let session = anon.login(name, PASSWORD).expect("login");
        anon.with_token(Some(session.token))
    }

    /// Client for a user that already exists.
    pub fn login(&self, name: &str) -> ApiClient {
        let session = self.anon().login(name, PASSWORD).expect("login");
        self.anon().with_token(Some(session.token))
    }
}

/// A clock tests can move by hand.
#[derive(Clone, Default)]
pub struct ManualClock(pub Arc<AtomicU64>);

impl ManualClock {
    pub fn options(&self) -> HubOptions {
        let now = self.0.clone();
        HubOptions { clock: Arc::new(move || now.load(Ordering::SeqCst)), ..HubOptions::default() }
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

/// A launcher with in-process workers, stopped on drop.
pub struct TestLauncher {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TestLauncher {
    pub fn start(api: Arc<dyn ComputeApi>, host_id: &str, cpu: u32, poll: Duration, runners: Runners) -> Self {
        let config = LauncherConfig { host_id: host_id.into(), cpu_capacity: cpu, gpu_capacity: 0, poll_interval: poll };
        let options = WorkerOptions { poll_interval: poll, ..WorkerOptions::default() };
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::spawn(move || {
            let mut spawner = ThreadSpawner::new(api.clone(), Arc::new(runners), options);
            launcher_loop(&config, api.as_ref(), &mut spawner, &flag).expect("launcher");
        });
        Self { stop, thread: Some(thread) }
    }

    /// Mock runner by default, talking HTTP to `url`.
    pub fn mock(url: &str, host_id: &str, cpu: u32, poll: Duration) -> Self {
        Self::start(Arc::new(ApiClient::new(url, None)), host_id, cpu, poll, Runners::new(RunnerKind::Mock))
    }
}

impl Drop for TestLauncher {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

pub fn wait_until(timeout: Duration, mut done: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if done() {
            return true;
        }
        thread::sleep(Duration::from_millis(10));
    }
    done()
}

/// Every job that ran had all of its dependencies completed earlier, judged
/// by the global transition sequence numbers.
pub fn check_dependency_order(jobs: &[JobRecord]) -> Result<(), String> {
    let by_id: BTreeMap<&str, &JobRecord> = jobs.iter().map(|j| (j.spec.job_id.as_str(), j)).collect();
    let seq_of = |job: &JobRecord, state: JobState| job.history.iter().find(|t| t.state == state).map(|t| t.seq);
    for job in jobs {
        let Some(started) = seq_of(job, JobState::Running) else { continue };
        for dep in &job.spec.depends_on {
            let dep_job = by_id
                .get(dep.as_str())
                .or_else(|| by_id.get(format!("{}.{dep}", job.workflow_id).as_str()))
                .ok_or_else(|| format!("{}: dependency {dep} missing", job.spec.job_id))?;
            match seq_of(dep_job, JobState::Completed) {
                Some(done) if done < started => {}
                _ => return Err(format!("{} ran before {dep} completed", job.spec.job_id)),
            }
        }
    }
    Ok(())
}

pub fn all_terminal(jobs: &[JobRecord]) -> bool {
    !jobs.is_empty() && jobs.iter().all(|j| j.state.is_terminal())
}

pub mod contract;
pub mod process;
