//! Host launcher: registers the host, polls for allocations and starts one
//! worker per assignment.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use labflow_core::compute::Assignment;
use labflow_core::workflow::RunnerKind;

use super::runner::Runners;
use super::worker::{worker_loop, WorkerOptions};
use super::ComputeApi;
use crate::client::ClientError;

#[derive(Debug, Clone)]
pub struct LauncherConfig {
    pub host_id: String,
    pub cpu_capacity: u32,
    pub gpu_capacity: u32,
    pub poll_interval: Duration,
}

/// Starts and tracks workers for a launcher.
pub trait WorkerSpawner {
    fn spawn(&mut self, assignment: &Assignment) -> std::io::Result<()>;
    /// Forgets workers that have exited, returning their ids.
    fn reap(&mut self) -> Vec<String>;
    /// Stops every running worker.
    fn shutdown(&mut self);
}

/// Runs each worker on a thread of this process.
pub struct ThreadSpawner {
    api: Arc<dyn ComputeApi>,
    runners: Arc<Runners>,
    options: WorkerOptions,
    stop: Arc<AtomicBool>,
    running: BTreeMap<String, JoinHandle<()>>,
}

impl ThreadSpawner {
    pub fn new(api: Arc<dyn ComputeApi>, runners: Arc<Runners>, options: WorkerOptions) -> Self {
        Self { api, runners, options, stop: Arc::new(AtomicBool::new(false)), running: BTreeMap::new() }
    }
}

impl WorkerSpawner for ThreadSpawner {
    fn spawn(&mut self, assignment: &Assignment) -> std::io::Result<()> {
        let worker_id = assignment.worker_id.clone();
        let (api, runners, options, stop) = (self.api.clone(), self.runners.clone(), self.options.clone(), self.stop.clone());
        let handle = thread::Builder::new().name(worker_id.clone()).spawn(move || {
            if let Err(e) = worker_loop(&worker_id, api.as_ref(), &runners, &options, &stop) {
                tracing::warn!(error = %e, "worker ended early");
            }
        })?;
        self.running.insert(assignment.worker_id.clone(), handle);
        Ok(())
    }

    fn reap(&mut self) -> Vec<String> {
        let done: Vec<String> = self
            .running
            .iter()
            .filter(|(_, h)| h.is_finished())
            .map(|(id, _)| id.clone())
            .collect();
        for id in &done {
            if let Some(handle) = self.running.remove(id) {
                let _ = handle.join();
            }
        }
        done
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for (_, handle) in std::mem::take(&mut self.running) {
            let _ = handle.join();
        }
    }
}

/// Runs each worker as a `labflow worker` child process.
pub struct ProcessSpawner {
    pub exe: PathBuf,
    pub api_url: String,
    pub token: Option<String>,
    pub runner: RunnerKind,
    pub poll_interval: Duration,
    running: BTreeMap<String, Child>,
}

impl ProcessSpawner {
    pub fn new(exe: PathBuf, api_url: &str, token: Option<String>, runner: RunnerKind, poll_interval: Duration) -> Self {
        Self { exe, api_url: api_url.into(), token, runner, poll_interval, running: BTreeMap::new() }
    }
}

impl WorkerSpawner for ProcessSpawner {
    fn spawn(&mut self, assignment: &Assignment) -> std::io::Result<()> {
        let runner = match self.runner {
            RunnerKind::Process => "process",
            RunnerKind::Mock => "mock",
        };
        let mut command = Command::new(&self.exe);
        command
            .args(["--api", &self.api_url, "worker", "--worker-id", &assignment.worker_id, "--runner", runner])
            .arg("--poll-ms")
            .arg(self.poll_interval.as_millis().to_string())
            .stdin(Stdio::null());
        if let Some(token) = &self.token {
            command.env("LABFLOW_TOKEN", token);
        }
        let child = command.spawn()?;
        self.running.insert(assignment.worker_id.clone(), child);
        Ok(())
    }

    fn reap(&mut self) -> Vec<String> {
        let done: Vec<String> = self
            .running
            .iter_mut()
            .filter_map(|(id, c)| (!matches!(c.try_wait(), Ok(None))).then(|| id.clone()))
            .collect();
        for id in &done {
            self.running.remove(id);
        }
        done
    }

    fn shutdown(&mut self) {
        for child in self.running.values() {
            // SAFETY: plain signal to a child we own.
            unsafe {
                libc::kill(child.id() as libc::pid_t, libc::SIGTERM);
            }
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        for (_, mut child) in std::mem::take(&mut self.running) {
            while matches!(child.try_wait(), Ok(None)) && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(50));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Registers the host, then polls until `stop` is set. Assignments whose
/// worker fails to start are retried on the next poll.
pub fn launcher_loop(
    config: &LauncherConfig,
    api: &dyn ComputeApi,
    spawner: &mut dyn WorkerSpawner,
    stop: &AtomicBool,
) -> Result<(), ClientError> {
    let host_id = config.host_id.as_str();
    loop {
        match api.register_host(host_id, config.cpu_capacity, config.gpu_capacity) {
            Ok(_) => {
                tracing::info!(host_id, "host registered");
                break;
            }
            Err(e) if e.code() == Some("DuplicateHost") => {
                tracing::info!(host_id, "host already registered");
                break;
            }
            Err(e) if e.is_transport() && !stop.load(Ordering::Relaxed) => {
                tracing::warn!(error = %e, "cannot register host yet");
                thread::sleep(config.poll_interval);
            }
            Err(e) => return Err(e),
        }
    }

    let mut unstarted: Vec<Assignment> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match api.poll(host_id) {
            Ok(assignments) => unstarted.extend(assignments),
            Err(e) => tracing::warn!(error = %e, "poll failed"),
        }
        unstarted.retain(|assignment| match spawner.spawn(assignment) {
            Ok(()) => {
                tracing::info!(worker_id = %assignment.worker_id, "worker started");
                false
            }
            Err(e) => {
                tracing::error!(worker_id = %assignment.worker_id, error = %e, "worker did not start");
                true
            }
        });
        for worker_id in spawner.reap() {
            tracing::debug!(%worker_id, "worker exited");
        }
        thread::sleep(config.poll_interval);
    }
    spawner.shutdown();
    Ok(())
}
