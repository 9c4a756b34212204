//! The worker loop: ask for the next job, run it, stream its log, report
//! the outcome, repeat until the worker has nothing left.

use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use labflow_core::compute::NextJob;
use labflow_core::platform::AssetRef;
use labflow_core::workflow::{JobSpec, JobState};

use super::runner::{ExitKind, RunnerEvent, Runners, ASSET_MARKER};
use super::ComputeApi;
use crate::client::ClientError;

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    /// Pause between `next` requests while waiting on dependencies, and the
    /// upper bound on how long a cancel request goes unnoticed.
    pub poll_interval: Duration,
    pub flush_interval: Duration,
    pub flush_bytes: usize,
    /// Attempts for a final status report when the server is unreachable.
    pub report_attempts: u32,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        Self {
            poll_interval: Duration::from_secs(2),
            flush_interval: Duration::from_secs(1),
            flush_bytes: 8 * 1024,
            report_attempts: 30,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkerError {
    #[error("worker {worker_id}: {source}")]
    Api { worker_id: String, source: ClientError },
    #[error("worker {0} stopped before finishing")]
    Stopped(String),
}

/// Runs jobs for `worker_id` until the server says it is done, then
/// releases the worker. Transport errors are retried; API errors end the
/// loop.
pub fn worker_loop(
    worker_id: &str,
    api: &dyn ComputeApi,
    runners: &Runners,
    options: &WorkerOptions,
    stop: &AtomicBool,
) -> Result<(), WorkerError> {
    let fail = |source| WorkerError::Api { worker_id: worker_id.into(), source };
    loop {
        if stop.load(Ordering::Relaxed) {
            return Err(WorkerError::Stopped(worker_id.into()));
        }
        match api.next_job(worker_id) {
            Ok(NextJob::Job(job)) => run_one(api, runners, options, &job).map_err(fail)?,
            Ok(NextJob::Wait) => thread::sleep(options.poll_interval),
            Ok(NextJob::Done) => break,
            Err(e) if e.is_transport() => {
                tracing::warn!(worker_id, error = %e, "next job request failed, retrying");
                thread::sleep(options.poll_interval);
            }
            Err(e) => return Err(fail(e)),
        }
    }
    retry(options, || api.worker_done(worker_id)).map_err(fail)
}

fn retry<T>(options: &WorkerOptions, mut call: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
    let mut attempt = 1;
    loop {
        match call() {
            Err(e) if e.is_transport() && attempt < options.report_attempts => {
                attempt += 1;
                thread::sleep(options.poll_interval.min(Duration::from_secs(1)));
            }
            other => return other,
        }
    }
}

/// Collects `##asset` lines from a byte stream that may split lines across
/// chunks.
#[derive(Debug, Default)]
pub struct AssetScanner {
    partial: Vec<u8>,
    found: Vec<AssetRef>,
}

impl AssetScanner {
    pub fn feed(&mut self, bytes: &[u8]) {
        for &b in bytes {
            if b == b'\n' {
                let line = std::mem::take(&mut self.partial);
                self.scan(&line);
            } else {
                self.partial.push(b);
            }
        }
    }

    pub fn finish(mut self) -> Vec<AssetRef> {
        let line = std::mem::take(&mut self.partial);
        self.scan(&line);
        self.found
    }

    fn scan(&mut self, line: &[u8]) {
        let Ok(line) = std::str::from_utf8(line) else { return };
        let Some(rest) = line.trim_end_matches('\r').strip_prefix(ASSET_MARKER) else { return };
        if !rest.starts_with(' ') {
            return;
        }
        let words: Vec<&str> = rest.split_whitespace().collect();
        match words.as_slice() {
            [uri] => self.found.push(AssetRef { uri: (*uri).into(), kind: None }),
            [kind, uri] => self.found.push(AssetRef { uri: (*uri).into(), kind: Some((*kind).into()) }),
            _ => {}
        }
    }
}

fn run_one(api: &dyn ComputeApi, runners: &Runners, options: &WorkerOptions, job: &JobSpec) -> Result<(), ClientError> {
    let job_id = job.job_id.as_str();
    let started = runners.for_job(job).and_then(|runner| runner.start(job));
    let mut execution = match started {
        Ok(execution) => execution,
        Err(e) => {
            tracing::warn!(job_id, error = %e, "job did not start");
            let diagnostic = format!("labflow: {e}\n");
            return report(api, options, job_id, JobState::Failed, diagnostic.as_bytes(), &[]);
        }
    };

    let check_every = options.poll_interval.min(options.flush_interval);
    let mut scanner = AssetScanner::default();
    let mut buffer = Vec::new();
    let mut last_check = Instant::now();
    let mut cancel_requested = false;
    let exit = loop {
        let wait = check_every.saturating_sub(last_check.elapsed());
        match execution.next_event(wait.max(Duration::from_millis(1))) {
            Some(RunnerEvent::Exited(kind)) => break kind,
            Some(RunnerEvent::Output(bytes)) => {
                scanner.feed(&bytes);
                buffer.extend_from_slice(&bytes);
            }
            None => {}
        }
        if buffer.len() >= options.flush_bytes || last_check.elapsed() >= check_every {
            last_check = Instant::now();
            match api.append_log(job_id, &buffer) {
                Ok(ack) => {
                    buffer.clear();
                    if ack.cancel_requested && !cancel_requested {
                        cancel_requested = true;
                        execution.kill();
                    }
                }
                Err(e) if e.is_transport() => tracing::warn!(job_id, error = %e, "log flush failed, will retry"),
                Err(e) => {
                    // The job is no longer running on the server side.
                    tracing::warn!(job_id, error = %e, "log flush rejected, stopping job");
                    execution.kill();
                    return Ok(());
                }
            }
        }
    };
    let state = match exit {
        _ if cancel_requested => JobState::Canceled,
        ExitKind::Success => JobState::Completed,
        ExitKind::Failure | ExitKind::Killed => JobState::Failed,
    };
    let assets = if state == JobState::Completed { scanner.finish() } else { Vec::new() };
    report(api, options, job_id, state, &buffer, &assets)
}

fn report(api: &dyn ComputeApi, options: &WorkerOptions, job_id: &str, state: JobState, log: &[u8], assets: &[AssetRef]) -> Result<(), ClientError> {
    retry(options, || api.report(job_id, state, log, assets)).map(|ids| {
        tracing::info!(job_id, state = state.as_str(), assets = ids.len(), "job finished");
    })
}
