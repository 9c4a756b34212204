//! The compute agent: a host launcher that starts workers for its
//! allocations, and the worker loop that runs jobs.

pub mod launcher;
pub mod runner;
pub mod worker;

use std::sync::Arc;

use labflow_core::compute::{Assignment, NextJob};
use labflow_core::platform::AssetRef;
use labflow_core::resources::HostState;
use labflow_core::workflow::JobState;
use labflow_core::{Command, Outcome};

use crate::client::{ApiClient, ApiFailure, ClientError, LogAck};
use crate::http::ApiError;
use crate::service::{Hub, ServiceError};

/// The agent-facing half of the API.
pub trait ComputeApi: Send + Sync {
    fn register_host(&self, host_id: &str, cpu: u32, gpu: u32) -> Result<HostState, ClientError>;
    fn poll(&self, host_id: &str) -> Result<Vec<Assignment>, ClientError>;
    fn next_job(&self, worker_id: &str) -> Result<NextJob, ClientError>;
    fn append_log(&self, job_id: &str, chunk: &[u8]) -> Result<LogAck, ClientError>;
    fn report(&self, job_id: &str, state: JobState, log: &[u8], assets: &[AssetRef]) -> Result<Vec<String>, ClientError>;
    fn worker_done(&self, worker_id: &str) -> Result<(), ClientError>;
}

impl ComputeApi for ApiClient {
    fn register_host(&self, host_id: &str, cpu: u32, gpu: u32) -> Result<HostState, ClientError> {
        ApiClient::register_host(self, host_id, cpu, gpu)
    }

    fn poll(&self, host_id: &str) -> Result<Vec<Assignment>, ClientError> {
        ApiClient::poll(self, host_id)
    }

    fn next_job(&self, worker_id: &str) -> Result<NextJob, ClientError> {
        ApiClient::next_job(self, worker_id)
    }

    fn append_log(&self, job_id: &str, chunk: &[u8]) -> Result<LogAck, ClientError> {
        ApiClient::append_log(self, job_id, chunk)
    }

    fn report(&self, job_id: &str, state: JobState, log: &[u8], assets: &[AssetRef]) -> Result<Vec<String>, ClientError> {
        self.report_status(job_id, state, log, assets)
    }

    fn worker_done(&self, worker_id: &str) -> Result<(), ClientError> {
        ApiClient::worker_done(self, worker_id)
    }
}

/// Talks to a [`Hub`] in the same process, skipping HTTP.
#[derive(Clone)]
pub struct LocalApi(pub Arc<Hub>);

impl LocalApi {
    fn run(&self, command: Command) -> Result<Outcome, ClientError> {
        self.0.execute(command).map_err(local_failure)
    }
}

fn local_failure(e: ServiceError) -> ClientError {
    let e = ApiError::from(e);
    ClientError::Api(ApiFailure { status: e.status.as_u16(), code: e.code, message: e.message, field: e.field })
}

fn unexpected(outcome: Outcome) -> ClientError {
    ClientError::Decode { url: "local".into(), message: format!("unexpected outcome {outcome:?}") }
}

impl ComputeApi for LocalApi {
    fn register_host(&self, host_id: &str, cpu: u32, gpu: u32) -> Result<HostState, ClientError> {
        match self.run(Command::RegisterHost { host_id: host_id.into(), cpu_capacity: cpu, gpu_capacity: gpu })? {
            Outcome::Host(host) => Ok(host),
            other => Err(unexpected(other)),
        }
    }

    fn poll(&self, host_id: &str) -> Result<Vec<Assignment>, ClientError> {
        match self.run(Command::PollAllocations { host_id: host_id.into() })? {
            Outcome::Assignments(list) => Ok(list),
            other => Err(unexpected(other)),
        }
    }

    fn next_job(&self, worker_id: &str) -> Result<NextJob, ClientError> {
        let now = self.0.now();
        match self.run(Command::NextJob { worker_id: worker_id.into(), now })? {
            Outcome::Next(next) => Ok(next),
            other => Err(unexpected(other)),
        }
    }

    fn append_log(&self, job_id: &str, chunk: &[u8]) -> Result<LogAck, ClientError> {
        let offset = match self.run(Command::AppendLog { job_id: job_id.into(), chunk: chunk.to_vec() })? {
            Outcome::Offset(n) => n,
            other => return Err(unexpected(other)),
        };
        let cancel_requested = self
            .0
            .read(|p| p.compute().job(job_id).map(|j| j.cancel_requested).unwrap_or(false));
        Ok(LogAck { offset, cancel_requested })
    }

    fn report(&self, job_id: &str, state: JobState, log: &[u8], assets: &[AssetRef]) -> Result<Vec<String>, ClientError> {
        let now = self.0.now();
        let command = Command::ReportStatus { job_id: job_id.into(), state, log: log.to_vec(), assets: assets.to_vec(), now };
        match self.run(command)? {
            Outcome::AssetIds(ids) => Ok(ids),
            other => Err(unexpected(other)),
        }
    }

    fn worker_done(&self, worker_id: &str) -> Result<(), ClientError> {
        self.run(Command::WorkerDone { worker_id: worker_id.into() }).map(drop)
    }
}
