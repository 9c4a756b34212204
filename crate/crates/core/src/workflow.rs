//! Workflow and job specifications: validation, dependency ordering and the
//! static partition of jobs onto workers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::resources::ResourceRequest;

/// How a job's command is executed by a worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunnerKind {
    /// `command` is an argument vector run as a child process.
    Process,
    /// `command` is a list of scripted directives replayed without spawning.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub job_id: String,
    #[serde(default)]
    pub name: String,
    /// `None` defers to the launcher's default runner.
    #[serde(default)]
    pub runner_kind: Option<RunnerKind>,
    #[serde(default)]
    pub command: Vec<String>,
    /// Experiment hyperparameters, kept verbatim for display.
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_uri: Option<String>,
}

impl JobSpec {
    pub fn new(job_id: impl Into<String>) -> Self {
        let job_id = job_id.into();
        Self {
            name: job_id.clone(),
            job_id,
            runner_kind: None,
            command: Vec::new(),
            parameters: BTreeMap::new(),
            depends_on: Vec::new(),
            output_uri: None,
        }
    }

    pub fn depends_on(mut self, deps: &[&str]) -> Self {
        self.depends_on = deps.iter().map(|d| String::from(*d)).collect();
        self
    }

    pub fn with_runner(mut self, kind: RunnerKind, command: &[&str]) -> Self {
        self.runner_kind = Some(kind);
        self.command = command.iter().map(|c| String::from(*c)).collect();
        self
    }
}

/// Lifecycle of a job. `Completed`, `Failed` and `Canceled` are absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Failed,
    Canceled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Completed | Self::Failed | Self::Canceled)
    }

    pub fn can_transition_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Canceled) | (Running, Completed | Failed | Canceled)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Queued => "QUEUED",
            Self::Running => "RUNNING",
            Self::Completed => "COMPLETED",
            Self::Failed => "FAILED",
            Self::Canceled => "CANCELED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Queued, Self::Running, Self::Completed, Self::Failed, Self::Canceled]
            .into_iter()
            .find(|state| state.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    /// Assigned by the service on submission.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub workflow_id: String,
    /// Assigned by the service on submission.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub owner: String,
    pub jobs: Vec<JobSpec>,
    pub num_workers: u32,
    pub worker_request: ResourceRequest,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub created_at: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

impl WorkflowSpec {
    pub fn new(jobs: Vec<JobSpec>, num_workers: u32, worker_request: ResourceRequest) -> Self {
        Self {
            workflow_id: String::new(),
            owner: String::new(),
            jobs,
            num_workers,
            worker_request,
            created_at: 0,
        }
    }

    /// Checks every structural invariant and returns job indices in
    /// topological order.
    pub fn validate(&self) -> Result<Vec<usize>, WorkflowError> {
        if self.worker_request.validate().is_err() {
            return Err(WorkflowError::InvalidResourceRequest);
        }
        if self.num_workers == 0 || self.num_workers as usize > self.jobs.len() {
            return Err(WorkflowError::InvalidWorkerCount {
                num_workers: self.num_workers,
                jobs: self.jobs.len(),
            });
        }
        let mut index = BTreeMap::new();
        for (i, job) in self.jobs.iter().enumerate() {
            if !is_valid_job_id(&job.job_id) {
                return Err(WorkflowError::InvalidJobId(job.job_id.clone()));
            }
            if index.insert(job.job_id.as_str(), i).is_some() {
                return Err(WorkflowError::DuplicateJob(job.job_id.clone()));
            }
        }
        for job in &self.jobs {
            for dep in &job.depends_on {
                if !index.contains_key(dep.as_str()) {
                    return Err(WorkflowError::UnknownDependency {
                        job: job.job_id.clone(),
                        dependency: dep.clone(),
                    });
                }
            }
        }
        topological_order(&self.jobs, &index)
    }
}

/// Job ids are path segments in the API and get qualified with the
/// workflow id, so they are restricted to `[A-Za-z0-9_-]`.
pub fn is_valid_job_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("dependency cycle: {}", .cycle.join(" -> "))]
    CyclicDependency { cycle: Vec<String> },
    #[error("job {job} depends on unknown job {dependency}")]
    UnknownDependency { job: String, dependency: String },
    #[error("num_workers must be between 1 and the number of jobs ({jobs}), got {num_workers}")]
    InvalidWorkerCount { num_workers: u32, jobs: usize },
    #[error("duplicate job id {0}")]
    DuplicateJob(String),
    #[error("invalid job id {0:?}: use letters, digits, '-' or '_'")]
    InvalidJobId(String),
    #[error("worker_request must ask for at least one cpu or gpu")]
    InvalidResourceRequest,
}

/// Kahn's algorithm; among ready jobs the earliest submitted goes first.
fn topological_order(jobs: &[JobSpec], index: &BTreeMap<&str, usize>) -> Result<Vec<usize>, WorkflowError> {
    let n = jobs.len();
    let mut waiting_on = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, job) in jobs.iter().enumerate() {
        let deps: BTreeSet<usize> = job.depends_on.iter().map(|d| index[d.as_str()]).collect();
        waiting_on[i] = deps.len();
        for d in deps {
            dependents[d].push(i);
        }
    }

    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| waiting_on[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &d in &dependents[next] {
            waiting_on[d] -= 1;
            if waiting_on[d] == 0 {
                ready.insert(d);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every unordered job still waits on another unordered job, so walking
    // dependencies from any of them must revisit a job.
    let stuck: Vec<bool> = waiting_on.iter().map(|&w| w > 0).collect();
    let mut current = (0..n).find(|&i| stuck[i]).expect("some job is stuck");
    let mut seen = BTreeMap::new();
    let mut walk = Vec::new();
    while !seen.contains_key(&current) {
        seen.insert(current, walk.len());
        walk.push(current);
        current = jobs[current]
            .depends_on
            .iter()
            .map(|d| index[d.as_str()])
            .find(|&d| stuck[d])
            .expect("stuck job waits on a stuck dependency");
    }
    let mut cycle: Vec<String> = walk[seen[&current]..]
        .iter()
        .map(|&i| jobs[i].job_id.clone())
        .collect();
    cycle.push(jobs[current].job_id.clone());
    Err(WorkflowError::CyclicDependency { cycle })
}

/// Deals jobs round-robin to `num_workers` workers in topological order.
///
/// Worker ids are `<workflow_id>.w<n>` (1-based), or `w<n>` when the
/// workflow has no id yet. Each worker's list keeps the topological order.
pub fn partition_jobs(spec: &WorkflowSpec) -> Result<Vec<(String, Vec<String>)>, WorkflowError> {
    let order = spec.validate()?;
    Ok(partition_in_order(spec, &order))
}

/// Round-robin partition over an already validated topological `order`.
pub(crate) fn partition_in_order(spec: &WorkflowSpec, order: &[usize]) -> Vec<(String, Vec<String>)> {
    let workers = spec.num_workers as usize;
    let mut lists: Vec<Vec<String>> = vec![Vec::new(); workers];
    for (position, &job) in order.iter().enumerate() {
        lists[position % workers].push(spec.jobs[job].job_id.clone());
    }
    lists
        .into_iter()
        .enumerate()
        .map(|(i, jobs)| {
            let worker_id = if spec.workflow_id.is_empty() {
                format!("w{}", i + 1)
            } else {
                format!("{}.w{}", spec.workflow_id, i + 1)
            };
            (worker_id, jobs)
        })
        .collect()
}
