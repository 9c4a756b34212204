//! The job manager's bookkeeping: hosts, workflows, jobs, workers and the
//! pending worker queue, plus the job state machine that ties them together.
//!
//! Every method is a single state transition; callers serialize access.
//! Timestamps are passed in (milliseconds since the Unix epoch) so that
//! replaying the same calls reproduces the same state.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resources::{
    commit_allocation, release_allocation, Allocation, HostState, ResourceError, ResourceRequest,
    WorkerRequest,
};
use crate::scheduler::plan_allocations;
use crate::workflow::{partition_in_order, JobSpec, JobState, WorkflowError, WorkflowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkerState {
    Pending,
    Launched,
    Active,
    Terminated,
}

/// One entry of a job's state history. `seq` is global across all jobs, so
/// histories of different jobs can be interleaved after the fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JobState,
    pub seq: u64,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub spec: JobSpec,
    pub workflow_id: String,
    pub state: JobState,
    pub worker_id: Option<String>,
    #[serde(skip, default)]
    pub log: Vec<u8>,
    pub log_size: usize,
    pub assets: Vec<String>,
    pub started_at: Option<u64>,
    pub ended_at: Option<u64>,
    /// Set by a workflow cancel while the job is running; the worker kills
    /// its runner when it sees this.
    pub cancel_requested: bool,
    pub history: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorkerRecord {
    pub worker_id: String,
    pub workflow_id: String,
    pub host_id: Option<String>,
    pub assigned_jobs: Vec<String>,
    pub request: ResourceRequest,
    pub state: WorkerState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowRecord {
    pub spec: WorkflowSpec,
    pub workers: Vec<String>,
    pub cancel_requested: bool,
}

/// Roll-up of a workflow's job states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkflowStatus {
    Queued,
    Running,
    Completed,
    Failed,
    Canceled,
}

/// A worker handed to a launcher by [`ComputeState::poll_allocations`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub worker_id: String,
    pub workflow_id: String,
    pub assigned_jobs: Vec<String>,
    pub request: ResourceRequest,
}

/// Answer to a worker asking for its next job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "job", rename_all = "snake_case")]
pub enum NextJob {
    Job(JobSpec),
    /// Some assigned job is still blocked on a dependency.
    Wait,
    /// Nothing left to run; the worker should report done and exit.
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComputeError {
    #[error("host {0} is already registered")]
    DuplicateHost(String),
    #[error("invalid host id {0:?}")]
    InvalidHostId(String),
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("unknown workflow {0}")]
    UnknownWorkflow(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("unknown worker {0}")]
    UnknownWorker(String),
    #[error("job {job} cannot move from {} to {}", .from.as_str(), .to.as_str())]
    IllegalTransition { job: String, from: JobState, to: JobState },
    #[error("worker {0} still has queued or running jobs")]
    WorkerBusy(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
}

#[derive(Debug, Clone, Default)]
pub struct ComputeState {
    hosts: BTreeMap<String, HostState>,
    workflows: BTreeMap<String, WorkflowRecord>,
    jobs: BTreeMap<String, JobRecord>,
    workers: BTreeMap<String, WorkerRecord>,
    pending: Vec<WorkerRequest>,
    allocations: BTreeMap<String, Allocation>,
    workflow_counter: u64,
    submit_counter: u64,
    transition_counter: u64,
}

impl ComputeState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_host(&mut self, host_id: &str, cpu_capacity: u32, gpu_capacity: u32) -> Result<&HostState, ComputeError> {
        if host_id.is_empty() || host_id.contains('/') {
            return Err(ComputeError::InvalidHostId(host_id.into()));
        }
        if self.hosts.contains_key(host_id) {
            return Err(ComputeError::DuplicateHost(host_id.into()));
        }
        Ok(self
            .hosts
            .entry(host_id.into())
            .or_insert_with(|| HostState::new(host_id, cpu_capacity, gpu_capacity)))
    }

    /// Validates and stores a workflow. Job ids are qualified as
    /// `<workflow_id>.<job_id>` so they are unique across workflows.
    pub fn submit_workflow(&mut self, mut spec: WorkflowSpec, owner: &str, now: u64) -> Result<String, ComputeError> {
        spec.workflow_id.clear();
        let order = spec.validate()?;

        self.workflow_counter += 1;
        let workflow_id = format!("wf-{:06}", self.workflow_counter);
        spec.workflow_id = workflow_id.clone();
        spec.owner = owner.into();
        spec.created_at = now;
        for job in &mut spec.jobs {
            job.job_id = qualify(&workflow_id, &job.job_id);
            for dep in &mut job.depends_on {
                *dep = qualify(&workflow_id, dep);
            }
        }

        let partition = partition_in_order(&spec, &order);
        let mut worker_ids = Vec::with_capacity(partition.len());
        for (worker_id, assigned_jobs) in partition {
            for job_id in &assigned_jobs {
                let spec_for_job = spec
                    .jobs
                    .iter()
                    .find(|j| &j.job_id == job_id)
                    .expect("partition only lists known jobs")
                    .clone();
                self.transition_counter += 1;
                self.jobs.insert(
                    job_id.clone(),
                    JobRecord {
                        spec: spec_for_job,
                        workflow_id: workflow_id.clone(),
                        state: JobState::Queued,
                        worker_id: Some(worker_id.clone()),
                        log: Vec::new(),
                        log_size: 0,
                        assets: Vec::new(),
                        started_at: None,
                        ended_at: None,
                        cancel_requested: false,
                        history: alloc::vec![Transition {
                            state: JobState::Queued,
                            seq: self.transition_counter,
                            at: now,
                        }],
                    },
                );
            }
            self.submit_counter += 1;
            self.pending.push(WorkerRequest {
                worker_id: worker_id.clone(),
                workflow_id: workflow_id.clone(),
                request: spec.worker_request,
                submit_seq: self.submit_counter,
            });
            self.workers.insert(
                worker_id.clone(),
                WorkerRecord {
                    worker_id: worker_id.clone(),
                    workflow_id: workflow_id.clone(),
                    host_id: None,
                    assigned_jobs,
                    request: spec.worker_request,
                    state: WorkerState::Pending,
                },
            );
            worker_ids.push(worker_id);
        }

        self.workflows.insert(
            workflow_id.clone(),
            WorkflowRecord {
                spec,
                workers: worker_ids,
                cancel_requested: false,
            },
        );
        Ok(workflow_id)
    }

    /// Plans the pending queue against this host's availability and commits
    /// the result. Launched workers leave the queue, so polling twice never
    /// hands out the same worker again.
    pub fn poll_allocations(&mut self, host_id: &str) -> Result<Vec<Assignment>, ComputeError> {
        let host = self
            .hosts
            .get(host_id)
            .ok_or_else(|| ComputeError::UnknownHost(host_id.into()))?;
        let plan = plan_allocations(&self.pending, core::slice::from_ref(host));

        let mut updated = host.clone();
        for allocation in &plan {
            updated = commit_allocation(&updated, allocation)?;
        }
        self.hosts.insert(host_id.into(), updated);

        let launched: BTreeSet<&str> = plan.iter().map(|a| a.worker_id.as_str()).collect();
        self.pending.retain(|w| !launched.contains(w.worker_id.as_str()));

        let mut assignments = Vec::with_capacity(plan.len());
        for allocation in plan {
            let worker = self
                .workers
                .get_mut(&allocation.worker_id)
                .expect("pending workers have records");
            worker.state = WorkerState::Launched;
            worker.host_id = Some(allocation.host_id.clone());
            assignments.push(Assignment {
                worker_id: worker.worker_id.clone(),
                workflow_id: worker.workflow_id.clone(),
                assigned_jobs: worker.assigned_jobs.clone(),
                request: allocation.request,
            });
            self.allocations.insert(allocation.worker_id.clone(), allocation);
        }
        Ok(assignments)
    }

    pub fn next_ready_job(&mut self, worker_id: &str, now: u64) -> Result<NextJob, ComputeError> {
        let worker = self
            .workers
            .get(worker_id)
            .ok_or_else(|| ComputeError::UnknownWorker(worker_id.into()))?;
        match worker.state {
            WorkerState::Terminated => return Ok(NextJob::Done),
            WorkerState::Pending => return Ok(NextJob::Wait),
            WorkerState::Launched | WorkerState::Active => {}
        }
        let assigned = worker.assigned_jobs.clone();
        self.workers.get_mut(worker_id).expect("checked above").state = WorkerState::Active;

        // Dead dependencies cancel their dependents before anything is picked.
        for job_id in &assigned {
            if self.jobs[job_id].state == JobState::Queued && self.has_dead_dependency(job_id) {
                self.cancel_queued(job_id, now);
            }
        }

        if assigned.iter().any(|j| self.jobs[j].state == JobState::Running) {
            return Ok(NextJob::Wait);
        }
        let mut blocked = false;
        for job_id in &assigned {
            let job = &self.jobs[job_id];
            if job.state != JobState::Queued {
                continue;
            }
            let ready = job
                .spec
                .depends_on
                .iter()
                .all(|d| self.jobs[d].state == JobState::Completed);
            if ready {
                self.transition(job_id, JobState::Running, now)?;
                let job = self.jobs.get_mut(job_id).expect("exists");
                job.started_at = Some(now);
                return Ok(NextJob::Job(job.spec.clone()));
            }
            blocked = true;
        }
        Ok(if blocked { NextJob::Wait } else { NextJob::Done })
    }

    /// Final status report from a worker. Failure or cancellation cancels
    /// every queued job downstream in the same workflow.
    pub fn report_job_status(&mut self, job_id: &str, state: JobState, log_chunk: &[u8], now: u64) -> Result<(), ComputeError> {
        let job = self
            .jobs
            .get(job_id)
            .ok_or_else(|| ComputeError::UnknownJob(job_id.into()))?;
        if job.state != JobState::Running || !state.is_terminal() {
            return Err(ComputeError::IllegalTransition {
                job: job_id.into(),
                from: job.state,
                to: state,
            });
        }
        self.transition(job_id, state, now)?;
        let job = self.jobs.get_mut(job_id).expect("exists");
        job.log.extend_from_slice(log_chunk);
        job.log_size = job.log.len();
        job.ended_at = Some(now);
        if state != JobState::Completed {
            self.cascade_cancel(job_id, now);
        }
        Ok(())
    }

    /// Appends to a running job's log, returning the new log length.
    pub fn append_log(&mut self, job_id: &str, chunk: &[u8]) -> Result<usize, ComputeError> {
        let job = self
            .jobs
            .get_mut(job_id)
            .ok_or_else(|| ComputeError::UnknownJob(job_id.into()))?;
        if job.state != JobState::Running {
            return Err(ComputeError::IllegalTransition {
                job: job_id.into(),
                from: job.state,
                to: JobState::Running,
            });
        }
        job.log.extend_from_slice(chunk);
        job.log_size = job.log.len();
        Ok(job.log_size)
    }

    pub fn attach_asset(&mut self, job_id: &str, asset_id: &str) -> Result<(), ComputeError> {
        let job = self
            .jobs
            .get_mut(job_id)
            .ok_or_else(|| ComputeError::UnknownJob(job_id.into()))?;
        job.assets.push(asset_id.into());
        Ok(())
    }

    /// Terminates a worker and returns its resources to the host. Repeated
    /// calls on a terminated worker are no-ops.
    pub fn worker_done(&mut self, worker_id: &str) -> Result<(), ComputeError> {
        let worker = self
            .workers
            .get(worker_id)
            .ok_or_else(|| ComputeError::UnknownWorker(worker_id.into()))?;
        if worker.state == WorkerState::Terminated {
            return Ok(());
        }
        let busy = worker
            .assigned_jobs
            .iter()
            .any(|j| !self.jobs[j].state.is_terminal());
        if busy {
            return Err(ComputeError::WorkerBusy(worker_id.into()));
        }
        self.release_worker(worker_id)?;
        Ok(())
    }

    /// Cancels queued jobs, flags running ones and drops unlaunched workers.
    /// Returns the number of jobs affected; a finished workflow yields zero.
    pub fn cancel_workflow(&mut self, workflow_id: &str, now: u64) -> Result<usize, ComputeError> {
        let record = self
            .workflows
            .get(workflow_id)
            .ok_or_else(|| ComputeError::UnknownWorkflow(workflow_id.into()))?;
        let job_ids: Vec<String> = record.spec.jobs.iter().map(|j| j.job_id.clone()).collect();
        let worker_ids = record.workers.clone();

        let mut affected = 0;
        for job_id in &job_ids {
            match self.jobs[job_id].state {
                JobState::Queued => {
                    self.transition(job_id, JobState::Canceled, now)?;
                    self.jobs.get_mut(job_id).expect("exists").ended_at = Some(now);
                    affected += 1;
                }
                JobState::Running => {
                    let job = self.jobs.get_mut(job_id).expect("exists");
                    if !job.cancel_requested {
                        job.cancel_requested = true;
                        affected += 1;
                    }
                }
                _ => {}
            }
        }
        for worker_id in &worker_ids {
            if self.workers[worker_id].state == WorkerState::Pending {
                self.pending.retain(|w| &w.worker_id != worker_id);
                self.workers.get_mut(worker_id).expect("exists").state = WorkerState::Terminated;
            }
        }
        if affected > 0 {
            self.workflows.get_mut(workflow_id).expect("exists").cancel_requested = true;
        }
        Ok(affected)
    }

    pub fn host(&self, host_id: &str) -> Result<&HostState, ComputeError> {
        self.hosts
            .get(host_id)
            .ok_or_else(|| ComputeError::UnknownHost(host_id.into()))
    }

    pub fn hosts(&self) -> impl Iterator<Item = &HostState> {
        self.hosts.values()
    }

    pub fn job(&self, job_id: &str) -> Result<&JobRecord, ComputeError> {
        self.jobs
            .get(job_id)
            .ok_or_else(|| ComputeError::UnknownJob(job_id.into()))
    }

    /// Jobs in id order, optionally restricted to one workflow and/or state.
    pub fn jobs<'a>(&'a self, workflow_id: Option<&'a str>, state: Option<JobState>) -> impl Iterator<Item = &'a JobRecord> + 'a {
        self.jobs.values().filter(move |job| {
            workflow_id.is_none_or(|w| job.workflow_id == w) && state.is_none_or(|s| job.state == s)
        })
    }

    /// Log bytes from `from` on; an offset past the end yields nothing.
    pub fn logs(&self, job_id: &str, from: usize) -> Result<&[u8], ComputeError> {
        let job = self.job(job_id)?;
        Ok(job.log.get(from..).unwrap_or(&[]))
    }

    pub fn workflow(&self, workflow_id: &str) -> Result<&WorkflowRecord, ComputeError> {
        self.workflows
            .get(workflow_id)
            .ok_or_else(|| ComputeError::UnknownWorkflow(workflow_id.into()))
    }

    pub fn workflows(&self) -> impl Iterator<Item = &WorkflowRecord> {
        self.workflows.values()
    }

    pub fn workflow_status(&self, workflow_id: &str) -> Result<WorkflowStatus, ComputeError> {
        let record = self.workflow(workflow_id)?;
        let states: Vec<JobState> = record
            .spec
            .jobs
            .iter()
            .map(|j| self.jobs[&j.job_id].state)
            .collect();
        let status = if states.iter().all(|s| s.is_terminal()) {
            if states.iter().all(|&s| s == JobState::Completed) {
                WorkflowStatus::Completed
            } else if states.contains(&JobState::Failed) {
                WorkflowStatus::Failed
            } else {
                WorkflowStatus::Canceled
            }
        } else if states.iter().all(|&s| s == JobState::Queued) {
            WorkflowStatus::Queued
        } else {
            WorkflowStatus::Running
        };
        Ok(status)
    }

    pub fn worker(&self, worker_id: &str) -> Result<&WorkerRecord, ComputeError> {
        self.workers
            .get(worker_id)
            .ok_or_else(|| ComputeError::UnknownWorker(worker_id.into()))
    }

    pub fn pending(&self) -> &[WorkerRequest] {
        &self.pending
    }

    pub fn allocation(&self, worker_id: &str) -> Option<&Allocation> {
        self.allocations.get(worker_id)
    }

    /// Verifies granted + available = capacity on every host.
    pub fn check_resource_ledger(&self) -> Result<(), String> {
        for host in self.hosts.values() {
            let (mut cpu, mut gpu) = (host.cpu_available as u64, host.gpu_available as u64);
            for allocation in self.allocations.values().filter(|a| a.host_id == host.host_id) {
                cpu += allocation.request.cpu as u64;
                gpu += allocation.request.gpu as u64;
            }
            if cpu != host.cpu_capacity as u64 || gpu != host.gpu_capacity as u64 {
                return Err(format!(
                    "host {}: granted + available = {cpu}/{gpu}, capacity {}/{}",
                    host.host_id, host.cpu_capacity, host.gpu_capacity
                ));
            }
        }
        Ok(())
    }

    fn release_worker(&mut self, worker_id: &str) -> Result<(), ComputeError> {
        if let Some(allocation) = self.allocations.get(worker_id) {
            let host = self.host(&allocation.host_id)?;
            let released = release_allocation(host, allocation)?;
            self.hosts.insert(released.host_id.clone(), released);
            self.allocations.remove(worker_id);
        }
        self.workers.get_mut(worker_id).expect("exists").state = WorkerState::Terminated;
        Ok(())
    }

    fn transition(&mut self, job_id: &str, to: JobState, now: u64) -> Result<(), ComputeError> {
        let job = self
            .jobs
            .get_mut(job_id)
            .ok_or_else(|| ComputeError::UnknownJob(job_id.into()))?;
        if !job.state.can_transition_to(to) {
            return Err(ComputeError::IllegalTransition {
                job: job_id.into(),
                from: job.state,
                to,
            });
        }
        self.transition_counter += 1;
        job.state = to;
        job.history.push(Transition {
            state: to,
            seq: self.transition_counter,
            at: now,
        });
        Ok(())
    }

    fn has_dead_dependency(&self, job_id: &str) -> bool {
        self.jobs[job_id]
            .spec
            .depends_on
            .iter()
            .any(|d| matches!(self.jobs[d].state, JobState::Failed | JobState::Canceled))
    }

    fn cancel_queued(&mut self, job_id: &str, now: u64) {
        if self.transition(job_id, JobState::Canceled, now).is_ok() {
            self.jobs.get_mut(job_id).expect("exists").ended_at = Some(now);
            self.cascade_cancel(job_id, now);
        }
    }

    fn cascade_cancel(&mut self, root: &str, now: u64) {
        let workflow_id = self.jobs[root].workflow_id.clone();
        let siblings: Vec<String> = self.workflows[&workflow_id]
            .spec
            .jobs
            .iter()
            .map(|j| j.job_id.clone())
            .collect();
        let mut frontier = alloc::vec![String::from(root)];
        while let Some(dead) = frontier.pop() {
            for job_id in &siblings {
                let job = &self.jobs[job_id];
                if job.state == JobState::Queued
                    && job.spec.depends_on.contains(&dead)
                    && self.transition(job_id, JobState::Canceled, now).is_ok()
                {
                    self.jobs.get_mut(job_id).expect("exists").ended_at = Some(now);
                    frontier.push(job_id.clone());
                }
            }
        }
    }
}

fn qualify(workflow_id: &str, job_id: &str) -> String {
    format!("{workflow_id}.{job_id}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::JobSpec;
    use alloc::vec;

    fn chain_ab(workers: u32) -> WorkflowSpec {
        WorkflowSpec::new(
            vec![JobSpec::new("A"), JobSpec::new("B").depends_on(&["A"])],
            workers,
            ResourceRequest::new(1, 0),
        )
    }

    fn launched(spec: WorkflowSpec) -> (ComputeState, String) {
        let mut state = ComputeState::new();
        state.register_host("h1", 4, 1).unwrap();
        let wf = state.submit_workflow(spec, "alice", 1).unwrap();
        state.poll_allocations("h1").unwrap();
        (state, wf)
    }

    fn job_state(state: &ComputeState, id: &str) -> JobState {
        state.job(id).unwrap().state
    }

    #[test]
    fn host_registration() {
        let mut state = ComputeState::new();
        let host = state.register_host("h1", 4, 1).unwrap().clone();
        assert_eq!(host.available(), ResourceRequest::new(4, 1));
        assert_eq!(
            state.register_host("h1", 4, 1).unwrap_err(),
            ComputeError::DuplicateHost("h1".into())
        );
        assert_eq!(state.register_host("h2", 0, 2).unwrap().cpu_capacity, 0);
    }

    #[test]
    fn submit_chain_one_worker() {
        let mut state = ComputeState::new();
        let wf = state.submit_workflow(chain_ab(1), "alice", 5).unwrap();
        assert_eq!(wf, "wf-000001");
        let record = state.workflow(&wf).unwrap();
        assert_eq!(record.spec.owner, "alice");
        assert_eq!(record.workers, ["wf-000001.w1"]);
        let worker = state.worker("wf-000001.w1").unwrap();
        assert_eq!(worker.assigned_jobs, ["wf-000001.A", "wf-000001.B"]);
        assert!(state.jobs(Some(&wf), None).all(|j| j.state == JobState::Queued));
        assert_eq!(state.pending().len(), 1);
    }

    #[test]
    fn cyclic_submission_rejected_without_side_effects() {
        let mut state = ComputeState::new();
        let spec = WorkflowSpec::new(
            vec![JobSpec::new("A").depends_on(&["B"]), JobSpec::new("B").depends_on(&["A"])],
            1,
            ResourceRequest::new(1, 0),
        );
        assert!(matches!(
            state.submit_workflow(spec, "alice", 0),
            Err(ComputeError::Workflow(WorkflowError::CyclicDependency { .. }))
        ));
        assert_eq!(state.workflows().count(), 0);
        assert!(state.pending().is_empty());
    }

    #[test]
    fn poll_commits_once() {
        let mut state = ComputeState::new();
        state.register_host("h1", 4, 1).unwrap();
        assert!(state.poll_allocations("h1").unwrap().is_empty());
        state
            .submit_workflow(WorkflowSpec::new(vec![JobSpec::new("A")], 1, ResourceRequest::new(1, 0)), "alice", 0)
            .unwrap();
        let first = state.poll_allocations("h1").unwrap();
        assert_eq!(first.len(), 1);
        assert_eq!(state.host("h1").unwrap().available(), ResourceRequest::new(3, 1));
        assert!(state.poll_allocations("h1").unwrap().is_empty());
        assert_eq!(state.worker(&first[0].worker_id).unwrap().state, WorkerState::Launched);
        assert!(matches!(state.poll_allocations("nope"), Err(ComputeError::UnknownHost(_))));
        state.check_resource_ledger().unwrap();
    }

    #[test]
    fn cross_worker_dependency_waits() {
        let (mut state, _) = launched(chain_ab(2));
        assert_eq!(state.next_ready_job("wf-000001.w2", 2).unwrap(), NextJob::Wait);
        let NextJob::Job(a) = state.next_ready_job("wf-000001.w1", 2).unwrap() else {
            panic!("A should be ready");
        };
        assert_eq!(a.job_id, "wf-000001.A");
        // A running: B still waits.
        assert_eq!(state.next_ready_job("wf-000001.w2", 3).unwrap(), NextJob::Wait);
        state.report_job_status("wf-000001.A", JobState::Completed, b"ok\n", 4).unwrap();
        let NextJob::Job(b) = state.next_ready_job("wf-000001.w2", 5).unwrap() else {
            panic!("B should be ready");
        };
        assert_eq!(b.job_id, "wf-000001.B");
        assert_eq!(job_state(&state, "wf-000001.B"), JobState::Running);
    }

    #[test]
    fn failed_dependency_cascades() {
        let (mut state, _) = launched(chain_ab(2));
        state.next_ready_job("wf-000001.w1", 2).unwrap();
        state.report_job_status("wf-000001.A", JobState::Failed, b"boom", 3).unwrap();
        assert_eq!(job_state(&state, "wf-000001.B"), JobState::Canceled);
        assert_eq!(state.next_ready_job("wf-000001.w2", 4).unwrap(), NextJob::Done);
        assert_eq!(state.workflow_status("wf-000001").unwrap(), WorkflowStatus::Failed);
    }

    #[test]
    fn report_rules() {
        let (mut state, _) = launched(chain_ab(1));
        assert!(matches!(
            state.report_job_status("wf-000001.A", JobState::Completed, b"", 2),
            Err(ComputeError::IllegalTransition { .. })
        ));
        state.next_ready_job("wf-000001.w1", 2).unwrap();
        state.report_job_status("wf-000001.A", JobState::Completed, b"done\n", 3).unwrap();
        assert_eq!(state.logs("wf-000001.A", 0).unwrap(), b"done\n");
        assert!(matches!(
            state.report_job_status("wf-000001.A", JobState::Failed, b"", 4),
            Err(ComputeError::IllegalTransition { .. })
        ));
        assert!(matches!(
            state.report_job_status("ghost", JobState::Failed, b"", 4),
            Err(ComputeError::UnknownJob(_))
        ));
    }

    #[test]
    fn log_appends_and_offsets() {
        let (mut state, _) = launched(chain_ab(1));
        assert!(matches!(
            state.append_log("wf-000001.A", b"early"),
            Err(ComputeError::IllegalTransition { .. })
        ));
        state.next_ready_job("wf-000001.w1", 2).unwrap();
        assert_eq!(state.append_log("wf-000001.A", b"epoch 1\n").unwrap(), 8);
        assert_eq!(state.append_log("wf-000001.A", b"epoch 2\n").unwrap(), 16);
        assert_eq!(state.logs("wf-000001.A", 0).unwrap(), b"epoch 1\nepoch 2\n");
        assert_eq!(state.logs("wf-000001.A", 8).unwrap(), b"epoch 2\n");
        assert_eq!(state.logs("wf-000001.A", 99).unwrap(), b"");
    }

    #[test]
    fn worker_done_releases_once() {
        let (mut state, _) = launched(chain_ab(1));
        let worker = "wf-000001.w1";
        assert_eq!(state.host("h1").unwrap().available(), ResourceRequest::new(3, 1));
        state.next_ready_job(worker, 2).unwrap();
        assert_eq!(state.worker_done(worker), Err(ComputeError::WorkerBusy(worker.into())));
        state.report_job_status("wf-000001.A", JobState::Completed, b"", 3).unwrap();
        state.next_ready_job(worker, 4).unwrap();
        state.report_job_status("wf-000001.B", JobState::Completed, b"", 5).unwrap();
        assert_eq!(state.next_ready_job(worker, 6).unwrap(), NextJob::Done);
        state.worker_done(worker).unwrap();
        assert_eq!(state.worker(worker).unwrap().state, WorkerState::Terminated);
        assert_eq!(state.host("h1").unwrap().available(), ResourceRequest::new(4, 1));
        state.worker_done(worker).unwrap();
        assert_eq!(state.host("h1").unwrap().available(), ResourceRequest::new(4, 1));
        state.check_resource_ledger().unwrap();
        assert_eq!(state.workflow_status("wf-000001").unwrap(), WorkflowStatus::Completed);
    }

    #[test]
    fn cancel_semantics() {
        let mut state = ComputeState::new();
        state.register_host("h1", 1, 0).unwrap();
        let spec = WorkflowSpec::new(
            vec![JobSpec::new("A"), JobSpec::new("B")],
            2,
            ResourceRequest::new(1, 0),
        );
        let wf = state.submit_workflow(spec, "alice", 0).unwrap();
        state.poll_allocations("h1").unwrap();
        state.next_ready_job("wf-000001.w1", 1).unwrap();
        // A running on w1, B queued on an unlaunched w2.
        assert_eq!(state.cancel_workflow(&wf, 2).unwrap(), 2);
        assert!(state.job("wf-000001.A").unwrap().cancel_requested);
        assert_eq!(job_state(&state, "wf-000001.B"), JobState::Canceled);
        assert_eq!(state.worker("wf-000001.w2").unwrap().state, WorkerState::Terminated);
        assert!(state.pending().is_empty());

        state.report_job_status("wf-000001.A", JobState::Canceled, b"killed\n", 3).unwrap();
        assert_eq!(state.next_ready_job("wf-000001.w1", 4).unwrap(), NextJob::Done);
        state.worker_done("wf-000001.w1").unwrap();
        assert_eq!(state.workflow_status(&wf).unwrap(), WorkflowStatus::Canceled);
        assert_eq!(state.cancel_workflow(&wf, 5).unwrap(), 0);
        assert!(matches!(state.cancel_workflow("wf-404", 5), Err(ComputeError::UnknownWorkflow(_))));
        state.check_resource_ledger().unwrap();
    }

    #[test]
    fn history_follows_relation() {
        let (mut state, _) = launched(chain_ab(1));
        state.next_ready_job("wf-000001.w1", 2).unwrap();
        state.report_job_status("wf-000001.A", JobState::Completed, b"", 3).unwrap();
        let history = &state.job("wf-000001.A").unwrap().history;
        let states: Vec<_> = history.iter().map(|t| t.state).collect();
        assert_eq!(states, [JobState::Queued, JobState::Running, JobState::Completed]);
        assert!(history.windows(2).all(|w| w[0].seq < w[1].seq));
    }

    #[test]
    fn list_filters() {
        let (mut state, wf) = launched(chain_ab(1));
        state.next_ready_job("wf-000001.w1", 2).unwrap();
        let running: Vec<_> = state.jobs(None, Some(JobState::Running)).map(|j| j.spec.job_id.clone()).collect();
        assert_eq!(running, ["wf-000001.A"]);
        assert_eq!(state.jobs(Some(&wf), None).count(), 2);
        assert_eq!(state.jobs(Some("wf-9"), None).count(), 0);
    }
}
