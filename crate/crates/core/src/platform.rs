//! The whole service state behind one value: compute bookkeeping, content
//! registry, access graph and credentials, with authorization applied at
//! this boundary.
//!
//! Mutations are expressed as [`Command`]s. Applying the same sequence of
//! commands to a fresh [`Platform`] reproduces the same state, which is what
//! the journal relies on: every input that is not a pure function of the
//! state (timestamps, salts, token digests) travels inside the command.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{AccessDecision, AccessError, AccessGraph, Action, GraphEdge};
use crate::auth::{AuthError, Credential, Credentials};
use crate::compute::{
    Assignment, ComputeError, ComputeState, JobRecord, NextJob, WorkerRecord, WorkflowRecord,
    WorkflowStatus,
};
use crate::registry::{AssetRecord, ContentDocument, ContentType, Registry, RegistryError, SearchHit};
use crate::resources::{HostState, ResourceError, ResourceRequest};
use crate::workflow::{JobSpec, JobState, RunnerKind, WorkflowError, WorkflowSpec};

/// Who is asking. Launcher agents act on hosts, workers and jobs without a
/// user identity; anonymous callers only see public content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caller {
    Agent,
    User(String),
    Anonymous,
}

impl Caller {
    pub fn user(&self) -> Option<&str> {
        match self {
            Self::User(user) => Some(user),
            _ => None,
        }
    }
}

/// An asset produced by a job. Accepts a bare URI string or an object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "AssetRefWire")]
pub struct AssetRef {
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssetRefWire {
    Uri(String),
    Full {
        uri: String,
        #[serde(default)]
        kind: Option<String>,
    },
}

impl From<AssetRefWire> for AssetRef {
    fn from(wire: AssetRefWire) -> Self {
        match wire {
            AssetRefWire::Uri(uri) => Self { uri, kind: None },
            AssetRefWire::Full { uri, kind } => Self { uri, kind },
        }
    }
}

/// Asset kind recorded when a worker does not name one.
pub const DEFAULT_ASSET_KIND: &str = "job-output";

/// Resources requested by the single worker of a launched app service.
pub const SERVICE_WORKER_REQUEST: ResourceRequest = ResourceRequest::new(1, 0);

mod base64_bytes {
    use alloc::string::String;
    use alloc::vec::Vec;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

/// A journaled state mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    CreateUser {
        username: String,
        attributes: BTreeMap<String, String>,
        credential: Credential,
    },
    IssueToken {
        username: String,
        token_digest: String,
        now: u64,
        expires_at: u64,
    },
    CreateTeam {
        principal: String,
        attributes: BTreeMap<String, String>,
    },
    AddMember {
        principal: String,
        team: String,
        user: String,
    },
    RemoveMember {
        principal: String,
        team: String,
        user: String,
    },
    Grant {
        principal: String,
        subject: String,
        actions: BTreeSet<Action>,
        resource: String,
    },
    Revoke {
        principal: String,
        subject: String,
        actions: BTreeSet<Action>,
        resource: String,
    },
    RegisterHost {
        host_id: String,
        cpu_capacity: u32,
        gpu_capacity: u32,
    },
    SubmitWorkflow {
        principal: String,
        spec: WorkflowSpec,
        now: u64,
    },
    PollAllocations {
        host_id: String,
    },
    NextJob {
        worker_id: String,
        now: u64,
    },
    ReportStatus {
        job_id: String,
        state: JobState,
        #[serde(with = "base64_bytes")]
        log: Vec<u8>,
        assets: Vec<AssetRef>,
        now: u64,
    },
    AppendLog {
        job_id: String,
        #[serde(with = "base64_bytes")]
        chunk: Vec<u8>,
    },
    WorkerDone {
        worker_id: String,
    },
    CancelWorkflow {
        principal: String,
        workflow_id: String,
        now: u64,
    },
    RegisterContent {
        principal: String,
        document: ContentDocument,
    },
    DeleteContent {
        principal: String,
        content_id: String,
    },
    RegisterAsset {
        principal: String,
        asset: AssetRecord,
    },
    DeleteAsset {
        principal: String,
        asset_id: String,
    },
    LaunchService {
        principal: String,
        content_id: String,
        now: u64,
    },
}

/// Result of applying a [`Command`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Done,
    Id(String),
    Host(HostState),
    Assignments(Vec<Assignment>),
    Next(NextJob),
    Offset(usize),
    Edge(GraphEdge),
    Count(usize),
    AssetIds(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlatformError {
    #[error(transparent)]
    Compute(#[from] ComputeError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("{user} may not {} {resource}", .action.as_str())]
    AccessDenied {
        user: String,
        action: Action,
        resource: String,
    },
    #[error("user {0} already exists")]
    DuplicateUser(String),
    #[error("authentication required")]
    Unauthenticated,
}

impl From<WorkflowError> for PlatformError {
    fn from(e: WorkflowError) -> Self {
        Self::Compute(ComputeError::Workflow(e))
    }
}

impl PlatformError {
    fn denied(caller: &Caller, action: Action, resource: &str) -> Self {
        Self::AccessDenied {
            user: caller.user().unwrap_or("anonymous").into(),
            action,
            resource: resource.into(),
        }
    }

    /// Stable machine-readable error code for API responses.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Compute(e) => match e {
                ComputeError::DuplicateHost(_) => "DuplicateHost",
                ComputeError::InvalidHostId(_) => "InvalidHostId",
                ComputeError::UnknownHost(_) => "UnknownHost",
                ComputeError::UnknownWorkflow(_) => "UnknownWorkflow",
                ComputeError::UnknownJob(_) => "UnknownJob",
                ComputeError::UnknownWorker(_) => "UnknownWorker",
                ComputeError::IllegalTransition { .. } => "IllegalTransition",
                ComputeError::WorkerBusy(_) => "WorkerBusy",
                ComputeError::Workflow(w) => match w {
                    WorkflowError::CyclicDependency { .. } => "CyclicDependency",
                    WorkflowError::UnknownDependency { .. } => "UnknownDependency",
                    WorkflowError::InvalidWorkerCount { .. } => "InvalidWorkerCount",
                    WorkflowError::DuplicateJob(_) => "DuplicateJob",
                    WorkflowError::InvalidJobId(_) => "InvalidJobId",
                    WorkflowError::InvalidResourceRequest => "InvalidResourceRequest",
                },
                ComputeError::Resource(r) => match r {
                    ResourceError::EmptyRequest => "InvalidResourceRequest",
                    ResourceError::InsufficientResources { .. } => "InsufficientResources",
                    ResourceError::CapacityOverflow { .. } => "CapacityOverflow",
                    ResourceError::HostMismatch { .. } => "HostMismatch",
                },
            },
            Self::Registry(e) => match e {
                RegistryError::DuplicateContent { .. } => "DuplicateContent",
                RegistryError::SchemaViolation { .. } => "SchemaViolation",
                RegistryError::UnknownContentType(_) => "UnknownContentType",
                RegistryError::UnknownContent(_) => "UnknownContent",
                RegistryError::UnknownAsset(_) => "UnknownAsset",
                RegistryError::NotLaunchable(_) => "NotLaunchable",
            },
            Self::Access(e) => match e {
                AccessError::UnknownNode(_) => "UnknownNode",
                AccessError::DuplicateNode(_) => "DuplicateNode",
                AccessError::InvalidNodeId(_) => "InvalidUsername",
                AccessError::KindMismatch { .. } => "KindMismatch",
                AccessError::NotTeamOwner { .. } => "NotTeamOwner",
                AccessError::NotOwner { .. } => "NotOwner",
                AccessError::EmptyActionSet => "EmptyActionSet",
            },
            Self::Auth(AuthError::BadCredentials) => "BadCredentials",
            Self::Auth(AuthError::ExpiredToken) => "ExpiredToken",
            Self::AccessDenied { .. } => "AccessDenied",
            Self::DuplicateUser(_) => "DuplicateUser",
            Self::Unauthenticated => "Unauthenticated",
        }
    }

    /// The offending field, for schema violations.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Registry(RegistryError::SchemaViolation { field, .. }) => Some(field),
            _ => None,
        }
    }
}

/// Snapshot of one workflow with its jobs and workers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowView {
    pub workflow: WorkflowRecord,
    pub status: WorkflowStatus,
    pub jobs: Vec<JobRecord>,
    pub workers: Vec<WorkerRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct Platform {
    compute: ComputeState,
    registry: Registry,
    access: AccessGraph,
    credentials: Credentials,
}

impl Platform {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn compute(&self) -> &ComputeState {
        &self.compute
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn access(&self) -> &AccessGraph {
        &self.access
    }

    pub fn apply(&mut self, command: &Command) -> Result<Outcome, PlatformError> {
        match command {
            Command::CreateUser {
                username,
                attributes,
                credential,
            } => {
                if self.credentials.has_user(username) || self.access.node(username).is_ok() {
                    return Err(PlatformError::DuplicateUser(username.clone()));
                }
                self.access.create_user(username, attributes.clone())?;
                self.credentials.set(username, credential.clone());
                Ok(Outcome::Id(username.clone()))
            }
            Command::IssueToken {
                username,
                token_digest,
                now,
                expires_at,
            } => {
                self.ensure_user(username)?;
                self.credentials
                    .issue_digest(username, token_digest, *now, *expires_at);
                Ok(Outcome::Done)
            }
            Command::CreateTeam { principal, attributes } => {
                Ok(Outcome::Id(self.access.create_team(principal, attributes.clone())?))
            }
            Command::AddMember { principal, team, user } => {
                Ok(Outcome::Edge(self.access.add_member(principal, team, user)?))
            }
            Command::RemoveMember { principal, team, user } => {
                self.access.remove_member(principal, team, user)?;
                Ok(Outcome::Done)
            }
            Command::Grant {
                principal,
                subject,
                actions,
                resource,
            } => Ok(Outcome::Edge(self.access.grant(principal, subject, actions, resource)?)),
            Command::Revoke {
                principal,
                subject,
                actions,
                resource,
            } => {
                self.access.revoke(principal, subject, actions, resource)?;
                Ok(Outcome::Done)
            }
            Command::RegisterHost {
                host_id,
                cpu_capacity,
                gpu_capacity,
            } => Ok(Outcome::Host(
                self.compute
                    .register_host(host_id, *cpu_capacity, *gpu_capacity)?
                    .clone(),
            )),
            Command::SubmitWorkflow { principal, spec, now } => {
                self.ensure_user(principal)?;
                let id = self.compute.submit_workflow(spec.clone(), principal, *now)?;
                self.own_resource(principal, &id)?;
                Ok(Outcome::Id(id))
            }
            Command::PollAllocations { host_id } => {
                Ok(Outcome::Assignments(self.compute.poll_allocations(host_id)?))
            }
            Command::NextJob { worker_id, now } => Ok(Outcome::Next(self.compute.next_ready_job(worker_id, *now)?)),
            Command::ReportStatus {
                job_id,
                state,
                log,
                assets,
                now,
            } => self.report_status(job_id, *state, log, assets, *now),
            Command::AppendLog { job_id, chunk } => Ok(Outcome::Offset(self.compute.append_log(job_id, chunk)?)),
            Command::WorkerDone { worker_id } => {
                self.compute.worker_done(worker_id)?;
                Ok(Outcome::Done)
            }
            Command::CancelWorkflow {
                principal,
                workflow_id,
                now,
            } => {
                self.compute.workflow(workflow_id)?;
                self.authorize(&Caller::User(principal.clone()), Action::Write, workflow_id)?;
                Ok(Outcome::Count(self.compute.cancel_workflow(workflow_id, *now)?))
            }
            Command::RegisterContent { principal, document } => {
                self.ensure_user(principal)?;
                let id = self.registry.register_content(document.clone(), principal)?;
                self.own_resource(principal, &id)?;
                Ok(Outcome::Id(id))
            }
            Command::DeleteContent { principal, content_id } => {
                self.registry.content(content_id)?;
                self.authorize(&Caller::User(principal.clone()), Action::Delete, content_id)?;
                self.registry.delete_content(content_id)?;
                self.access.remove_resource(content_id)?;
                Ok(Outcome::Done)
            }
            Command::RegisterAsset { principal, asset } => {
                self.ensure_user(principal)?;
                let id = self.registry.register_asset(asset.clone(), principal)?;
                self.own_resource(principal, &id)?;
                Ok(Outcome::Id(id))
            }
            Command::DeleteAsset { principal, asset_id } => {
                self.registry.asset(asset_id)?;
                self.authorize(&Caller::User(principal.clone()), Action::Delete, asset_id)?;
                self.registry.delete_asset(asset_id)?;
                self.access.remove_resource(asset_id)?;
                Ok(Outcome::Done)
            }
            Command::LaunchService {
                principal,
                content_id,
                now,
            } => self.launch_service(principal, content_id, *now),
        }
    }

    fn report_status(&mut self, job_id: &str, state: JobState, log: &[u8], assets: &[AssetRef], now: u64) -> Result<Outcome, PlatformError> {
        if let Some(i) = assets.iter().position(|a| a.uri.trim().is_empty()) {
            return Err(RegistryError::schema(alloc::format!("asset_uris[{i}]"), "must not be empty").into());
        }
        let workflow_id = self.compute.job(job_id)?.workflow_id.clone();
        let owner = self.compute.workflow(&workflow_id)?.spec.owner.clone();
        self.compute.report_job_status(job_id, state, log, now)?;

        let mut ids = Vec::with_capacity(assets.len());
        for asset in assets {
            let mut metadata = BTreeMap::new();
            metadata.insert("workflow_id".to_string(), workflow_id.clone());
            let record = AssetRecord {
                asset_id: String::new(),
                owner: String::new(),
                kind: asset.kind.clone().unwrap_or_else(|| DEFAULT_ASSET_KIND.into()),
                uri: asset.uri.clone(),
                metadata,
                source_job_id: Some(job_id.into()),
            };
            let id = self.registry.register_asset(record, &owner)?;
            self.own_resource(&owner, &id)?;
            self.compute.attach_asset(job_id, &id)?;
            ids.push(id);
        }
        Ok(Outcome::AssetIds(ids))
    }

    fn launch_service(&mut self, principal: &str, content_id: &str, now: u64) -> Result<Outcome, PlatformError> {
        self.ensure_user(principal)?;
        let doc = self.registry.content(content_id)?;
        let caller = Caller::User(principal.into());
        if !(doc.public || self.allows(&caller, Action::Execute, content_id)) {
            return Err(PlatformError::denied(&caller, Action::Execute, content_id));
        }
        let service = match (&doc.service, doc.content_type) {
            (Some(service), ContentType::App) => service,
            _ => return Err(RegistryError::NotLaunchable(content_id.into()).into()),
        };
        let mut job = JobSpec::new("service");
        job.name = doc.name.clone();
        job.runner_kind = Some(RunnerKind::Process);
        job.command = service.command.clone();
        job.parameters = doc
            .parameters
            .iter()
            .map(|p| (p.param_name.clone(), p.default.clone()))
            .collect();
        job.parameters
            .insert("content_id".into(), serde_json::Value::String(content_id.into()));
        if let Some(port) = service.port {
            job.parameters.insert("port".into(), serde_json::Value::from(port));
        }
        let spec = WorkflowSpec::new(vec![job], 1, SERVICE_WORKER_REQUEST);
        let id = self.compute.submit_workflow(spec, principal, now)?;
        self.own_resource(principal, &id)?;
        Ok(Outcome::Id(id))
    }

    // Read side.

    pub fn verify_login(&self, username: &str, secret: &str) -> Result<(), PlatformError> {
        Ok(self.credentials.verify(username, secret)?)
    }

    pub fn resolve_token(&self, token: &str, now: u64) -> Result<String, PlatformError> {
        Ok(self.credentials.resolve(token, now)?.into())
    }

    pub fn check_access(&self, user: &str, action: Action, resource: &str) -> Result<AccessDecision, PlatformError> {
        Ok(self.access.check_access(user, action, resource)?)
    }

    pub fn get_workflow(&self, caller: &Caller, workflow_id: &str) -> Result<WorkflowView, PlatformError> {
        let workflow = self.compute.workflow(workflow_id)?;
        self.authorize(caller, Action::Read, workflow_id)?;
        let jobs = self.compute.jobs(Some(workflow_id), None).cloned().collect();
        let workers = workflow
            .workers
            .iter()
            .map(|w| self.compute.worker(w).cloned())
            .collect::<Result<_, _>>()?;
        Ok(WorkflowView {
            workflow: workflow.clone(),
            status: self.compute.workflow_status(workflow_id)?,
            jobs,
            workers,
        })
    }

    pub fn list_jobs<'a>(&'a self, caller: &Caller, workflow_id: Option<&'a str>, state: Option<JobState>) -> Vec<&'a JobRecord> {
        self.compute
            .jobs(workflow_id, state)
            .filter(|job| self.allows(caller, Action::Read, &job.workflow_id))
            .collect()
    }

    pub fn get_job(&self, caller: &Caller, job_id: &str) -> Result<&JobRecord, PlatformError> {
        let job = self.compute.job(job_id)?;
        self.authorize(caller, Action::Read, &job.workflow_id)?;
        Ok(job)
    }

    pub fn get_logs(&self, caller: &Caller, job_id: &str, from: usize) -> Result<&[u8], PlatformError> {
        self.get_job(caller, job_id)?;
        Ok(self.compute.logs(job_id, from)?)
    }

    pub fn list_hosts(&self) -> Vec<&HostState> {
        self.compute.hosts().collect()
    }

    pub fn get_content(&self, caller: &Caller, content_id: &str) -> Result<&ContentDocument, PlatformError> {
        let doc = self.registry.content(content_id)?;
        if !self.can_see(caller, doc) {
            return Err(PlatformError::denied(caller, Action::Read, content_id));
        }
        Ok(doc)
    }

    pub fn list_contents<'a>(&'a self, caller: &Caller, content_type: Option<ContentType>, owner: Option<&'a str>) -> Vec<&'a ContentDocument> {
        self.registry
            .contents(content_type, owner)
            .filter(|doc| self.can_see(caller, doc))
            .collect()
    }

    pub fn search_contents(&self, caller: &Caller, query: &str, content_type: Option<ContentType>) -> Vec<SearchHit> {
        self.registry
            .search(query, content_type, |doc| self.can_see(caller, doc))
    }

    pub fn get_asset(&self, caller: &Caller, asset_id: &str) -> Result<&AssetRecord, PlatformError> {
        let asset = self.registry.asset(asset_id)?;
        self.authorize(caller, Action::Read, asset_id)?;
        Ok(asset)
    }

    fn can_see(&self, caller: &Caller, doc: &ContentDocument) -> bool {
        doc.public || self.allows(caller, Action::Read, &doc.content_id)
    }

    fn allows(&self, caller: &Caller, action: Action, resource: &str) -> bool {
        match caller {
            Caller::Agent => true,
            Caller::Anonymous => false,
            Caller::User(user) => self
                .access
                .check_access(user, action, resource)
                .is_ok_and(|d| d.allowed),
        }
    }

    fn authorize(&self, caller: &Caller, action: Action, resource: &str) -> Result<(), PlatformError> {
        if self.allows(caller, action, resource) {
            Ok(())
        } else {
            Err(PlatformError::denied(caller, action, resource))
        }
    }

    fn ensure_user(&self, principal: &str) -> Result<(), PlatformError> {
        match self.access.node(principal) {
            Ok(node) if node.kind == crate::access::NodeKind::User => Ok(()),
            _ => Err(PlatformError::Unauthenticated),
        }
    }

    fn own_resource(&mut self, owner: &str, resource: &str) -> Result<(), PlatformError> {
        self.access.create_resource(resource, BTreeMap::new())?;
        self.access.set_owner(owner, resource)?;
        Ok(())
    }
}
