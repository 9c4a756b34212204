//! Resource accounting for hosts and workers.
//!
//! Hosts announce integral CPU and GPU capacities. Workers request a fixed
//! amount of both for their whole lifetime; a grant is an [`Allocation`]
//! committed against exactly one host and released when the worker terminates.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CPU cores and GPU devices requested by (or granted to) one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRequest {
    pub cpu: u32,
    pub gpu: u32,
}

impl ResourceRequest {
    pub const fn new(cpu: u32, gpu: u32) -> Self {
        Self { cpu, gpu }
    }

    /// A worker must ask for at least one unit of something.
    pub fn validate(&self) -> Result<(), ResourceError> {
        if self.cpu == 0 && self.gpu == 0 {
            return Err(ResourceError::EmptyRequest);
        }
        Ok(())
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, cpu_available: u32, gpu_available: u32) -> bool {
        self.cpu <= cpu_available && self.gpu <= gpu_available
    }
}

impl fmt::Display for ResourceRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cpu {}/gpu {}", self.cpu, self.gpu)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResourceError {
    #[error("resource request must ask for at least one cpu or gpu")]
    EmptyRequest,
    #[error("host {host_id} has {available} available, cannot grant {requested}")]
    InsufficientResources {
        host_id: String,
        requested: ResourceRequest,
        available: ResourceRequest,
    },
    #[error("releasing {released} on host {host_id} would exceed its capacity")]
    CapacityOverflow {
        host_id: String,
        released: ResourceRequest,
    },
    #[error("allocation targets host {expected}, not {actual}")]
    HostMismatch { expected: String, actual: String },
}

/// Capacity and current availability of one registered host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostState {
    pub host_id: String,
    pub cpu_capacity: u32,
    pub gpu_capacity: u32,
    pub cpu_available: u32,
    pub gpu_available: u32,
}

impl HostState {
    /// A freshly registered host has everything available.
    pub fn new(host_id: impl Into<String>, cpu_capacity: u32, gpu_capacity: u32) -> Self {
        Self {
            host_id: host_id.into(),
            cpu_capacity,
            gpu_capacity,
            cpu_available: cpu_capacity,
            gpu_available: gpu_capacity,
        }
    }

    pub fn available(&self) -> ResourceRequest {
        ResourceRequest::new(self.cpu_available, self.gpu_available)
    }

    pub fn capacity(&self) -> ResourceRequest {
        ResourceRequest::new(self.cpu_capacity, self.gpu_capacity)
    }

    pub fn can_fit(&self, request: &ResourceRequest) -> bool {
        request.fits_within(self.cpu_available, self.gpu_available)
    }
}

/// A worker waiting in the scheduling queue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerRequest {
    pub worker_id: String,
    pub workflow_id: String,
    pub request: ResourceRequest,
    pub submit_seq: u64,
}

/// Resources granted to one worker on one host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub worker_id: String,
    pub host_id: String,
    pub request: ResourceRequest,
}

/// Applies a planned grant to a host, returning the updated host.
///
/// Fails with [`ResourceError::InsufficientResources`] when the plan has gone
/// stale; the caller has to plan again.
pub fn commit_allocation(host: &HostState, alloc: &Allocation) -> Result<HostState, ResourceError> {
    alloc.request.validate()?;
    if alloc.host_id != host.host_id {
        return Err(ResourceError::HostMismatch {
            expected: alloc.host_id.clone(),
            actual: host.host_id.clone(),
        });
    }
    if !host.can_fit(&alloc.request) {
        return Err(ResourceError::InsufficientResources {
            host_id: host.host_id.clone(),
            requested: alloc.request,
            available: host.available(),
        });
    }
    let mut next = host.clone();
    next.cpu_available -= alloc.request.cpu;
    next.gpu_available -= alloc.request.gpu;
    Ok(next)
}

/// Returns a committed grant to its host. A release that would push
/// availability above capacity is refused as a double release.
pub fn release_allocation(host: &HostState, alloc: &Allocation) -> Result<HostState, ResourceError> {
    if alloc.host_id != host.host_id {
        return Err(ResourceError::HostMismatch {
            expected: alloc.host_id.clone(),
            actual: host.host_id.clone(),
        });
    }
    let cpu = host.cpu_available.checked_add(alloc.request.cpu);
    let gpu = host.gpu_available.checked_add(alloc.request.gpu);
    match (cpu, gpu) {
        (Some(cpu), Some(gpu)) if cpu <= host.cpu_capacity && gpu <= host.gpu_capacity => {
            let mut next = host.clone();
            next.cpu_available = cpu;
            next.gpu_available = gpu;
            Ok(next)
        }
        _ => Err(ResourceError::CapacityOverflow {
            host_id: host.host_id.clone(),
            released: alloc.request,
        }),
    }
}
