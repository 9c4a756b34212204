//! Core state machines for labflow: resource accounting, allocation
//! planning, workflow and job lifecycle, the content registry, graph-based
//! access control and credentials.
//!
//! Everything here is deterministic and free of IO. Clocks, randomness and
//! persistence are supplied by the caller.

#![no_std]

extern crate alloc;

pub mod access;
pub mod auth;
pub mod compute;
pub mod platform;
pub mod registry;
pub mod resources;
pub mod scheduler;
pub mod workflow;

pub use platform::{Caller, Command, Outcome, Platform, PlatformError};
