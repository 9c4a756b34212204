//! labflow server, host agent and command-line client built on
//! [`labflow_core`].

pub mod agent;
pub mod cli;
pub mod client;
pub mod config;
pub mod demo;
pub mod http;
pub mod journal;
pub mod service;
