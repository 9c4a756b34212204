//! The shared service state: a [`Platform`] behind a lock, optionally backed
//! by a [`Journal`], plus the impure inputs commands need (clock, random
//! tokens and salts).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use labflow_core::auth::{token_digest, Credential, DEFAULT_TOKEN_TTL_MS};
use labflow_core::{Caller, Command, Outcome, Platform, PlatformError};
use rand::Rng;
use thiserror::Error;

use crate::journal::{Journal, JournalError};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("{message}")]
    InvalidRequest { message: String, field: Option<String> },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self::InvalidRequest { message: message.into(), field: None }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::Platform(e) => e.code(),
            Self::InvalidRequest { .. } => "InvalidRequest",
            Self::Storage(_) => "StorageFailure",
        }
    }
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("corrupt data directory: replaying command {index} failed: {source}")]
    Replay { index: usize, source: PlatformError },
}

pub struct HubOptions {
    pub clock: Clock,
    pub token_ttl_ms: u64,
    /// When set, launcher and worker endpoints require this bearer token.
    pub agent_token: Option<String>,
}

impl Default for HubOptions {
    fn default() -> Self {
        Self {
            clock: system_clock(),
            token_ttl_ms: DEFAULT_TOKEN_TTL_MS,
            agent_token: None,
        }
    }
}

pub struct Hub {
    platform: RwLock<Platform>,
    journal: Mutex<Option<Journal>>,
    poisoned: AtomicBool,
    options: HubOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Session {
    pub username: String,
    pub token: String,
    pub expires_at: u64,
}

impl Hub {
    /// An in-memory hub; state is lost when it is dropped.
    pub fn in_memory(options: HubOptions) -> Self {
        Self {
            platform: RwLock::new(Platform::new()),
            journal: Mutex::new(None),
            poisoned: AtomicBool::new(false),
            options,
        }
    }

    /// A hub persisted in `data_dir`, restored from its journal.
    pub fn open(data_dir: &Path, options: HubOptions) -> Result<Self, OpenError> {
        let (journal, commands) = Journal::open(data_dir)?;
        let mut platform = Platform::new();
        for (index, command) in commands.iter().enumerate() {
            platform
                .apply(command)
                .map_err(|source| OpenError::Replay { index: index + 1, source })?;
        }
        tracing::info!(commands = commands.len(), path = %journal.path().display(), "restored state");
        Ok(Self {
            platform: RwLock::new(platform),
            journal: Mutex::new(Some(journal)),
            poisoned: AtomicBool::new(false),
            options,
        })
    }

    pub fn now(&self) -> u64 {
        (self.options.clock)()
    }

    pub fn agent_token(&self) -> Option<&str> {
        self.options.agent_token.as_deref()
    }

    /// Applies `command` and records it. Failed commands leave no trace.
    pub fn execute(&self, command: Command) -> Result<Outcome, ServiceError> {
        if self.poisoned.load(Ordering::SeqCst) {
            return Err(ServiceError::Storage("journal unavailable after an earlier write failure".into()));
        }
        let mut platform = self.platform.write().unwrap_or_else(|e| e.into_inner());
        let outcome = platform.apply(&command)?;
        let mut journal = self.journal.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(journal) = journal.as_mut() {
            if let Err(e) = journal.append(&command) {
                // Memory is now ahead of disk; refuse further writes rather
                // than let the two drift apart.
                self.poisoned.store(true, Ordering::SeqCst);
                tracing::error!(error = %e, "journal append failed");
                return Err(ServiceError::Storage(e.to_string()));
            }
        }
        Ok(outcome)
    }

    pub fn read<R>(&self, f: impl FnOnce(&Platform) -> R) -> R {
        f(&self.platform.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn register_user(&self, username: &str, password: &str, attributes: BTreeMap<String, String>) -> Result<(), ServiceError> {
        if password.is_empty() {
            return Err(ServiceError::InvalidRequest {
                message: "password must not be empty".into(),
                field: Some("password".into()),
            });
        }
        let credential = Credential::derive(&random_hex(16), password);
        self.execute(Command::CreateUser { username: username.into(), attributes, credential })?;
        Ok(())
    }

    pub fn login(&self, username: &str, password: &str) -> Result<Session, ServiceError> {
        self.read(|p| p.verify_login(username, password))?;
        let token = random_hex(32);
        let now = self.now();
        let expires_at = now.saturating_add(self.options.token_ttl_ms);
        self.execute(Command::IssueToken {
            username: username.into(),
            token_digest: token_digest(&token),
            now,
            expires_at,
        })?;
        Ok(Session { username: username.into(), token, expires_at })
    }

    pub fn authenticate(&self, token: &str) -> Result<String, ServiceError> {
        let now = self.now();
        Ok(self.read(|p| p.resolve_token(token, now))?)
    }

    /// Resolves a bearer token (if any) to a caller. The agent token, when
    /// configured, identifies launchers and workers.
    pub fn caller(&self, bearer: Option<&str>) -> Result<Caller, ServiceError> {
        match bearer {
            None => Ok(Caller::Anonymous),
            Some(token) if self.agent_token() == Some(token) => Ok(Caller::Agent),
            Some(token) => Ok(Caller::User(self.authenticate(token)?)),
        }
    }
}

fn random_hex(bytes: usize) -> String {
    let mut rng = rand::rng();
    (0..bytes).map(|_| format!("{:02x}", rng.random::<u8>())).collect()
}
