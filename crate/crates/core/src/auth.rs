//! Password credentials and bearer tokens.
//!
//! Secrets are stored as an iterated, salted SHA-256 digest. Tokens are
//! generated by the caller (randomness lives outside this crate) and stored
//! only as digests, so neither the state nor its journal holds a usable
//! secret.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const STRETCH_ROUNDS: u32 = 4096;

/// Default token lifetime: 24 hours in milliseconds.
pub const DEFAULT_TOKEN_TTL_MS: u64 = 24 * 60 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub salt: String,
    pub digest: String,
}

impl Credential {
    pub fn derive(salt: &str, secret: &str) -> Self {
        Self {
            salt: salt.into(),
            digest: stretch(salt, secret),
        }
    }

    pub fn matches(&self, secret: &str) -> bool {
        let candidate = stretch(&self.salt, secret);
        // constant-time comparison
        candidate.len() == self.digest.len()
            && candidate
                .bytes()
                .zip(self.digest.bytes())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

fn stretch(salt: &str, secret: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt.as_bytes());
    hasher.update([0u8]);
    hasher.update(secret.as_bytes());
    let mut digest = hasher.finalize();
    for _ in 1..STRETCH_ROUNDS {
        let mut hasher = Sha256::new();
        hasher.update(digest);
        hasher.update(salt.as_bytes());
        digest = hasher.finalize();
    }
    hex(&digest)
}

pub fn token_digest(token: &str) -> String {
    hex(&Sha256::digest(token.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(DIGITS[(b >> 4) as usize] as char);
        out.push(DIGITS[(b & 0xf) as usize] as char);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("bad credentials")]
    BadCredentials,
    #[error("token expired")]
    ExpiredToken,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Session {
    user: String,
    expires_at: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Credentials {
    secrets: BTreeMap<String, Credential>,
    sessions: BTreeMap<String, Session>,
}

impl Credentials {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, user: &str, credential: Credential) {
        self.secrets.insert(user.into(), credential);
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.secrets.contains_key(user)
    }

    /// Unknown users and wrong secrets are indistinguishable to the caller.
    pub fn verify(&self, user: &str, secret: &str) -> Result<(), AuthError> {
        match self.secrets.get(user) {
            Some(credential) if credential.matches(secret) => Ok(()),
            _ => Err(AuthError::BadCredentials),
        }
    }

    /// Records a session for `token`, dropping sessions expired by `now`.
    pub fn issue(&mut self, user: &str, token: &str, now: u64, expires_at: u64) {
        self.issue_digest(user, &token_digest(token), now, expires_at);
    }

    /// Like [`Credentials::issue`] for a token already reduced by [`token_digest`].
    pub fn issue_digest(&mut self, user: &str, digest: &str, now: u64, expires_at: u64) {
        self.sessions.retain(|_, s| s.expires_at > now);
        self.sessions.insert(
            digest.into(),
            Session {
                user: user.into(),
                expires_at,
            },
        );
    }

    pub fn resolve(&self, token: &str, now: u64) -> Result<&str, AuthError> {
        match self.sessions.get(&token_digest(token)) {
            Some(session) if session.expires_at > now => Ok(&session.user),
            Some(_) => Err(AuthError::ExpiredToken),
            None => Err(AuthError::BadCredentials),
        }
    }
}
