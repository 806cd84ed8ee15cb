//! Per-block choice between anonymous and authenticated access.
//!
//! Usernames are remembered in a plain-text users file, one
//! `<auth-url> <username>` record per line, where a username of `-` marks a
//! repository the user chose to access anonymously. Passwords never pass
//! through here; the retrieval tools ask for them themselves.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::backends::{Backend, CommandTrace, ExecContext};
use crate::resolver::{ComponentBlock, Credential, Identity};

pub const ANONYMOUS_MARKER: &str = "-";
pub const USERS_ENV: &str = "CRL_USERS";

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("a username is required but no interactive terminal is available")]
    PromptUnavailable,
    #[error("invalid username `{0}`")]
    InvalidUsername(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: malformed users record", path.display())]
    MalformedRecord { path: PathBuf, line: usize },
    #[error("login for {block} failed: {message}")]
    LoginFailed {
        block: String,
        message: String,
        argv: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialRecord {
    pub url_key: String,
    pub identity: Identity,
}

/// The persistent map from authenticated URLs to identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsersFile {
    pub path: PathBuf,
    pub records: Vec<CredentialRecord>,
}

/// `$CRL_USERS`, else `$HOME/.crl/users`.
pub fn default_users_path() -> PathBuf {
    if let Some(p) = std::env::var_os(USERS_ENV) {
        return PathBuf::from(p);
    }
    let home = std::env::var_os("HOME")
        .map(PathBuf::from)
        .unwrap_or_default();
    home.join(".crl").join("users")
}

fn valid_username(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

impl UsersFile {
    pub fn empty(path: PathBuf) -> Self {
        UsersFile {
            path,
            records: Vec::new(),
        }
    }

    /// Loads `path`; a missing file is an empty store.
    pub fn load(path: &Path) -> Result<Self, AuthError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(source) => {
                return Err(AuthError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, AuthError> {
        let mut store = UsersFile::empty(path.to_path_buf());
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(url_key), Some(who), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(AuthError::MalformedRecord {
                    path: path.to_path_buf(),
                    line: idx + 1,
                });
            };
            let identity = if who == ANONYMOUS_MARKER {
                Identity::Anonymous
            } else {
                Identity::Username(who.to_string())
            };
            store.insert(CredentialRecord {
                url_key: url_key.to_string(),
                identity,
            });
        }
        Ok(store)
    }

    pub fn to_text(&self) -> String {
        self.records
            .iter()
            .map(|r| {
                let who = match &r.identity {
                    Identity::Anonymous => ANONYMOUS_MARKER,
                    Identity::Username(u) => u,
                };
                format!("{} {}\n", r.url_key, who)
            })
            .collect()
    }

    pub fn save(&self) -> Result<(), AuthError> {
        let io_err = |source| AuthError::Io {
            path: self.path.clone(),
            source,
        };
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(&self.path, self.to_text()).map_err(io_err)
    }

    pub fn lookup(&self, url_key: &str) -> Option<&Identity> {
        self.records
            .iter()
            .find(|r| r.url_key == url_key)
            .map(|r| &r.identity)
    }

    /// Adds a record unless the key is already present. Returns whether it
    /// was added; existing records are never rewritten.
    pub fn insert(&mut self, record: CredentialRecord) -> bool {
        if self.lookup(&record.url_key).is_some() {
            return false;
        }
        self.records.push(record);
        true
    }
}

/// Interactive questions asked during a run.
pub trait Prompt {
    /// Asks for the username to use with `auth_url`; `-` means anonymous.
    fn username(&mut self, auth_url: &str) -> Result<String, AuthError>;

    /// A yes/no question.
    fn confirm(&mut self, question: &str) -> Result<bool, AuthError>;
}

/// A prompt for batch use: every question is unanswerable.
pub struct NoPrompt;

impl Prompt for NoPrompt {
    fn username(&mut self, _auth_url: &str) -> Result<String, AuthError> {
        Err(AuthError::PromptUnavailable)
    }

    fn confirm(&mut self, _question: &str) -> Result<bool, AuthError> {
        Err(AuthError::PromptUnavailable)
    }
}

/// Outcome of [`decide`] for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub identity: Identity,
    /// True if the user was asked during this call.
    pub prompted: bool,
}

/// The users-file key for a block: its AUTH_URL as written, placeholders
/// included, so one record covers the whole block.
pub fn url_key(block: &ComponentBlock) -> Option<String> {
    block.auth_url.as_ref().map(ToString::to_string)
}

/// Chooses how `block` is accessed, prompting and persisting if needed.
pub fn decide(
    block: &ComponentBlock,
    store: &mut UsersFile,
    anonymous_flag: bool,
    prompt: &mut dyn Prompt,
) -> Result<Decision, AuthError> {
    let settled = |identity| Decision {
        identity,
        prompted: false,
    };
    if anonymous_flag {
        return Ok(settled(Identity::Anonymous));
    }
    let Some(key) = url_key(block) else {
        return Ok(settled(Identity::Anonymous));
    };
    if let Some(identity) = store.lookup(&key) {
        return Ok(settled(identity.clone()));
    }

    let answer = prompt.username(&key)?;
    let answer = answer.trim();
    let identity = if answer == ANONYMOUS_MARKER {
        Identity::Anonymous
    } else if valid_username(answer) {
        Identity::Username(answer.to_string())
    } else {
        return Err(AuthError::InvalidUsername(answer.to_string()));
    };
    store.insert(CredentialRecord {
        url_key: key,
        identity: identity.clone(),
    });
    store.save()?;
    Ok(Decision {
        identity,
        prompted: true,
    })
}

/// Runs the backend's explicit login step for `credential`, if it has one.
pub fn login_if_needed(
    block: &ComponentBlock,
    login_url: &str,
    credential: &Credential,
    backend: &dyn Backend,
    ctx: &ExecContext,
) -> Result<Option<CommandTrace>, AuthError> {
    if matches!(credential, Credential::Anonymous) {
        return Ok(None);
    }
    backend
        .login(login_url, credential, ctx)
        .map_err(|e| AuthError::LoginFailed {
            block: block.origin.to_string(),
            message: e.tool_message(),
            argv: e.argv().to_vec(),
        })
}

/// Deletes the users file so every block is asked about again.
pub fn reset(path: &Path) -> Result<(), AuthError> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
        Err(source) => Err(AuthError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}
