//! Uniform checkout/update contract over the supported retrieval tools.
//!
//! Every backend drives an external tool as a child process through
//! [`ExecContext::run`]; no protocol is reimplemented here. Backends are
//! looked up by `!TYPE` in a [`BackendRegistry`], with an optional per-scheme
//! override used by the `mock://` fixture backend.

mod cvs;
mod darcs;
mod download;
mod git;
mod hg;
mod mock;
mod store;
mod svn;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::event::{Event, EventSink};
use crate::resolver::{Credential, FetchTask, VcsType};

pub use cvs::{cvsroot_for, CvsBackend};
pub use darcs::DarcsBackend;
pub use download::DownloadBackend;
pub use git::GitBackend;
pub use hg::HgBackend;
pub use mock::{MockBackend, MOCK_FAIL_MARKER, MOCK_METADATA_DIR};
pub use store::{materialize_component, store_dir, EXTRACT_MARKER_DIR};

/// Record of one external invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTrace {
    pub argv: Vec<String>,
    pub working_dir: PathBuf,
    /// Exit code; `None` if the process was killed by a signal.
    pub outcome: Option<i32>,
    pub captured_output: String,
}

impl CommandTrace {
    pub fn success(&self) -> bool {
        self.outcome == Some(0)
    }

    pub fn command_line(&self) -> String {
        self.argv.join(" ")
    }
}

impl fmt::Display for CommandTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.command_line())?;
        match self.outcome {
            Some(code) => write!(f, " (exit {code})"),
            None => write!(f, " (killed)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("`{tool}` not found on PATH")]
    ToolMissing { tool: String, argv: Vec<String> },
    #[error("{component}: `{}` failed{}", trace.command_line(), exit_suffix(trace))]
    FetchFailed {
        component: String,
        trace: CommandTrace,
    },
    #[error("{}: destination is not empty", .0.display())]
    WouldOverwrite(PathBuf),
    #[error("{}: not a working copy", .0.display())]
    NotAWorkingCopy(PathBuf),
    #[error("`{extract}` not found in {}", repo.display())]
    ExtractMissing { extract: String, repo: PathBuf },
    #[error("no backend registered for type `{0}`")]
    NoBackend(VcsType),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot run `{}`: {source}", argv.join(" "))]
    Spawn {
        argv: Vec<String>,
        #[source]
        source: io::Error,
    },
}

fn exit_suffix(trace: &CommandTrace) -> String {
    match trace.outcome {
        Some(code) => format!(" with exit code {code}"),
        None => " (killed by signal)".to_string(),
    }
}

impl BackendError {
    /// The command that failed, verbatim, when there was one.
    pub fn argv(&self) -> &[String] {
        match self {
            BackendError::ToolMissing { argv, .. } | BackendError::Spawn { argv, .. } => argv,
            BackendError::FetchFailed { trace, .. } => &trace.argv,
            _ => &[],
        }
    }

    /// Output of the failing tool, or the error text.
    pub fn tool_message(&self) -> String {
        match self {
            BackendError::FetchFailed { trace, .. } if !trace.captured_output.trim().is_empty() => {
                trace.captured_output.trim_end().to_string()
            }
            other => other.to_string(),
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        BackendError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Runs external commands. Swappable so command construction can be tested
/// without the tools installed.
pub trait CommandRunner {
    /// Runs `argv` in `working_dir`, returning the exit code and the
    /// combined stdout/stderr.
    fn run(&self, argv: &[String], working_dir: &Path) -> io::Result<(Option<i32>, String)>;
}

/// Spawns real child processes with captured output.
pub struct ProcessRunner;

impl CommandRunner for ProcessRunner {
    fn run(&self, argv: &[String], working_dir: &Path) -> io::Result<(Option<i32>, String)> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
        let output = Command::new(program)
            .args(args)
            .current_dir(working_dir)
            .output()?;
        let mut text = String::from_utf8_lossy(&output.stdout).into_owned();
        text.push_str(&String::from_utf8_lossy(&output.stderr));
        Ok((output.status.code(), text))
    }
}

/// Per-run state shared by the backends: where the run is rooted, how to
/// run commands, where events go, and every trace recorded so far.
pub struct ExecContext<'a> {
    pub root: PathBuf,
    pub runner: &'a dyn CommandRunner,
    pub events: &'a dyn EventSink,
    traces: RefCell<Vec<CommandTrace>>,
}

impl<'a> ExecContext<'a> {
    pub fn new(root: PathBuf, runner: &'a dyn CommandRunner, events: &'a dyn EventSink) -> Self {
        ExecContext {
            root,
            runner,
            events,
            traces: RefCell::new(Vec::new()),
        }
    }

    /// Announces `argv`, lets `exec` perform it, and records the trace.
    pub fn run_with(
        &self,
        argv: Vec<String>,
        working_dir: &Path,
        exec: impl FnOnce() -> io::Result<(Option<i32>, String)>,
    ) -> Result<CommandTrace, BackendError> {
        self.events.emit(Event::Command {
            argv: argv.clone(),
            working_dir: working_dir.to_path_buf(),
        });
        let (outcome, captured_output) = match exec() {
            Ok(result) => result,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(BackendError::ToolMissing {
                    tool: argv.first().cloned().unwrap_or_default(),
                    argv,
                })
            }
            Err(source) => return Err(BackendError::Spawn { argv, source }),
        };
        if !captured_output.is_empty() {
            self.events.emit(Event::Output {
                text: captured_output.clone(),
            });
        }
        let trace = CommandTrace {
            argv,
            working_dir: working_dir.to_path_buf(),
            outcome,
            captured_output,
        };
        self.traces.borrow_mut().push(trace.clone());
        Ok(trace)
    }

    /// Runs an external command through the configured runner.
    pub fn run(&self, argv: Vec<String>, working_dir: &Path) -> Result<CommandTrace, BackendError> {
        let runner = self.runner;
        let run_argv = argv.clone();
        self.run_with(argv, working_dir, || runner.run(&run_argv, working_dir))
    }

    /// Like [`run`](Self::run), but a nonzero exit becomes `FetchFailed`.
    pub fn run_checked(
        &self,
        component: &str,
        argv: Vec<String>,
        working_dir: &Path,
    ) -> Result<CommandTrace, BackendError> {
        let trace = self.run(argv, working_dir)?;
        if trace.success() {
            Ok(trace)
        } else {
            Err(BackendError::FetchFailed {
                component: component.to_string(),
                trace,
            })
        }
    }

    /// Every trace recorded since the last call.
    pub fn take_traces(&self) -> Vec<CommandTrace> {
        std::mem::take(&mut self.traces.borrow_mut())
    }
}

pub trait Backend {
    /// Executable this backend drives, if any.
    fn tool(&self) -> Option<&str>;

    /// The main command `task` would run, for listings and error reports.
    fn command_for(&self, task: &FetchTask) -> Vec<String>;

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError>;

    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError>;

    /// Explicit login step; only meaningful for tools that have one.
    fn login(
        &self,
        _url: &str,
        _credential: &Credential,
        _ctx: &ExecContext,
    ) -> Result<Option<CommandTrace>, BackendError> {
        Ok(None)
    }
}

/// What currently sits at a destination directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestState {
    Absent,
    WorkingCopy(VcsType),
    Foreign,
}

const VCS_METADATA: [(&str, VcsType); 5] = [
    (".git", VcsType::Git),
    (".svn", VcsType::Svn),
    ("CVS", VcsType::Cvs),
    (".hg", VcsType::Hg),
    ("_darcs", VcsType::Darcs),
];

/// Directory names never copied between trees.
pub(crate) fn is_metadata_name(name: &str) -> bool {
    VCS_METADATA.iter().any(|(n, _)| *n == name)
        || name == MOCK_METADATA_DIR
        || name == EXTRACT_MARKER_DIR
        || name == MOCK_FAIL_MARKER
}

/// Classifies `destination` by the tool metadata it contains.
pub fn detect_state(destination: &Path) -> DestState {
    let Ok(meta) = fs::metadata(destination) else {
        return DestState::Absent;
    };
    if !meta.is_dir() {
        return DestState::Foreign;
    }
    let empty = fs::read_dir(destination)
        .map(|mut entries| entries.next().is_none())
        .unwrap_or(false);
    if empty {
        return DestState::Absent;
    }
    if let Some(t) = store::read_marker(destination).or_else(|| mock::read_marker(destination)) {
        return DestState::WorkingCopy(t);
    }
    VCS_METADATA
        .iter()
        .find(|(dir, _)| destination.join(dir).exists())
        .map(|&(_, t)| DestState::WorkingCopy(t))
        .unwrap_or(DestState::Foreign)
}

pub(crate) fn ensure_empty_destination(dest: &Path) -> Result<(), BackendError> {
    match detect_state(dest) {
        DestState::Absent => Ok(()),
        _ => Err(BackendError::WouldOverwrite(dest.to_path_buf())),
    }
}

pub(crate) fn ensure_working_copy(task: &FetchTask) -> Result<(), BackendError> {
    if detect_state(&task.destination) == DestState::WorkingCopy(task.vcs_type) {
        Ok(())
    } else {
        Err(BackendError::NotAWorkingCopy(task.destination.clone()))
    }
}

pub(crate) fn create_parent(path: &Path) -> Result<(), BackendError> {
    match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => {
            fs::create_dir_all(parent).map_err(|e| BackendError::io(parent, e))
        }
        _ => Ok(()),
    }
}

pub(crate) fn path_arg(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Locates `tool` on the executable search path.
pub fn find_tool(tool: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(tool))
        .find(|candidate| candidate.is_file())
}

/// Scheme of a resolved URL (`mock` for `mock://x`).
pub fn url_scheme(url: &str) -> Option<&str> {
    url.split_once("://").map(|(scheme, _)| scheme)
}

/// Maps `!TYPE` values (and optionally URL schemes) onto backends.
pub struct BackendRegistry {
    by_type: HashMap<VcsType, Box<dyn Backend>>,
    by_scheme: HashMap<String, Box<dyn Backend>>,
    tool_cache: RefCell<HashMap<String, bool>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::empty()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            by_type: HashMap::new(),
            by_scheme: HashMap::new(),
            tool_cache: RefCell::new(HashMap::new()),
        }
    }

    /// All real tool backends.
    pub fn standard() -> Self {
        let mut reg = Self::empty();
        reg.register(VcsType::Cvs, Box::new(CvsBackend));
        reg.register(VcsType::Svn, Box::new(svn::SvnBackend));
        reg.register(VcsType::Git, Box::new(GitBackend::default()));
        reg.register(VcsType::Darcs, Box::new(DarcsBackend));
        reg.register(VcsType::Hg, Box::new(HgBackend::default()));
        reg.register(VcsType::Http, Box::new(DownloadBackend));
        reg.register(VcsType::Ftp, Box::new(DownloadBackend));
        reg
    }

    pub fn register(&mut self, vcs: VcsType, backend: Box<dyn Backend>) {
        self.by_type.insert(vcs, backend);
    }

    /// Routes every URL with `scheme` to `backend`, whatever its type.
    pub fn register_scheme(&mut self, scheme: &str, backend: Box<dyn Backend>) {
        self.by_scheme.insert(scheme.to_string(), backend);
    }

    pub fn lookup(&self, vcs: VcsType, url: &str) -> Option<&dyn Backend> {
        url_scheme(url)
            .and_then(|s| self.by_scheme.get(s))
            .or_else(|| self.by_type.get(&vcs))
            .map(|b| b.as_ref())
    }

    pub fn backend_for(&self, task: &FetchTask) -> Option<&dyn Backend> {
        self.lookup(task.vcs_type, &task.resolved_url)
    }

    pub fn has_type(&self, vcs: VcsType) -> bool {
        self.by_type.contains_key(&vcs)
    }

    /// Whether the backend's tool is installed; looked up once per tool.
    pub fn tool_available(&self, backend: &dyn Backend) -> bool {
        let Some(tool) = backend.tool() else {
            return true;
        };
        *self
            .tool_cache
            .borrow_mut()
            .entry(tool.to_string())
            .or_insert_with(|| find_tool(tool).is_some())
    }
}
