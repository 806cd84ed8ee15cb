//! End-to-end runs: load lists, decide credentials, plan, fetch, report.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::auth::{self, AuthError, Decision, NoPrompt, Prompt, UsersFile};
use crate::backends::{
    detect_state, BackendRegistry, CommandRunner, CommandTrace, DestState, ExecContext,
};
use crate::event::{Event, EventSink, PlanEntry};
use crate::resolver::{
    dedup_tasks, load_document, merge_documents, resolve_tasks, Credential, Document, FetchTask,
    Identity, LoadError, Mode, ResolveError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FETCH_FAILURES: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

/// Environment variable naming the directory `mock://` URLs resolve into.
pub const MOCK_ROOT_ENV: &str = "CRL_MOCK_ROOT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub list_sources: Vec<String>,
    pub anonymous: bool,
    pub auto_update: bool,
    pub root_override: Option<PathBuf>,
    pub verbosity: u8,
    pub debug_only: bool,
    pub reset_auth_first: bool,
    pub users_file: PathBuf,
    pub mock_root: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(list_sources: Vec<String>) -> Self {
        RunConfig {
            list_sources,
            anonymous: false,
            auto_update: false,
            root_override: None,
            verbosity: 0,
            debug_only: false,
            reset_auth_first: false,
            users_file: auth::default_users_path(),
            mock_root: None,
        }
    }

    /// Directory the run is rooted at: `--root`, else the working directory.
    pub fn run_root(&self) -> PathBuf {
        self.root_override
            .clone()
            .or_else(|| std::env::current_dir().ok())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no component list given")]
    NoSources,
    #[error("cannot read component list {source_name}: {cause}")]
    SourceUnavailable { source_name: String, cause: String },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Auth(#[from] AuthError),
}

impl EngineError {
    pub fn exit_code(&self) -> i32 {
        EXIT_FATAL
    }
}

/// Reads a component list from a path or a URL.
pub fn acquire_source(source: &str, mock_root: Option<&Path>) -> Result<String, EngineError> {
    let unavailable = |cause: String| EngineError::SourceUnavailable {
        source_name: source.to_string(),
        cause,
    };
    let path = if let Some(rest) = source.strip_prefix("mock://") {
        let root =
            mock_root.ok_or_else(|| unavailable("no mock fixture root configured".into()))?;
        root.join(rest)
    } else if let Some(rest) = source.strip_prefix("file://") {
        PathBuf::from(rest)
    } else if source.contains("://") {
        return download_source(source).map_err(unavailable);
    } else {
        PathBuf::from(source)
    };
    fs::read_to_string(&path).map_err(|e| unavailable(e.to_string()))
}

fn download_source(url: &str) -> Result<String, String> {
    let tmp = tempfile::NamedTempFile::new().map_err(|e| e.to_string())?;
    let output = Command::new("curl")
        .args(["-fsSL", "-o"])
        .arg(tmp.path())
        .arg(url)
        .output()
        .map_err(|e| format!("cannot run curl: {e}"))?;
    if !output.status.success() {
        return Err(String::from_utf8_lossy(&output.stderr).trim().to_string());
    }
    fs::read_to_string(tmp.path()).map_err(|e| e.to_string())
}

/// Parses every list source and merges them in order.
pub fn load_documents(config: &RunConfig) -> Result<Document, EngineError> {
    if config.list_sources.is_empty() {
        return Err(EngineError::NoSources);
    }
    let docs = config
        .list_sources
        .iter()
        .map(|src| {
            let text = acquire_source(src, config.mock_root.as_deref())?;
            Ok(load_document(&text, src)?)
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(merge_documents(docs)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedTask {
    pub task: FetchTask,
    pub state: DestState,
    /// Destination holds something other than a matching working copy.
    pub foreign: bool,
    /// Left alone because updates were declined.
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub document: Document,
    pub decisions: Vec<Decision>,
    pub tasks: Vec<PlannedTask>,
}

impl Plan {
    pub fn count(&self, mode: Mode) -> usize {
        self.tasks.iter().filter(|t| t.task.mode == mode).count()
    }

    pub fn entries(&self) -> Vec<PlanEntry> {
        self.tasks
            .iter()
            .filter(|t| !t.skipped)
            .map(|t| PlanEntry {
                mode: t.task.mode,
                component: t.task.component_path.clone(),
                destination: t.task.destination.clone(),
            })
            .collect()
    }
}

fn decide_all(
    document: &Document,
    config: &RunConfig,
    prompt: &mut dyn Prompt,
    events: &dyn EventSink,
) -> Result<Vec<Decision>, EngineError> {
    if config.reset_auth_first {
        auth::reset(&config.users_file)?;
    }
    let mut store = UsersFile::load(&config.users_file)?;
    // Batch runs never block on a question.
    let mut batch = NoPrompt;
    let prompt: &mut dyn Prompt = if config.auto_update || config.debug_only {
        &mut batch
    } else {
        prompt
    };
    document
        .blocks
        .iter()
        .map(
            |block| match auth::decide(block, &mut store, config.anonymous, prompt) {
                Err(AuthError::PromptUnavailable) => {
                    // A listing only shows what would be fetched.
                    if !config.debug_only {
                        events.emit(Event::Warning(format!(
                            "no username known for {}; using anonymous access",
                            auth::url_key(block).unwrap_or_default()
                        )));
                    }
                    Ok(Decision {
                        identity: Identity::Anonymous,
                        prompted: false,
                    })
                }
                other => Ok(other?),
            },
        )
        .collect()
}

fn classify(task: &mut FetchTask) -> (DestState, bool) {
    let state = detect_state(&task.destination);
    let foreign = match state {
        DestState::Absent => false,
        _ if task.vcs_type.is_download() => {
            task.mode = Mode::Update;
            false
        }
        DestState::WorkingCopy(t) if t == task.vcs_type => {
            task.mode = Mode::Update;
            false
        }
        _ => true,
    };
    (state, foreign)
}

/// Loads, authenticates and classifies everything the run would touch.
pub fn plan(
    config: &RunConfig,
    prompt: &mut dyn Prompt,
    events: &dyn EventSink,
) -> Result<Plan, EngineError> {
    let document = load_documents(config)?;
    let decisions = decide_all(&document, config, prompt, events)?;
    let identities: Vec<Identity> = decisions.iter().map(|d| d.identity.clone()).collect();
    let tasks = resolve_tasks(
        &document,
        config.root_override.as_deref(),
        config.anonymous,
        &identities,
    )?;

    let mut planned: Vec<PlannedTask> = dedup_tasks(tasks)
        .into_iter()
        .map(|mut task| {
            let (state, foreign) = classify(&mut task);
            PlannedTask {
                task,
                state,
                foreign,
                skipped: false,
            }
        })
        .collect();

    let updates = planned
        .iter()
        .filter(|t| t.task.mode == Mode::Update)
        .count();
    if updates > 0 && !config.auto_update && !config.debug_only {
        let question = format!("{updates} component(s) already checked out. Update them?");
        let accepted = match prompt.confirm(&question) {
            Ok(yes) => yes,
            Err(AuthError::PromptUnavailable) => {
                events.emit(Event::Warning(
                    "cannot ask whether to update; skipping updates (use --update)".into(),
                ));
                false
            }
            Err(e) => return Err(e.into()),
        };
        if !accepted {
            for t in planned.iter_mut().filter(|t| t.task.mode == Mode::Update) {
                t.skipped = true;
            }
        }
    }

    Ok(Plan {
        document,
        decisions,
        tasks: planned,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureRecord {
    pub component_path: String,
    pub destination: PathBuf,
    pub argv: Vec<String>,
    pub tool_message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchReport {
    pub attempted: usize,
    pub succeeded: usize,
    pub skipped: usize,
    pub failures: Vec<FailureRecord>,
    pub elapsed: Duration,
}

impl FetchReport {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_FETCH_FAILURES
        }
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.elapsed.as_secs_f64()
    }
}

/// Appends command traces and errors to `<root>/.crl/log`.
struct RunLog {
    path: PathBuf,
}

impl RunLog {
    fn append(&self, text: &str, events: &dyn EventSink) {
        let result = self
            .path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|()| {
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
            })
            .and_then(|mut f| f.write_all(text.as_bytes()));
        if let Err(e) = result {
            events.emit(Event::Warning(format!(
                "cannot write log {}: {e}",
                self.path.display()
            )));
        }
    }

    fn traces(&self, component: &str, traces: &[CommandTrace], events: &dyn EventSink) {
        let mut text = String::new();
        for t in traces {
            text.push_str(&format!(
                "[{component}] $ {} (in {}) -> {}\n",
                t.command_line(),
                t.working_dir.display(),
                t.outcome
                    .map_or_else(|| "killed".to_string(), |c| format!("exit {c}"))
            ));
            for line in t.captured_output.lines() {
                text.push_str("    ");
                text.push_str(line);
                text.push('\n');
            }
        }
        if !text.is_empty() {
            self.append(&text, events);
        }
    }
}

/// Runs every planned task in order, continuing past failures.
pub fn execute(
    plan: &Plan,
    registry: &BackendRegistry,
    root: &Path,
    runner: &dyn CommandRunner,
    events: &dyn EventSink,
) -> FetchReport {
    let start = Instant::now();
    let ctx = ExecContext::new(root.to_path_buf(), runner, events);
    let log = RunLog {
        path: root.join(".crl").join("log"),
    };
    let mut report = FetchReport {
        attempted: 0,
        succeeded: 0,
        skipped: 0,
        failures: Vec::new(),
        elapsed: Duration::ZERO,
    };
    if plan.tasks.iter().all(|t| t.skipped) {
        events.emit(Event::Warning(
            "no components to check out or update".into(),
        ));
    }

    // Per block: None if usable, Some(failure) if its login failed.
    let mut logins: HashMap<usize, Option<(Vec<String>, String)>> = HashMap::new();

    for planned in &plan.tasks {
        let task = &planned.task;
        if planned.skipped {
            report.skipped += 1;
            continue;
        }
        report.attempted += 1;
        events.emit(Event::TaskStarted {
            mode: task.mode,
            component: task.component_path.clone(),
            destination: task.destination.clone(),
        });

        let login = logins
            .entry(task.block)
            .or_insert_with(|| login_block(plan, task, registry, &ctx).err());
        log.traces(&task.component_path, &ctx.take_traces(), events);

        let outcome: Result<(), (Vec<String>, String)> = if let Some(failed) = login {
            Err(failed.clone())
        } else if planned.foreign {
            Err((
                Vec::new(),
                format!(
                    "ForeignDestination: {} exists but is not a {} working copy",
                    task.destination.display(),
                    task.vcs_type
                ),
            ))
        } else {
            match registry.backend_for(task) {
                None => Err((
                    Vec::new(),
                    format!("no backend registered for type `{}`", task.vcs_type),
                )),
                Some(backend) if !registry.tool_available(backend) => Err((
                    backend.command_for(task),
                    format!(
                        "ToolMissing: `{}` not found on PATH",
                        backend.tool().unwrap_or("?")
                    ),
                )),
                Some(backend) => {
                    let result = match task.mode {
                        Mode::Checkout => backend.checkout(task, &ctx),
                        Mode::Update => backend.update(task, &ctx),
                    };
                    result
                        .map(|_| ())
                        .map_err(|e| (e.argv().to_vec(), e.tool_message()))
                }
            }
        };
        log.traces(&task.component_path, &ctx.take_traces(), events);

        match outcome {
            Ok(()) => report.succeeded += 1,
            Err((argv, tool_message)) => {
                log.append(
                    &format!("[{}] ERROR {}\n", task.component_path, tool_message),
                    events,
                );
                events.emit(Event::TaskFailed {
                    component: task.component_path.clone(),
                    message: tool_message.clone(),
                });
                report.failures.push(FailureRecord {
                    component_path: task.component_path.clone(),
                    destination: task.destination.clone(),
                    argv,
                    tool_message,
                });
            }
        }
    }

    report.elapsed = start.elapsed();
    events.emit(Event::Finished {
        failed_components: report
            .failures
            .iter()
            .map(|f| f.component_path.clone())
            .collect(),
        elapsed: report.elapsed,
    });
    report
}

/// Logs in once for the block of `task` when its credential calls for it:
/// always for a CVS anonymous pair, and for a username only right after it
/// was first entered.
fn login_block(
    plan: &Plan,
    task: &FetchTask,
    registry: &BackendRegistry,
    ctx: &ExecContext,
) -> Result<(), (Vec<String>, String)> {
    let needed = match &task.credentials {
        Credential::Anonymous => false,
        Credential::CvsAnon { .. } => true,
        Credential::Username(_) => plan.decisions.get(task.block).is_some_and(|d| d.prompted),
    };
    if !needed {
        return Ok(());
    }
    let (Some(block), Some(backend)) = (
        plan.document.blocks.get(task.block),
        registry.backend_for(task),
    ) else {
        return Ok(());
    };
    if !registry.tool_available(backend) {
        // Reported per task below.
        return Ok(());
    }
    auth::login_if_needed(block, &task.resolved_url, &task.credentials, backend, ctx)
        .map(|_| ())
        .map_err(|e| {
            let argv = match &e {
                AuthError::LoginFailed { argv, .. } => argv.clone(),
                _ => Vec::new(),
            };
            (argv, e.to_string())
        })
}

#[derive(Debug)]
pub enum RunOutcome {
    /// `--debug`: the plan was listed and nothing was fetched.
    Listed(Plan),
    Executed(FetchReport),
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunOutcome::Listed(_) => EXIT_OK,
            RunOutcome::Executed(r) => r.exit_code(),
        }
    }
}

/// A complete run as the command-line tool performs it.
pub fn run(
    config: &RunConfig,
    registry: &BackendRegistry,
    runner: &dyn CommandRunner,
    prompt: &mut dyn Prompt,
    events: &dyn EventSink,
) -> Result<RunOutcome, EngineError> {
    let plan = plan(config, prompt, events)?;
    if config.debug_only {
        events.emit(Event::PlanListed {
            entries: plan.entries(),
        });
        return Ok(RunOutcome::Listed(plan));
    }
    let report = execute(&plan, registry, &config.run_root(), runner, events);
    Ok(RunOutcome::Executed(report))
}
