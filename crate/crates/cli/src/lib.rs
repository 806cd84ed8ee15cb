//! Front end for the `getcomponents` command.

use std::cell::RefCell;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::PathBuf;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::Parser;
use thiserror::Error;

use crl::auth::{self, AuthError, Prompt};
use crl::backends::{BackendRegistry, CommandRunner, MockBackend};
use crl::engine::{self, RunConfig, RunOutcome, EXIT_FATAL, EXIT_OK, MOCK_ROOT_ENV};
use crl::event::{Event, EventSink};

pub const MAN_PAGE: &str = include_str!("../docs/getcomponents.md");

pub const HELP: &str = "\
Usage: getcomponents [options] <component list>...

Check out or update every component named in one or more CRL lists.
A list may be a local file or a URL.

Options:
  --help                    Print a brief help message and exit
  --man                     Print the full manual and exit
  -v, --verbose             Print each command as it runs; repeat to also
                            show the commands' output
  --debug                   List the components that would be checked out
                            or updated, with their total, and do nothing else
  --anonymous               Ignore stored logins and use anonymous access
  --update                  Process all updates without asking
  --root <dir>              Place components under <dir> instead of the
                            list's own root
  --reset-authentication    Delete stored logins before processing
";

#[derive(Debug, Parser)]
#[command(
    name = "getcomponents",
    disable_help_flag = true,
    disable_version_flag = true
)]
struct Args {
    #[arg(long)]
    help: bool,
    #[arg(long)]
    man: bool,
    #[arg(short = 'v', long = "verbose", action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long)]
    debug: bool,
    #[arg(long)]
    anonymous: bool,
    #[arg(long)]
    update: bool,
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
    #[arg(long = "reset-authentication")]
    reset_authentication: bool,
    sources: Vec<String>,
}

/// Run options as given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Options {
    pub sources: Vec<String>,
    pub anonymous: bool,
    pub auto_update: bool,
    pub root: Option<PathBuf>,
    pub verbosity: u8,
    pub debug: bool,
    pub reset_authentication: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliInvocation {
    Help,
    Man,
    Run(Options),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArgError {
    #[error("unknown option `{0}`")]
    UnknownFlag(String),
    #[error("option `{0}` requires a value")]
    MissingValue(String),
    #[error("no component list given")]
    NoListGiven,
    #[error("{0}")]
    Other(String),
}

fn context_arg(err: &clap::Error) -> Option<String> {
    match err.get(ContextKind::InvalidArg)? {
        ContextValue::String(s) => s.split_whitespace().next().map(str::to_string),
        _ => None,
    }
}

/// Interprets command-line arguments, excluding the program name.
pub fn parse_args<S: AsRef<str>>(argv: &[S]) -> Result<CliInvocation, ArgError> {
    let tokens = std::iter::once("getcomponents").chain(argv.iter().map(AsRef::as_ref));
    let args = Args::try_parse_from(tokens).map_err(|err| match err.kind() {
        ErrorKind::UnknownArgument => ArgError::UnknownFlag(context_arg(&err).unwrap_or_default()),
        ErrorKind::InvalidValue | ErrorKind::NoEquals | ErrorKind::WrongNumberOfValues => {
            ArgError::MissingValue(context_arg(&err).unwrap_or_default())
        }
        _ => ArgError::Other(err.to_string()),
    })?;
    if args.help {
        return Ok(CliInvocation::Help);
    }
    if args.man {
        return Ok(CliInvocation::Man);
    }
    if args.sources.is_empty() {
        return Err(ArgError::NoListGiven);
    }
    Ok(CliInvocation::Run(Options {
        sources: args.sources,
        anonymous: args.anonymous,
        auto_update: args.update,
        root: args.root,
        verbosity: args.verbose,
        debug: args.debug,
        reset_authentication: args.reset_authentication,
    }))
}

/// Process-level settings that do not come from flags.
#[derive(Debug, Clone)]
pub struct CliEnv {
    pub users_file: PathBuf,
    /// Where `mock://` URLs point; `None` disables the mock scheme.
    pub mock_root: Option<PathBuf>,
}

impl CliEnv {
    pub fn from_process() -> Self {
        CliEnv {
            users_file: auth::default_users_path(),
            mock_root: std::env::var_os(MOCK_ROOT_ENV)
                .map(PathBuf::from)
                .or_else(|| std::env::current_dir().ok()),
        }
    }
}

impl Options {
    pub fn to_config(&self, env: &CliEnv) -> RunConfig {
        RunConfig {
            list_sources: self.sources.clone(),
            anonymous: self.anonymous,
            auto_update: self.auto_update,
            root_override: self.root.clone(),
            verbosity: self.verbosity,
            debug_only: self.debug,
            reset_auth_first: self.reset_authentication,
            users_file: env.users_file.clone(),
            mock_root: env.mock_root.clone(),
        }
    }
}

/// Console lines for one event at the given verbosity.
pub fn render_event(event: &Event, verbosity: u8) -> Vec<String> {
    match event {
        Event::PlanListed { entries } => {
            let mut lines: Vec<String> = entries
                .iter()
                .map(|e| format!("{} {}", e.mode, e.component))
                .collect();
            let updates = entries
                .iter()
                .filter(|e| e.mode == crl::Mode::Update)
                .count();
            lines.push(format!(
                "{} components in total: {} to check out, {} to update",
                entries.len(),
                entries.len() - updates,
                updates
            ));
            lines
        }
        Event::TaskStarted {
            mode, component, ..
        } => vec![format!("{mode} {component}")],
        Event::Command { argv, .. } if verbosity >= 1 => vec![format!("  $ {}", argv.join(" "))],
        Event::Output { text } if verbosity >= 2 => {
            text.lines().map(|l| format!("    {l}")).collect()
        }
        Event::Command { .. } | Event::Output { .. } => Vec::new(),
        Event::TaskFailed { component, message } => {
            vec![format!("  error in {component}: {message}")]
        }
        Event::Warning(w) => vec![format!("warning: {w}")],
        Event::Finished {
            failed_components,
            elapsed,
        } => {
            let mut lines = Vec::new();
            if !failed_components.is_empty() {
                lines.push(format!(
                    "The following {} component(s) had errors:",
                    failed_components.len()
                ));
                lines.extend(failed_components.iter().map(|c| format!("  {c}")));
            }
            lines.push(format!(
                "Time elapsed: {:.1} seconds",
                elapsed.as_secs_f64()
            ));
            lines
        }
    }
}

pub fn render_output(events: &[Event], verbosity: u8) -> String {
    events
        .iter()
        .flat_map(|e| render_event(e, verbosity))
        .map(|l| l + "\n")
        .collect()
}

/// Writes each event to `out` as it happens.
pub struct ConsoleSink<'a> {
    out: RefCell<&'a mut dyn Write>,
    verbosity: u8,
}

impl<'a> ConsoleSink<'a> {
    pub fn new(out: &'a mut dyn Write, verbosity: u8) -> Self {
        ConsoleSink {
            out: RefCell::new(out),
            verbosity,
        }
    }
}

impl EventSink for ConsoleSink<'_> {
    fn emit(&self, event: Event) {
        let mut out = self.out.borrow_mut();
        for line in render_event(&event, self.verbosity) {
            let _ = writeln!(out, "{line}");
        }
        let _ = out.flush();
    }
}

/// Asks questions on the controlling terminal.
pub struct TerminalPrompt;

fn read_answer(question: &str) -> Result<String, AuthError> {
    if !io::stdin().is_terminal() {
        return Err(AuthError::PromptUnavailable);
    }
    let mut err = io::stderr();
    let _ = write!(err, "{question}");
    let _ = err.flush();
    let mut line = String::new();
    match io::stdin().lock().read_line(&mut line) {
        Ok(0) | Err(_) => Err(AuthError::PromptUnavailable),
        Ok(_) => Ok(line.trim_end_matches(['\r', '\n']).to_string()),
    }
}

/// Reads a username for `auth_url`; `-` asks for anonymous access.
pub fn prompt_username(auth_url: &str) -> Result<String, AuthError> {
    read_answer(&format!(
        "Username for {auth_url} (enter '-' for anonymous access): "
    ))
}

impl Prompt for TerminalPrompt {
    fn username(&mut self, auth_url: &str) -> Result<String, AuthError> {
        prompt_username(auth_url)
    }

    fn confirm(&mut self, question: &str) -> Result<bool, AuthError> {
        let answer = read_answer(&format!("{question} [y/N] "))?;
        Ok(matches!(
            answer.trim().to_ascii_lowercase().as_str(),
            "y" | "yes"
        ))
    }
}

/// Standard backends, plus the `mock://` scheme when a fixture root is set.
pub fn registry_for(env: &CliEnv) -> BackendRegistry {
    let mut registry = BackendRegistry::standard();
    if let Some(root) = &env.mock_root {
        registry.register_scheme("mock", Box::new(MockBackend::new(root.clone())));
    }
    registry
}

/// Runs the command and returns its exit status.
pub fn run_cli<S: AsRef<str>>(
    argv: &[S],
    env: &CliEnv,
    runner: &dyn CommandRunner,
    prompt: &mut dyn Prompt,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let options = match parse_args(argv) {
        Ok(CliInvocation::Help) => {
            let _ = write!(out, "{HELP}");
            return EXIT_OK;
        }
        Ok(CliInvocation::Man) => {
            let _ = write!(out, "{MAN_PAGE}");
            return EXIT_OK;
        }
        Ok(CliInvocation::Run(options)) => options,
        Err(e) => {
            let _ = writeln!(err, "getcomponents: {e}\n\n{HELP}");
            return EXIT_FATAL;
        }
    };
    let config = options.to_config(env);
    let registry = registry_for(env);
    let sink = ConsoleSink::new(out, config.verbosity);
    match engine::run(&config, &registry, runner, prompt, &sink) {
        Ok(RunOutcome::Listed(_)) => EXIT_OK,
        Ok(RunOutcome::Executed(report)) => report.exit_code(),
        Err(e) => {
            let _ = writeln!(err, "getcomponents: {e}");
            e.exit_code()
        }
    }
}
