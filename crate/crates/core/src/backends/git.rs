use std::path::Path;

use super::store::{materialize_component, CloneStore};
use super::{
    create_parent, ensure_empty_destination, ensure_working_copy, path_arg, Backend, BackendError,
    CommandTrace, ExecContext,
};
use crate::resolver::{Credential, FetchTask, Mode};

/// Git via the `git` executable.
///
/// Anonymous clones are shallow (depth 1); authenticated clones keep full
/// history. Tasks with a repo extract share one clone in the store.
#[derive(Debug, Default)]
pub struct GitBackend {
    store: CloneStore,
}

fn clone_argv(url: &str, dest: &Path, credentials: &Credential) -> Vec<String> {
    let mut argv = vec!["git".to_string(), "clone".to_string()];
    if !credentials.is_authenticated() {
        argv.extend(["--depth".to_string(), "1".to_string()]);
    }
    argv.push(url.to_string());
    argv.push(path_arg(dest));
    argv
}

fn pull_argv(dest: &Path) -> Vec<String> {
    vec![
        "git".into(),
        "-C".into(),
        path_arg(dest),
        "pull".into(),
        "--no-rebase".into(),
    ]
}

impl GitBackend {
    fn sync_store(
        &self,
        task: &FetchTask,
        ctx: &ExecContext,
    ) -> Result<(std::path::PathBuf, Option<CommandTrace>), BackendError> {
        let here = Path::new(".");
        self.store.sync(
            ctx,
            &task.resolved_url,
            |dir| {
                ctx.run_checked(
                    &task.component_path,
                    clone_argv(&task.resolved_url, dir, &task.credentials),
                    here,
                )
            },
            |dir| ctx.run_checked(&task.component_path, pull_argv(dir), here),
        )
    }

    fn extract_into(
        &self,
        task: &FetchTask,
        extract: &str,
        ctx: &ExecContext,
    ) -> Result<CommandTrace, BackendError> {
        let (repo, trace) = self.sync_store(task, ctx)?;
        materialize_component(&repo, extract, &task.destination, task.vcs_type)?;
        Ok(trace.unwrap_or_else(|| reused_store_trace(&repo, &task.destination)))
    }
}

/// Trace for a component served from a store already synced this run.
pub(crate) fn reused_store_trace(repo: &Path, dest: &Path) -> CommandTrace {
    CommandTrace {
        argv: vec!["materialize".into(), path_arg(repo), path_arg(dest)],
        working_dir: ".".into(),
        outcome: Some(0),
        captured_output: String::new(),
    }
}

impl Backend for GitBackend {
    fn tool(&self) -> Option<&str> {
        Some("git")
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        match task.mode {
            Mode::Checkout => clone_argv(&task.resolved_url, &task.destination, &task.credentials),
            Mode::Update => pull_argv(&task.destination),
        }
    }

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_empty_destination(&task.destination)?;
        if let Some(extract) = &task.repo_extract {
            return self.extract_into(task, extract, ctx);
        }
        create_parent(&task.destination)?;
        ctx.run_checked(
            &task.component_path,
            clone_argv(&task.resolved_url, &task.destination, &task.credentials),
            Path::new("."),
        )
    }

    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_working_copy(task)?;
        if let Some(extract) = &task.repo_extract {
            return self.extract_into(task, extract, ctx);
        }
        ctx.run_checked(
            &task.component_path,
            pull_argv(&task.destination),
            Path::new("."),
        )
    }
}
