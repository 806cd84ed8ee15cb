use std::path::Path;

use super::{
    create_parent, ensure_empty_destination, ensure_working_copy, path_arg, Backend, BackendError,
    CommandTrace, ExecContext,
};
use crate::resolver::{FetchTask, Mode};

/// Darcs via `darcs`. Repo extracts are not supported for darcs.
#[derive(Debug, Default)]
pub struct DarcsBackend;

fn get_argv(task: &FetchTask) -> Vec<String> {
    vec![
        "darcs".into(),
        "get".into(),
        task.resolved_url.clone(),
        path_arg(&task.destination),
    ]
}

fn pull_argv(task: &FetchTask) -> Vec<String> {
    vec![
        "darcs".into(),
        "pull".into(),
        "--all".into(),
        "--repodir".into(),
        path_arg(&task.destination),
    ]
}

impl Backend for DarcsBackend {
    fn tool(&self) -> Option<&str> {
        Some("darcs")
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        match task.mode {
            Mode::Checkout => get_argv(task),
            Mode::Update => pull_argv(task),
        }
    }

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_empty_destination(&task.destination)?;
        create_parent(&task.destination)?;
        ctx.run_checked(&task.component_path, get_argv(task), Path::new("."))
    }

    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_working_copy(task)?;
        ctx.run_checked(&task.component_path, pull_argv(task), Path::new("."))
    }
}
