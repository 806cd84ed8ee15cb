use std::path::Path;

use super::{
    create_parent, ensure_empty_destination, ensure_working_copy, path_arg, Backend, BackendError,
    CommandTrace, ExecContext,
};
use crate::resolver::{Credential, FetchTask, Mode};

/// Subversion via `svn`.
#[derive(Debug, Default)]
pub struct SvnBackend;

fn checkout_argv(task: &FetchTask) -> Vec<String> {
    let mut argv = vec!["svn".to_string(), "checkout".to_string()];
    if let Credential::Username(user) = &task.credentials {
        argv.extend(["--username".to_string(), user.clone()]);
    }
    argv.push(task.resolved_url.clone());
    argv.push(path_arg(&task.destination));
    argv
}

fn update_argv(task: &FetchTask) -> Vec<String> {
    vec!["svn".into(), "update".into(), path_arg(&task.destination)]
}

impl Backend for SvnBackend {
    fn tool(&self) -> Option<&str> {
        Some("svn")
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        match task.mode {
            Mode::Checkout => checkout_argv(task),
            Mode::Update => update_argv(task),
        }
    }

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_empty_destination(&task.destination)?;
        create_parent(&task.destination)?;
        ctx.run_checked(&task.component_path, checkout_argv(task), Path::new("."))
    }

    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_working_copy(task)?;
        ctx.run_checked(&task.component_path, update_argv(task), Path::new("."))
    }
}
