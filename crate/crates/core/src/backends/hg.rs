use std::path::{Path, PathBuf};

use super::git::reused_store_trace;
use super::store::{materialize_component, CloneStore};
use super::{
    create_parent, ensure_empty_destination, ensure_working_copy, path_arg, Backend, BackendError,
    CommandTrace, ExecContext,
};
use crate::resolver::{FetchTask, Mode};

/// Mercurial via `hg`. Honors repo extracts through the shared store.
#[derive(Debug, Default)]
pub struct HgBackend {
    store: CloneStore,
}

fn clone_argv(url: &str, dest: &Path) -> Vec<String> {
    vec!["hg".into(), "clone".into(), url.into(), path_arg(dest)]
}

fn pull_argv(dest: &Path) -> Vec<String> {
    vec![
        "hg".into(),
        "pull".into(),
        "-u".into(),
        "-R".into(),
        path_arg(dest),
    ]
}

impl HgBackend {
    fn extract_into(
        &self,
        task: &FetchTask,
        extract: &str,
        ctx: &ExecContext,
    ) -> Result<CommandTrace, BackendError> {
        let here = Path::new(".");
        let (repo, trace): (PathBuf, _) = self.store.sync(
            ctx,
            &task.resolved_url,
            |dir| {
                ctx.run_checked(
                    &task.component_path,
                    clone_argv(&task.resolved_url, dir),
                    here,
                )
            },
            |dir| ctx.run_checked(&task.component_path, pull_argv(dir), here),
        )?;
        materialize_component(&repo, extract, &task.destination, task.vcs_type)?;
        Ok(trace.unwrap_or_else(|| reused_store_trace(&repo, &task.destination)))
    }
}

impl Backend for HgBackend {
    fn tool(&self) -> Option<&str> {
        Some("hg")
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        match task.mode {
            Mode::Checkout => clone_argv(&task.resolved_url, &task.destination),
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
            clone_argv(&task.resolved_url, &task.destination),
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
