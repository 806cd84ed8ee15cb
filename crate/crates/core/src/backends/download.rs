use std::fs;
use std::path::{Path, PathBuf};

use super::{ensure_empty_destination, path_arg, Backend, BackendError, CommandTrace, ExecContext};
use crate::resolver::FetchTask;

/// Plain HTTP/FTP downloads through `curl`. The file named by the URL is
/// stored inside the destination directory and never unpacked.
#[derive(Debug, Default)]
pub struct DownloadBackend;

/// File name a download is stored under: the last URL path segment.
pub(crate) fn file_name_for(url: &str) -> String {
    let without_query = url.split(['?', '#']).next().unwrap_or(url);
    let after_scheme = without_query
        .split_once("://")
        .map(|(_, rest)| rest)
        .unwrap_or(without_query);
    match after_scheme.split_once('/') {
        Some((_, path)) => path
            .rsplit('/')
            .find(|s| !s.is_empty())
            .unwrap_or("index.html")
            .to_string(),
        None => "index.html".to_string(),
    }
}

fn target_file(task: &FetchTask) -> PathBuf {
    task.destination.join(file_name_for(&task.resolved_url))
}

fn fetch_argv(task: &FetchTask) -> Vec<String> {
    vec![
        "curl".into(),
        "-fsSL".into(),
        "-o".into(),
        path_arg(&target_file(task)),
        task.resolved_url.clone(),
    ]
}

fn fetch(task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
    fs::create_dir_all(&task.destination).map_err(|e| BackendError::io(&task.destination, e))?;
    ctx.run_checked(&task.component_path, fetch_argv(task), Path::new("."))
}

impl Backend for DownloadBackend {
    fn tool(&self) -> Option<&str> {
        Some("curl")
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        fetch_argv(task)
    }

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_empty_destination(&task.destination)?;
        fetch(task, ctx)
    }

    /// Downloads have no update concept; the file is fetched again.
    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        fetch(task, ctx)
    }
}
