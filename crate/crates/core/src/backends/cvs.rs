use std::fs;
use std::path::Path;

use super::{
    ensure_empty_destination, ensure_working_copy, Backend, BackendError, CommandTrace, ExecContext,
};
use crate::resolver::{Credential, FetchTask, Mode};

/// CVS via `cvs`. The repository URL is the CVSROOT; the component path is
/// the module name.
#[derive(Debug, Default)]
pub struct CvsBackend;

/// Builds the CVSROOT for `url` under `credential`.
///
/// Any user already written into a `:pserver:` root is replaced. With
/// `with_password`, the anonymous pair is embedded as `user:pass@` (used
/// for `cvs login` only). Non-pserver roots are returned unchanged.
pub fn cvsroot_for(url: &str, credential: &Credential, with_password: bool) -> String {
    let Some(rest) = url.strip_prefix(":pserver:") else {
        return url.to_string();
    };
    let host_path = match rest.split_once('@') {
        Some((user, host_path)) if !user.contains('/') => host_path,
        _ => rest,
    };
    match credential {
        Credential::Anonymous => url.to_string(),
        Credential::Username(user) => format!(":pserver:{user}@{host_path}"),
        Credential::CvsAnon { user, pass } if with_password => {
            format!(":pserver:{user}:{pass}@{host_path}")
        }
        Credential::CvsAnon { user, .. } => format!(":pserver:{user}@{host_path}"),
    }
}

fn leaf_name(dest: &Path) -> String {
    dest.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| ".".to_string())
}

fn checkout_argv(task: &FetchTask) -> Vec<String> {
    vec![
        "cvs".into(),
        "-d".into(),
        cvsroot_for(&task.resolved_url, &task.credentials, false),
        "checkout".into(),
        "-d".into(),
        leaf_name(&task.destination),
        task.component_path.clone(),
    ]
}

fn update_argv() -> Vec<String> {
    vec![
        "cvs".into(),
        "-q".into(),
        "update".into(),
        "-d".into(),
        "-P".into(),
    ]
}

fn parent_dir(dest: &Path) -> &Path {
    match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

impl Backend for CvsBackend {
    fn tool(&self) -> Option<&str> {
        Some("cvs")
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        match task.mode {
            Mode::Checkout => checkout_argv(task),
            Mode::Update => update_argv(),
        }
    }

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_empty_destination(&task.destination)?;
        let parent = parent_dir(&task.destination);
        fs::create_dir_all(parent).map_err(|e| BackendError::io(parent, e))?;
        ctx.run_checked(&task.component_path, checkout_argv(task), parent)
    }

    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_working_copy(task)?;
        ctx.run_checked(&task.component_path, update_argv(), &task.destination)
    }

    fn login(
        &self,
        url: &str,
        credential: &Credential,
        ctx: &ExecContext,
    ) -> Result<Option<CommandTrace>, BackendError> {
        if matches!(credential, Credential::Anonymous) || !url.starts_with(":pserver:") {
            return Ok(None);
        }
        let argv = vec![
            "cvs".into(),
            "-d".into(),
            cvsroot_for(url, credential, true),
            "login".into(),
        ];
        ctx.run_checked(url, argv, Path::new(".")).map(Some)
    }
}
