//! Filesystem-backed stand-in for a version control server.
//!
//! A `mock://<path>` URL names the directory `<fixture_root>/<path>`.
//! Checkout copies it, update re-copies it, and every operation is recorded
//! as a [`CommandTrace`] with an argv of the form `mock <verb> <url> <dest>`.
//! Failures are injected per URL, either through [`MockBackend::fail_url`]
//! or by placing a [`MOCK_FAIL_MARKER`] file in the fixture directory.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::git::reused_store_trace;
use super::store::{clear_dir, copy_tree, materialize_component, CloneStore};
use super::{
    ensure_empty_destination, ensure_working_copy, path_arg, Backend, BackendError, CommandTrace,
    ExecContext,
};
use crate::resolver::{Credential, FetchTask, Mode, VcsType};

pub const MOCK_METADATA_DIR: &str = ".mock";
pub const MOCK_FAIL_MARKER: &str = ".mock-fail";
const TYPE_FILE: &str = "type";

pub(crate) fn read_marker(destination: &Path) -> Option<VcsType> {
    fs::read_to_string(destination.join(MOCK_METADATA_DIR).join(TYPE_FILE))
        .ok()
        .and_then(|t| t.trim().parse().ok())
}

#[derive(Debug)]
pub struct MockBackend {
    fixture_root: PathBuf,
    failing: RefCell<HashSet<String>>,
    store: CloneStore,
}

impl MockBackend {
    pub fn new(fixture_root: PathBuf) -> Self {
        MockBackend {
            fixture_root,
            failing: RefCell::new(HashSet::new()),
            store: CloneStore::default(),
        }
    }

    /// Makes every operation on `url` fail.
    pub fn fail_url(&self, url: &str) {
        self.failing.borrow_mut().insert(url.to_string());
    }

    pub fn clear_failures(&self) {
        self.failing.borrow_mut().clear();
    }

    pub fn fixture_path(&self, url: &str) -> Option<PathBuf> {
        url.strip_prefix("mock://")
            .map(|rest| self.fixture_root.join(rest.trim_start_matches('/')))
    }

    /// Copies the fixture for `url` into `dest`, as a recorded pseudo-command.
    fn fetch(
        &self,
        ctx: &ExecContext,
        verb: &str,
        task: &FetchTask,
        dest: &Path,
    ) -> Result<CommandTrace, BackendError> {
        let url = &task.resolved_url;
        let argv = vec!["mock".into(), verb.into(), url.clone(), path_arg(dest)];
        let fixture = self.fixture_path(url);
        let trace = ctx.run_with(argv, Path::new("."), || {
            let Some(fixture) = fixture.filter(|f| f.is_dir()) else {
                return Ok((Some(2), format!("mock: no fixture for {url}\n")));
            };
            if self.failing.borrow().contains(url) || fixture.join(MOCK_FAIL_MARKER).exists() {
                return Ok((Some(1), format!("mock: injected failure for {url}\n")));
            }
            fs::create_dir_all(dest)?;
            clear_dir(dest, &[MOCK_METADATA_DIR]).map_err(into_io)?;
            copy_tree(&fixture, dest).map_err(into_io)?;
            let meta = dest.join(MOCK_METADATA_DIR);
            fs::create_dir_all(&meta)?;
            fs::write(meta.join(TYPE_FILE), format!("{}\n", task.vcs_type))?;
            Ok((Some(0), String::new()))
        })?;
        if trace.success() {
            Ok(trace)
        } else {
            Err(BackendError::FetchFailed {
                component: task.component_path.clone(),
                trace,
            })
        }
    }

    fn extract_into(
        &self,
        task: &FetchTask,
        extract: &str,
        ctx: &ExecContext,
    ) -> Result<CommandTrace, BackendError> {
        let (repo, trace) = self.store.sync(
            ctx,
            &task.resolved_url,
            |dir| self.fetch(ctx, "clone", task, dir),
            |dir| self.fetch(ctx, "pull", task, dir),
        )?;
        materialize_component(&repo, extract, &task.destination, task.vcs_type)?;
        Ok(trace.unwrap_or_else(|| reused_store_trace(&repo, &task.destination)))
    }
}

fn into_io(e: BackendError) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

impl Backend for MockBackend {
    fn tool(&self) -> Option<&str> {
        None
    }

    fn command_for(&self, task: &FetchTask) -> Vec<String> {
        let verb = match (task.mode, task.repo_extract.is_some()) {
            (Mode::Checkout, false) => "checkout",
            (Mode::Checkout, true) => "clone",
            (Mode::Update, false) => "update",
            (Mode::Update, true) => "pull",
        };
        vec![
            "mock".into(),
            verb.into(),
            task.resolved_url.clone(),
            path_arg(&task.destination),
        ]
    }

    fn checkout(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_empty_destination(&task.destination)?;
        match &task.repo_extract {
            Some(extract) => self.extract_into(task, extract, ctx),
            None => self.fetch(ctx, "checkout", task, &task.destination),
        }
    }

    fn update(&self, task: &FetchTask, ctx: &ExecContext) -> Result<CommandTrace, BackendError> {
        ensure_working_copy(task)?;
        match &task.repo_extract {
            Some(extract) => self.extract_into(task, extract, ctx),
            None => self.fetch(ctx, "update", task, &task.destination),
        }
    }

    fn login(
        &self,
        url: &str,
        credential: &Credential,
        ctx: &ExecContext,
    ) -> Result<Option<CommandTrace>, BackendError> {
        if matches!(credential, Credential::Anonymous) {
            return Ok(None);
        }
        let user = match credential {
            Credential::Username(u) | Credential::CvsAnon { user: u, .. } => u.clone(),
            Credential::Anonymous => unreachable!(),
        };
        let argv = vec!["mock".into(), "login".into(), url.into(), user];
        ctx.run_with(argv, Path::new("."), || Ok((Some(0), String::new())))
            .map(Some)
    }
}
