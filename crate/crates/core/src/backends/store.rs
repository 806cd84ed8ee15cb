//! Shared clone store for distributed repositories.
//!
//! A repository is cloned once under `<root>/.crl/repos/<hash>` and each
//! requested component is copied out of it into its destination. The copy
//! carries a small marker directory so later runs recognise it as a working
//! copy of the right type.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{is_metadata_name, BackendError, CommandTrace, ExecContext};
use crate::resolver::VcsType;

pub const EXTRACT_MARKER_DIR: &str = ".crl-extract";
const MARKER_FILE: &str = "source";

/// Location of the shared clone of `url` under `root`.
pub fn store_dir(root: &Path, url: &str) -> PathBuf {
    let digest = Sha256::digest(url.as_bytes());
    root.join(".crl")
        .join("repos")
        .join(&hex::encode(digest)[..16])
}

pub(crate) fn read_marker(destination: &Path) -> Option<VcsType> {
    let text = fs::read_to_string(destination.join(EXTRACT_MARKER_DIR).join(MARKER_FILE)).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("vcs="))
        .and_then(|v| v.parse().ok())
}

/// Tracks which stores were already brought up to date during this run.
#[derive(Debug, Default)]
pub(crate) struct CloneStore {
    synced: RefCell<HashSet<PathBuf>>,
}

impl CloneStore {
    /// Makes sure the store for `url` exists and is current, cloning or
    /// pulling at most once per run. Returns the store directory and the
    /// trace of whatever command ran.
    pub(crate) fn sync(
        &self,
        ctx: &ExecContext,
        url: &str,
        clone: impl FnOnce(&Path) -> Result<CommandTrace, BackendError>,
        pull: impl FnOnce(&Path) -> Result<CommandTrace, BackendError>,
    ) -> Result<(PathBuf, Option<CommandTrace>), BackendError> {
        let dir = store_dir(&ctx.root, url);
        if self.synced.borrow().contains(&dir) {
            return Ok((dir, None));
        }
        let trace = if dir.exists() {
            pull(&dir)?
        } else {
            super::create_parent(&dir)?;
            clone(&dir)?
        };
        self.synced.borrow_mut().insert(dir.clone());
        Ok((dir, Some(trace)))
    }
}

fn valid_extract(extract: &str) -> bool {
    let p = Path::new(extract);
    !extract.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)))
}

/// Presents the `repo_extract` subtree of `repo_dir` at `destination`.
///
/// Existing content at `destination` is replaced; tool metadata is never
/// copied.
pub fn materialize_component(
    repo_dir: &Path,
    repo_extract: &str,
    destination: &Path,
    vcs: VcsType,
) -> Result<(), BackendError> {
    let missing = || BackendError::ExtractMissing {
        extract: repo_extract.to_string(),
        repo: repo_dir.to_path_buf(),
    };
    if !valid_extract(repo_extract) {
        return Err(missing());
    }
    let source = repo_dir.join(repo_extract);
    if !source.is_dir() {
        return Err(missing());
    }
    fs::create_dir_all(destination).map_err(|e| BackendError::io(destination, e))?;
    clear_dir(destination, &[EXTRACT_MARKER_DIR])?;
    copy_tree(&source, destination)?;

    let marker = destination.join(EXTRACT_MARKER_DIR);
    fs::create_dir_all(&marker).map_err(|e| BackendError::io(&marker, e))?;
    let contents = format!(
        "vcs={vcs}\nrepo={}\nextract={repo_extract}\n",
        repo_dir.display()
    );
    let file = marker.join(MARKER_FILE);
    fs::write(&file, contents).map_err(|e| BackendError::io(&file, e))
}

/// Removes everything in `dir` except the entries named in `keep`.
pub(crate) fn clear_dir(dir: &Path, keep: &[&str]) -> Result<(), BackendError> {
    let entries = fs::read_dir(dir).map_err(|e| BackendError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| BackendError::io(dir, e))?;
        if keep.iter().any(|k| entry.file_name() == *k) {
            continue;
        }
        let path = entry.path();
        let ft = entry.file_type().map_err(|e| BackendError::io(&path, e))?;
        let res = if ft.is_dir() {
            fs::remove_dir_all(&path)
        } else {
            fs::remove_file(&path)
        };
        res.map_err(|e| BackendError::io(&path, e))?;
    }
    Ok(())
}

/// Recursively copies `from` into `to`, skipping tool metadata.
pub(crate) fn copy_tree(from: &Path, to: &Path) -> Result<(), BackendError> {
    fs::create_dir_all(to).map_err(|e| BackendError::io(to, e))?;
    let entries = fs::read_dir(from).map_err(|e| BackendError::io(from, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| BackendError::io(from, e))?;
        let name = entry.file_name();
        if is_metadata_name(&name.to_string_lossy()) {
            continue;
        }
        let src = entry.path();
        let dst = to.join(&name);
        let ft = entry.file_type().map_err(|e| BackendError::io(&src, e))?;
        if ft.is_dir() {
            copy_tree(&src, &dst)?;
        } else if ft.is_symlink() {
            copy_symlink(&src, &dst)?;
        } else {
            fs::copy(&src, &dst).map_err(|e| BackendError::io(&src, e))?;
        }
    }
    Ok(())
}

#[cfg(unix)]
fn copy_symlink(src: &Path, dst: &Path) -> Result<(), BackendError> {
    let target = fs::read_link(src).map_err(|e| BackendError::io(src, e))?;
    std::os::unix::fs::symlink(target, dst).map_err(|e| BackendError::io(dst, e))
}

#[cfg(not(unix))]
fn copy_symlink(src: &Path, dst: &Path) -> Result<(), BackendError> {
    fs::copy(src, dst)
        .map(|_| ())
        .map_err(|e| BackendError::io(src, e))
}
