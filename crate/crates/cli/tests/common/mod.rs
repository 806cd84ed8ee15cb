#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use crl::auth::{AuthError, Prompt};
use crl::ProcessRunner;
use crl_cli::{run_cli, CliEnv};

pub const EINSTEIN: &str = include_str!("../../../core/tests/fixtures/einstein.th");
pub const MOCK_LIST: &str = "mock://einstein.th";

/// Component paths of each `!CHECKOUT` list, read with plain string handling.
pub fn checkout_lists(text: &str) -> Vec<Vec<String>> {
    let mut lists = Vec::new();
    let mut current: Option<Vec<String>> = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(directive) = line.strip_prefix('!') {
            lists.extend(current.take());
            let (key, value) = directive.split_once('=').unwrap();
            if key.trim() == "CHECKOUT" {
                let first = value.trim();
                current = Some(if first.is_empty() {
                    Vec::new()
                } else {
                    vec![first.to_string()]
                });
            }
        } else if let Some(list) = current.as_mut() {
            list.push(line.to_string());
        }
    }
    lists.extend(current);
    lists
}

/// A directory of mock repositories shaped like the Einstein Toolkit list:
/// thirteen Subversion thorns and one Git repository holding six thorns.
pub struct Farm {
    pub dir: tempfile::TempDir,
    pub fixtures: PathBuf,
    pub root: PathBuf,
    pub users: PathBuf,
}

pub fn mock_list_text() -> String {
    EINSTEIN
        .replace("http://svn.cactuscode.org/", "mock://svn/")
        .replace("https://svn.cactuscode.org/", "mock://svn/")
        .replace("git://carpetcode.dyndns.org/", "mock://git/")
        .replace(
            "carpetgit@carpetcode.dyndns.org:McLachlan",
            "mock://git/McLachlan",
        )
}

pub fn svn_fixture(fixtures: &Path, component: &str) -> PathBuf {
    fixtures
        .join("svn/arrangements")
        .join(component)
        .join("trunk")
}

pub fn git_repo(fixtures: &Path) -> PathBuf {
    fixtures.join("git/McLachlan")
}

pub fn mock_farm() -> Farm {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("farm");
    fs::create_dir_all(&fixtures).unwrap();
    fs::write(fixtures.join("einstein.th"), mock_list_text()).unwrap();

    let lists = checkout_lists(EINSTEIN);
    for c in &lists[0] {
        let trunk = svn_fixture(&fixtures, c);
        fs::create_dir_all(trunk.join("src")).unwrap();
        fs::write(trunk.join("interface.ccl"), format!("implements: {c}\n")).unwrap();
        fs::write(trunk.join("src/make.code.defn"), format!("# {c}\nSRCS =\n")).unwrap();
    }
    let repo = git_repo(&fixtures);
    for c in &lists[1] {
        let sub = repo.join(c.rsplit('/').next().unwrap());
        fs::create_dir_all(sub.join("src")).unwrap();
        fs::write(sub.join("param.ccl"), format!("# {c}\n")).unwrap();
        fs::write(sub.join("src/calc.cc"), format!("// {c}\n")).unwrap();
    }
    fs::create_dir_all(repo.join("m")).unwrap();
    fs::write(repo.join("m/McLachlan.m"), "generator").unwrap();

    Farm {
        root: dir.path().join("work"),
        users: dir.path().join("users"),
        fixtures,
        dir,
    }
}

impl Farm {
    pub fn env(&self) -> CliEnv {
        CliEnv {
            users_file: self.users.clone(),
            mock_root: Some(self.fixtures.clone()),
        }
    }

    pub fn root_arg(&self) -> String {
        format!("--root={}", self.root.display())
    }

    /// Runs the command in-process; returns exit status, stdout and stderr.
    pub fn run(&self, args: &[&str], prompt: &mut dyn Prompt) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(
            args,
            &self.env(),
            &ProcessRunner,
            prompt,
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    /// Runs the installed binary with no terminal attached.
    pub fn run_binary(&self, args: &[&str]) -> (i32, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_getcomponents"))
            .args(args)
            .env("CRL_USERS", &self.users)
            .env("CRL_MOCK_ROOT", &self.fixtures)
            .stdin(std::process::Stdio::null())
            .output()
            .unwrap();
        (
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).into_owned(),
        )
    }

    /// The tree a correct run must produce, built straight from the fixtures.
    pub fn expected_tree(&self) -> BTreeMap<PathBuf, Vec<u8>> {
        let lists = checkout_lists(EINSTEIN);
        let arr = Path::new("Cactus/arrangements");
        let mut out = BTreeMap::new();
        for c in &lists[0] {
            for (rel, bytes) in tree(&svn_fixture(&self.fixtures, c)) {
                out.insert(arr.join(c).join(rel), bytes);
            }
        }
        for c in &lists[1] {
            let sub = c.rsplit('/').next().unwrap();
            for (rel, bytes) in tree(&git_repo(&self.fixtures).join(sub)) {
                out.insert(arr.join(c).join(rel), bytes);
            }
        }
        out
    }
}

/// Files under `dir` (relative path → bytes), ignoring hidden entries.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walk(dir, false)
}

/// Every file under `dir`, hidden ones included.
pub fn full_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walk(dir, true)
}

fn walk(dir: &Path, hidden: bool) -> BTreeMap<PathBuf, Vec<u8>> {
    fn go(base: &Path, dir: &Path, hidden: bool, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for e in entries.flatten() {
            if !hidden && e.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            let p = e.path();
            if p.is_dir() {
                go(base, &p, hidden, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().into(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    go(dir, dir, hidden, &mut out);
    out
}

/// Answers questions from a script and counts them.
#[derive(Default)]
pub struct Scripted {
    pub usernames: VecDeque<String>,
    pub asked: Vec<String>,
    pub confirms: usize,
}

impl Scripted {
    pub fn answering(answers: &[&str]) -> Self {
        Scripted {
            usernames: answers.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }
}

impl Prompt for Scripted {
    fn username(&mut self, auth_url: &str) -> Result<String, AuthError> {
        self.asked.push(auth_url.to_string());
        self.usernames
            .pop_front()
            .ok_or(AuthError::PromptUnavailable)
    }

    fn confirm(&mut self, _question: &str) -> Result<bool, AuthError> {
        self.confirms += 1;
        Ok(true)
    }
}

pub fn git(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new("git")
        .args(["-c", "user.name=t", "-c", "user.email=t@example.org"])
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// A local git repository with `commits` commits on `main`.
pub fn git_upstream(repo: &Path, commits: usize) -> Result<(), String> {
    fs::create_dir_all(repo).map_err(|e| e.to_string())?;
    git(repo, &["init", "-q", "-b", "main"])?;
    for i in 0..commits {
        fs::write(repo.join("counter"), format!("{i}\n")).map_err(|e| e.to_string())?;
        fs::write(repo.join(format!("f{i}")), format!("{i}\n")).map_err(|e| e.to_string())?;
        git(repo, &["add", "-A"])?;
        git(repo, &["commit", "-q", "-m", &format!("commit {i}")])?;
    }
    Ok(())
}
