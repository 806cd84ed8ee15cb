//! Acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use crl::auth::UsersFile;
use crl::backends::{find_tool, MOCK_FAIL_MARKER};
use crl::engine::{self, RunOutcome};
use crl::{load_document, resolve_tasks, Identity, NoPrompt, ProcessRunner, VecSink};
use crl_cli::{parse_args, registry_for, CliInvocation};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn count_prefixed(text: &str, prefix: &str) -> usize {
    text.lines().filter(|l| l.starts_with(prefix)).count()
}

fn grammar() -> Outcome {
    let start = Instant::now();
    let doc = load_document(EINSTEIN, "einstein.th").map_err(|e| e.to_string())?;
    ensure(doc.crl_version == "1.0", "version is not 1.0")?;
    ensure(doc.definitions.len() == 2, "expected 2 definitions")?;
    ensure(doc.blocks.len() == 2, "expected 2 blocks")?;
    let sizes: Vec<usize> = doc.blocks.iter().map(|b| b.checkouts.len()).collect();
    ensure(sizes == [13, 6], format!("checkout sizes {sizes:?}"))?;

    let lines: Vec<&str> = EINSTEIN.lines().collect();
    let mut rejected = 0;
    for (idx, line) in lines.iter().enumerate() {
        let Some(rest) = line.strip_prefix('!') else {
            continue;
        };
        let kw_len = rest
            .find(|c: char| c.is_whitespace() || c == '=')
            .unwrap_or(rest.len());
        for i in 0..kw_len {
            let original = rest.as_bytes()[i] as char;
            let alternatives = [
                original.to_ascii_lowercase(),
                if original == 'X' { 'Z' } else { 'X' },
                '9',
            ];
            for alt in alternatives.into_iter().filter(|a| *a != original) {
                let mut corrupted_kw = rest.to_string();
                corrupted_kw.replace_range(i..i + 1, &alt.to_string());
                let mut text: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
                text[idx] = format!("!{corrupted_kw}");
                let text = text.join("\n") + "\n";
                match load_document(&text, "einstein.th") {
                    Ok(_) => {
                        return Err(format!(
                            "accepted corrupted line {}: {}",
                            idx + 1,
                            text.lines().nth(idx).unwrap()
                        ))
                    }
                    Err(e) => {
                        let want = format!("einstein.th:{}", idx + 1);
                        ensure(
                            e.to_string().contains(&want),
                            format!("error for line {} lacks its position: {e}", idx + 1),
                        )?;
                        rejected += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(1),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "version 1.0, 2 definitions, 2 blocks, 13 + 6 paths; {rejected} keyword corruptions rejected with line numbers in {:.3} s",
        elapsed.as_secs_f64()
    ))
}

/// The svn block's `!URL` value, read without the parser.
fn raw_svn_template() -> Option<String> {
    let mut lines = EINSTEIN.lines().map(str::trim);
    while let Some(line) = lines.next() {
        if let Some(rest) = line.strip_prefix("!URL") {
            let value = rest.trim_start().strip_prefix('=')?.trim();
            return Some(if value.is_empty() {
                lines.find(|l| !l.is_empty())?.to_string()
            } else {
                value.to_string()
            });
        }
    }
    None
}

fn resolution_oracle() -> Outcome {
    let template = raw_svn_template().ok_or("no svn URL in fixture")?;
    let components = &checkout_lists(EINSTEIN)[0];
    let doc = load_document(EINSTEIN, "einstein.th").map_err(|e| e.to_string())?;
    let tasks = resolve_tasks(
        &doc,
        None,
        true,
        &[Identity::Anonymous, Identity::Anonymous],
    )
    .map_err(|e| e.to_string())?;
    let mut matches = 0;
    for c in components {
        let seg: Vec<&str> = c.split('/').collect();
        let expected = template.replace("$1", seg[0]).replace("$2", seg[1]);
        let task = tasks
            .iter()
            .find(|t| &t.component_path == c)
            .ok_or(format!("no task for {c}"))?;
        ensure(
            task.resolved_url == expected,
            format!("{c}: {} != {expected}", task.resolved_url),
        )?;
        matches += 1;
    }
    ensure(matches == 13, format!("{matches} components compared"))?;
    Ok(format!(
        "{matches}/13 svn URLs match the substitution oracle"
    ))
}

fn without_log(
    mut t: std::collections::BTreeMap<PathBuf, Vec<u8>>,
) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    t.remove(Path::new(".crl/log"));
    t
}

fn mock_assembly() -> Outcome {
    let farm = mock_farm();
    let start = Instant::now();
    let root = farm.root_arg();

    let (code, out, err) = farm.run(&["--anonymous", &root, MOCK_LIST], &mut NoPrompt);
    ensure(code == 0, format!("first run exit {code}: {err}"))?;
    ensure(
        count_prefixed(&out, "CHECKOUT ") == 19,
        "first run did not check out 19 components",
    )?;
    let produced = tree(&farm.root);
    let expected = farm.expected_tree();
    ensure(
        produced == expected,
        format!(
            "tree differs: {} produced vs {} expected files",
            produced.len(),
            expected.len()
        ),
    )?;
    let before = without_log(full_tree(&farm.root));

    let (code, listing, _) = farm.run(&["--debug", &root, MOCK_LIST], &mut NoPrompt);
    ensure(code == 0, "debug listing failed")?;
    ensure(
        listing.contains("19 components in total: 0 to check out, 19 to update"),
        format!("unexpected plan: {}", listing.lines().last().unwrap_or("")),
    )?;

    let (code, out, err) = farm.run(
        &["--anonymous", "--update", &root, MOCK_LIST],
        &mut NoPrompt,
    );
    ensure(code == 0, format!("second run exit {code}: {err}"))?;
    ensure(
        count_prefixed(&out, "UPDATE ") == 19,
        "second run did not update 19 components",
    )?;
    ensure(
        without_log(full_tree(&farm.root)) == before,
        "tree changed on update",
    )?;
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(5),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "{} files match the expected tree; 19 updates left it bit-identical; {:.2} s",
        expected.len(),
        elapsed.as_secs_f64()
    ))
}

fn failure_aggregation() -> Outcome {
    let baseline_farm = mock_farm();
    let (code, _, err) = baseline_farm.run(
        &["--anonymous", &baseline_farm.root_arg(), MOCK_LIST],
        &mut NoPrompt,
    );
    ensure(code == 0, format!("baseline run failed: {err}"))?;
    let baseline = tree(&baseline_farm.root);
    let svn = &checkout_lists(EINSTEIN)[0];

    for k in [1usize, 3, 7] {
        let injected: Vec<&String> = (0..k).map(|i| &svn[i * svn.len() / k]).collect();
        let farm = mock_farm();
        for c in &injected {
            fs::write(svn_fixture(&farm.fixtures, c).join(MOCK_FAIL_MARKER), "")
                .map_err(|e| e.to_string())?;
        }

        let opts = match parse_args(&["--anonymous", &farm.root_arg(), MOCK_LIST]) {
            Ok(CliInvocation::Run(o)) => o,
            other => return Err(format!("bad arguments: {other:?}")),
        };
        let config = opts.to_config(&farm.env());
        let outcome = engine::run(
            &config,
            &registry_for(&farm.env()),
            &ProcessRunner,
            &mut NoPrompt,
            &VecSink::new(),
        )
        .map_err(|e| e.to_string())?;
        let RunOutcome::Executed(report) = outcome else {
            return Err("nothing executed".into());
        };
        let failed: Vec<&String> = report.failures.iter().map(|f| &f.component_path).collect();
        ensure(failed == injected, format!("k={k}: failures {failed:?}"))?;
        for f in &report.failures {
            let url = format!("mock://svn/arrangements/{}/trunk", f.component_path);
            ensure(
                f.argv.len() == 4 && f.argv[..3] == ["mock", "checkout", url.as_str()],
                format!("k={k}: argv {:?}", f.argv),
            )?;
        }
        ensure(
            report.attempted == 19 && report.succeeded == 19 - k,
            format!(
                "k={k}: {} of {} succeeded",
                report.succeeded, report.attempted
            ),
        )?;

        let prefixes: Vec<PathBuf> = injected
            .iter()
            .map(|c| Path::new("Cactus/arrangements").join(c))
            .collect();
        let mut expected = baseline.clone();
        expected.retain(|p, _| !prefixes.iter().any(|x| p.starts_with(x)));
        ensure(
            tree(&farm.root) == expected,
            format!("k={k}: healthy components differ from the failure-free run"),
        )?;

        let fresh = mock_farm();
        for c in &injected {
            fs::write(svn_fixture(&fresh.fixtures, c).join(MOCK_FAIL_MARKER), "")
                .map_err(|e| e.to_string())?;
        }
        let (code, out) = fresh.run_binary(&["--anonymous", &fresh.root_arg(), MOCK_LIST]);
        ensure(code == 1, format!("k={k}: binary exit code {code}"))?;
        let header = format!("The following {k} component(s) had errors:");
        let listed: Vec<&str> = out
            .lines()
            .skip_while(|l| *l != header)
            .skip(1)
            .take_while(|l| l.starts_with("  "))
            .map(str::trim)
            .collect();
        let injected_str: Vec<&str> = injected.iter().map(|s| s.as_str()).collect();
        ensure(
            listed == injected_str,
            format!("k={k}: summary lists {listed:?}"),
        )?;
    }
    Ok("k = 1, 3, 7: exactly the injected components fail with their argv; the rest match the clean run; exit code 1".into())
}

fn users_file_stable(path: &Path) -> Result<(), String> {
    let bytes = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let loaded = UsersFile::load(path).map_err(|e| e.to_string())?;
    ensure(
        loaded.to_text() == bytes,
        "users file does not re-render identically",
    )?;
    let copy = path.with_extension("copy");
    let mut again = UsersFile::parse(&bytes, &copy).map_err(|e| e.to_string())?;
    again.path = copy.clone();
    again.save().map_err(|e| e.to_string())?;
    ensure(
        fs::read(&copy).map_err(|e| e.to_string())? == bytes.as_bytes(),
        "saved users file differs",
    )
}

fn authentication_flow() -> Outcome {
    let farm = mock_farm();
    fs::write(
        farm.fixtures.join("extra.th"),
        "!CRL_VERSION = 1.0\n!TARGET = extra\n!TYPE = svn\n\
         !URL = mock://svn/arrangements/$1/$2/trunk\n!CHECKOUT = CactusBase/Time\n",
    )
    .map_err(|e| e.to_string())?;
    let root = farm.root_arg();
    let svn_key = "mock://svn/arrangements/$1/$2/trunk";
    let git_key = "mock://git/McLachlan";

    // Anonymous flag: nobody is asked and nothing is stored.
    let mut p = Scripted::default();
    let (code, _, err) = farm.run(
        &["--anonymous", &root, MOCK_LIST, "mock://extra.th"],
        &mut p,
    );
    ensure(code == 0, format!("anonymous run exit {code}: {err}"))?;
    ensure(
        p.asked.is_empty(),
        format!("anonymous run asked {:?}", p.asked),
    )?;
    ensure(!farm.users.exists(), "anonymous run wrote the users file")?;

    // Fresh prompts for the two AUTH_URL blocks; the third block has none.
    let mut p = Scripted::answering(&["alice", "-"]);
    let (code, out, err) = farm.run(&["-v", &root, MOCK_LIST, "mock://extra.th"], &mut p);
    ensure(code == 0, format!("prompted run exit {code}: {err}"))?;
    ensure(
        p.asked == [svn_key, git_key],
        format!("prompted run asked {:?}", p.asked),
    )?;
    ensure(
        count_prefixed(&out, "  $ mock login ") == 1
            && out
                .contains("  $ mock login mock://svn/arrangements/CactusArchive/ADM/trunk alice\n"),
        format!(
            "expected one login for the first svn component, saw {:?}",
            out.lines()
                .filter(|l| l.contains("mock login"))
                .collect::<Vec<_>>()
        ),
    )?;
    let stored = fs::read_to_string(&farm.users).map_err(|e| e.to_string())?;
    ensure(
        stored == format!("{svn_key} alice\n{git_key} -\n"),
        format!("users file holds {stored:?}"),
    )?;
    users_file_stable(&farm.users)?;

    // Stored records: no questions, no login.
    let mut p = Scripted::default();
    let (code, out, err) = farm.run(&["-v", &root, MOCK_LIST, "mock://extra.th"], &mut p);
    ensure(code == 0, format!("stored run exit {code}: {err}"))?;
    ensure(
        p.asked.is_empty(),
        format!("stored run asked {:?}", p.asked),
    )?;
    ensure(
        !out.contains("mock login"),
        "stored username logged in again",
    )?;

    // Reset: questions come back.
    let mut p = Scripted::answering(&["bob", "bob"]);
    let (code, _, err) = farm.run(
        &[
            "--reset-authentication",
            &root,
            MOCK_LIST,
            "mock://extra.th",
        ],
        &mut p,
    );
    ensure(code == 0, format!("reset run exit {code}: {err}"))?;
    ensure(p.asked.len() == 2, format!("reset run asked {:?}", p.asked))?;
    let stored = fs::read_to_string(&farm.users).map_err(|e| e.to_string())?;
    ensure(
        stored == format!("{svn_key} bob\n{git_key} bob\n"),
        format!("users file after reset holds {stored:?}"),
    )?;
    users_file_stable(&farm.users)?;
    Ok("anonymous flag, no AUTH_URL, stored record and fresh prompt all behave; reset resumes prompting; users file round-trips".into())
}

fn run_binary_in(dir: &Path, users: &Path, args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_getcomponents"))
        .args(args)
        .env("CRL_USERS", users)
        .env("CRL_MOCK_ROOT", dir)
        .stdin(std::process::Stdio::null())
        .output()
        .map_err(|e| e.to_string())?;
    Ok((
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr),
    ))
}

fn shallow_clone() -> Outcome {
    if find_tool("git").is_none() {
        return Err("git is not installed".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = dir.path();
    git_upstream(&base.join("upstream/Carpet"), 50)?;
    let url = format!("file://{}/upstream/$1", base.display());
    let list = base.join("list.th");
    fs::write(
        &list,
        format!(
            "!CRL_VERSION = 1.0\n!TARGET = anon\n!TYPE = git\n!URL = {url}\n!CHECKOUT = Carpet\n\
             !TARGET = auth\n!URL = {url}\n!AUTH_URL = {url}\n!CHECKOUT = Carpet\n"
        ),
    )
    .map_err(|e| e.to_string())?;
    let users = base.join("users");
    fs::write(&users, format!("{url} tester\n")).map_err(|e| e.to_string())?;
    let root = format!("--root={}", base.join("work").display());
    let (code, out) = run_binary_in(base, &users, &[&root, list.to_str().unwrap()])?;
    ensure(code == 0, format!("exit {code}: {out}"))?;

    let objects = |d: &Path| -> Result<usize, String> {
        Ok(git(d, &["rev-list", "--objects", "--all"])?.lines().count())
    };
    let anon = base.join("work/anon/Carpet");
    let full = base.join("work/auth/Carpet");
    let (a, f) = (objects(&anon)?, objects(&full)?);
    ensure(a < f, format!("shallow has {a} objects, full has {f}"))?;
    let commits = git(&full, &["rev-list", "--count", "HEAD"])?;
    ensure(
        commits.trim() == "50",
        format!("full clone has {} commits", commits.trim()),
    )?;
    Ok(format!(
        "anonymous clone {a} objects < authenticated {f}; 50 commits reachable"
    ))
}

fn live_git(base: &Path) -> Result<(), String> {
    let repo = base.join("git-up/Comp");
    git_upstream(&repo, 1)?;
    let list = base.join("git.th");
    fs::write(
        &list,
        format!(
            "!CRL_VERSION = 1.0\n!TARGET = arr\n!TYPE = git\n!URL = file://{}/git-up/$1\n!CHECKOUT = Comp\n",
            base.display()
        ),
    )
    .map_err(|e| e.to_string())?;
    let users = base.join("users");
    let root = format!("--root={}", base.join("work").display());
    let (code, out) = run_binary_in(base, &users, &[&root, list.to_str().unwrap()])?;
    ensure(code == 0, format!("git checkout exit {code}: {out}"))?;
    fs::write(repo.join("counter"), "changed\n").map_err(|e| e.to_string())?;
    git(&repo, &["commit", "-q", "-am", "change"])?;
    let (code, out) = run_binary_in(base, &users, &["--update", &root, list.to_str().unwrap()])?;
    ensure(code == 0, format!("git update exit {code}: {out}"))?;
    let got = fs::read_to_string(base.join("work/arr/Comp/counter")).map_err(|e| e.to_string())?;
    ensure(
        got == "changed\n",
        "git update did not bring the new commit",
    )
}

fn live_svn(base: &Path) -> Result<(), String> {
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(args[0])
            .args(&args[1..])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            out.status.success(),
            String::from_utf8_lossy(&out.stderr).into_owned(),
        )
    };
    let repo = base.join("svn-repo");
    let src = base.join("svn-src");
    fs::create_dir_all(&src).map_err(|e| e.to_string())?;
    fs::write(src.join("file"), "one\n").map_err(|e| e.to_string())?;
    run(&["svnadmin", "create", repo.to_str().unwrap()])?;
    let url = format!("file://{}", repo.display());
    run(&[
        "svn",
        "import",
        "-q",
        "-m",
        "init",
        src.to_str().unwrap(),
        &format!("{url}/Comp/trunk"),
    ])?;
    let list = base.join("svn.th");
    fs::write(
        &list,
        format!("!CRL_VERSION = 1.0\n!TARGET = arr\n!TYPE = svn\n!URL = {url}/$1/trunk\n!CHECKOUT = Comp\n"),
    )
    .map_err(|e| e.to_string())?;
    let users = base.join("users");
    let root = format!("--root={}", base.join("svn-work").display());
    let (code, out) = run_binary_in(base, &users, &[&root, list.to_str().unwrap()])?;
    ensure(code == 0, format!("svn checkout exit {code}: {out}"))?;
    let (code, out) = run_binary_in(base, &users, &["--update", &root, list.to_str().unwrap()])?;
    ensure(code == 0, format!("svn update exit {code}: {out}"))
}

fn live_tools() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    if find_tool("git").is_some() {
        live_git(dir.path())?;
        done.push("git");
    } else {
        skipped.push("git");
    }
    if find_tool("svn").is_some() && find_tool("svnadmin").is_some() {
        live_svn(dir.path())?;
        done.push("svn");
    } else {
        skipped.push("svn");
    }
    let mut detail = if done.is_empty() {
        "optional; no tools installed".to_string()
    } else {
        format!("checkout + update via {} exited 0", done.join(" and "))
    };
    if !skipped.is_empty() {
        detail.push_str(&format!("; not installed: {}", skipped.join(", ")));
    }
    Ok(detail)
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("grammar fixture", grammar),
        ("resolution oracle", resolution_oracle),
        ("mock assembly", mock_assembly),
        ("failure aggregation", failure_aggregation),
        ("authentication flow", authentication_flow),
        ("shallow clone", shallow_clone),
        ("live tools", live_tools),
    ];
    let mut failed = BTreeSet::new();
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", n + 1),
            Err(reason) => {
                println!("FAIL criterion {} ({name}): {reason}", n + 1);
                failed.insert(n + 1);
            }
        }
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
