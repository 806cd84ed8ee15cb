//! Turns a raw directive stream into a [`Document`] and then into
//! executable [`FetchTask`]s.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::parser::{
    parse_location, DirectiveValue, Keyword, Location, ParseError, Pos, RawDirective,
};

pub const SUPPORTED_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VcsType {
    Cvs,
    Svn,
    Git,
    Darcs,
    Hg,
    Http,
    Ftp,
}

impl VcsType {
    pub const ALL: [VcsType; 7] = [
        VcsType::Cvs,
        VcsType::Svn,
        VcsType::Git,
        VcsType::Darcs,
        VcsType::Hg,
        VcsType::Http,
        VcsType::Ftp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VcsType::Cvs => "cvs",
            VcsType::Svn => "svn",
            VcsType::Git => "git",
            VcsType::Darcs => "darcs",
            VcsType::Hg => "hg",
            VcsType::Http => "http",
            VcsType::Ftp => "ftp",
        }
    }

    /// Types whose retrieval clones a whole repository.
    pub fn supports_repo_path(self) -> bool {
        matches!(self, VcsType::Git | VcsType::Hg)
    }

    pub fn is_download(self) -> bool {
        matches!(self, VcsType::Http | VcsType::Ftp)
    }
}

impl fmt::Display for VcsType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VcsType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        VcsType::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentBlock {
    pub target: String,
    pub vcs_type: VcsType,
    pub url: Location,
    pub auth_url: Option<Location>,
    pub anon_user: Option<String>,
    pub anon_pass: Option<String>,
    pub repo_path: Option<String>,
    pub name_override: Option<String>,
    pub checkouts: Vec<String>,
    /// Where the block's `!CHECKOUT` appeared.
    pub origin: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub crl_version: String,
    pub definitions: Vec<Definition>,
    pub blocks: Vec<ComponentBlock>,
    pub source_names: Vec<String>,
}

impl Document {
    pub fn checkout_count(&self) -> usize {
        self.blocks.iter().map(|b| b.checkouts.len()).sum()
    }
}

/// Who a block is retrieved as, before backend-specific details are added.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Identity {
    Anonymous,
    Username(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Credential {
    Anonymous,
    Username(String),
    /// CVS anonymous access with the list-supplied user/password pair.
    CvsAnon {
        user: String,
        pass: String,
    },
}

impl Credential {
    pub fn is_authenticated(&self) -> bool {
        matches!(self, Credential::Username(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Checkout,
    Update,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Checkout => "CHECKOUT",
            Mode::Update => "UPDATE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchTask {
    pub component_path: String,
    pub resolved_url: String,
    pub destination: PathBuf,
    pub vcs_type: VcsType,
    pub mode: Mode,
    pub credentials: Credential,
    pub repo_extract: Option<String>,
    /// Index of the originating block in the (merged) document.
    pub block: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("positional parameter ${index} out of range for component `{component_path}`")]
pub struct PositionalOutOfRange {
    pub index: usize,
    pub component_path: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("{pos}: undefined variable `${name}`")]
    UndefinedVariable { name: String, pos: Pos },
    #[error("{pos}: `{name}` is already defined")]
    DuplicateDefinition { name: String, pos: Pos },
    #[error("{pos}: !CHECKOUT before !{which} was set")]
    MissingRequiredDirective { which: Keyword, pos: Pos },
    #[error("{pos}: !ANON_USER and !ANON_PASS must be set together")]
    OrphanAnonPass { pos: Pos },
    #[error("{pos}: !ANON_USER/!ANON_PASS are only meaningful for cvs blocks")]
    AnonCredentialsRequireCvs { pos: Pos },
    #[error("{pos}: unsupported !TYPE `{value}`")]
    InvalidType { value: String, pos: Pos },
    #[error("{pos}: !REPO_PATH requires a git or hg block")]
    RepoPathWithoutDvcs { pos: Pos },
    #[error("{pos}: !NAME cannot rename more than one component")]
    AmbiguousName { pos: Pos },
    #[error("{pos}: unsupported CRL version `{version}` (expected {SUPPORTED_VERSION})")]
    UnsupportedVersion { version: String, pos: Pos },
    #[error("{pos}: {source}")]
    Location {
        pos: Pos,
        #[source]
        source: ParseError,
    },
    #[error("{pos}: component `{component}`: {source}")]
    Positional {
        pos: Pos,
        component: String,
        #[source]
        source: PositionalOutOfRange,
    },
    #[error("{expected} credential decisions required, got {got}")]
    DecisionCount { expected: usize, got: usize },
    #[error("component lists disagree on CRL version: `{a}` vs `{b}`")]
    VersionMismatch { a: String, b: String },
    #[error("no component lists given")]
    NoDocuments,
}

/// Replaces `$NAME` references using `defs`; positional `$1` is untouched.
fn expand_text(
    text: &str,
    defs: &HashMap<String, String>,
    pos: &Pos,
) -> Result<String, ResolveError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find('$') {
        out.push_str(&rest[..at]);
        let after = &rest[at + 1..];
        let len = after
            .char_indices()
            .find(|&(i, c)| {
                !(c.is_ascii_alphanumeric() || c == '_') || (i == 0 && c.is_ascii_digit())
            })
            .map(|(i, _)| i)
            .unwrap_or(after.len());
        if len == 0 {
            out.push('$');
            rest = after;
            continue;
        }
        let name = &after[..len];
        let value = defs
            .get(name)
            .ok_or_else(|| ResolveError::UndefinedVariable {
                name: name.to_string(),
                pos: pos.clone(),
            })?;
        out.push_str(value);
        rest = &after[len..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Evaluates `!DEFINE`s in order and substitutes them into every later value.
///
/// The DEFINE directives stay in the returned stream, carrying their
/// expanded values.
pub fn expand_defines(
    directives: &[RawDirective],
) -> Result<(Vec<Definition>, Vec<RawDirective>), ResolveError> {
    let mut defs: HashMap<String, String> = HashMap::new();
    let mut definitions = Vec::new();
    let mut out = Vec::with_capacity(directives.len());

    for d in directives {
        let pos = d.pos();
        let value = match &d.value {
            DirectiveValue::Text(t) => DirectiveValue::Text(expand_text(t, &defs, &pos)?),
            DirectiveValue::Checkout(paths) => DirectiveValue::Checkout(
                paths
                    .iter()
                    .map(|p| expand_text(p, &defs, &pos))
                    .collect::<Result<_, _>>()?,
            ),
            DirectiveValue::Define { name, value } => {
                if defs.contains_key(name) {
                    return Err(ResolveError::DuplicateDefinition {
                        name: name.clone(),
                        pos,
                    });
                }
                let value = expand_text(value, &defs, &pos)?;
                defs.insert(name.clone(), value.clone());
                definitions.push(Definition {
                    name: name.clone(),
                    value: value.clone(),
                });
                DirectiveValue::Define {
                    name: name.clone(),
                    value,
                }
            }
        };
        out.push(RawDirective {
            keyword: d.keyword,
            value,
            origin: d.origin.clone(),
        });
    }
    Ok((definitions, out))
}

/// An optional directive value tagged with how many CHECKOUTs preceded it.
#[derive(Debug)]
struct Slot<T> {
    value: Option<T>,
    epoch: usize,
}

impl<T> Default for Slot<T> {
    fn default() -> Self {
        Slot {
            value: None,
            epoch: 0,
        }
    }
}

impl<T: Clone> Slot<T> {
    fn set(&mut self, value: T, epoch: usize) {
        self.value = Some(value);
        self.epoch = epoch;
    }

    /// Drops values left over from an earlier block.
    fn clear_if_before(&mut self, epoch: usize) {
        if self.epoch < epoch {
            self.value = None;
        }
    }

    fn get(&self) -> Option<T> {
        self.value.clone()
    }
}

#[derive(Debug, Default)]
struct BlockState {
    target: Option<String>,
    vcs_type: Option<VcsType>,
    url: Option<Location>,
    auth_url: Slot<Location>,
    anon_user: Slot<String>,
    anon_pass: Slot<String>,
    repo_path: Slot<String>,
    name: Option<String>,
    checkouts_seen: usize,
}

fn location_at(value: &str, pos: &Pos) -> Result<Location, ResolveError> {
    parse_location(value).map_err(|source| ResolveError::Location {
        pos: pos.clone(),
        source,
    })
}

/// Groups an expanded directive stream into component blocks.
///
/// TARGET, TYPE and URL persist until reassigned. AUTH_URL, ANON_USER,
/// ANON_PASS and REPO_PATH set before the previous CHECKOUT are dropped when
/// URL is reassigned. NAME applies to the next CHECKOUT only.
pub fn assemble_blocks(directives: &[RawDirective]) -> Result<Document, ResolveError> {
    let mut state = BlockState::default();
    let mut blocks = Vec::new();
    let mut definitions = Vec::new();
    let mut source_names: Vec<String> = Vec::new();
    let mut version: Option<String> = None;

    for d in directives {
        let pos = d.pos();
        if !source_names.contains(&pos.source) {
            source_names.push(pos.source.clone());
        }
        let epoch = state.checkouts_seen;
        let text = || d.text().unwrap_or_default().to_string();
        match d.keyword {
            Keyword::CrlVersion => {
                let v = text();
                if v != SUPPORTED_VERSION {
                    return Err(ResolveError::UnsupportedVersion { version: v, pos });
                }
                version.get_or_insert(v);
            }
            Keyword::Define => {
                if let DirectiveValue::Define { name, value } = &d.value {
                    definitions.push(Definition {
                        name: name.clone(),
                        value: value.clone(),
                    });
                }
            }
            Keyword::Target => state.target = Some(text()),
            Keyword::Type => {
                let value = text();
                let t = value
                    .parse::<VcsType>()
                    .map_err(|_| ResolveError::InvalidType { value, pos })?;
                state.vcs_type = Some(t);
            }
            Keyword::Url => {
                state.url = Some(location_at(&text(), &pos)?);
                state.auth_url.clear_if_before(epoch);
                state.anon_user.clear_if_before(epoch);
                state.anon_pass.clear_if_before(epoch);
                state.repo_path.clear_if_before(epoch);
            }
            Keyword::AuthUrl => state.auth_url.set(location_at(&text(), &pos)?, epoch),
            Keyword::AnonUser => state.anon_user.set(text(), epoch),
            Keyword::AnonPass => state.anon_pass.set(text(), epoch),
            Keyword::RepoPath => state.repo_path.set(text(), epoch),
            Keyword::Name => state.name = Some(text()),
            Keyword::Checkout => {
                let DirectiveValue::Checkout(checkouts) = &d.value else {
                    unreachable!("CHECKOUT always carries a component list");
                };
                blocks.push(materialize_block(&state, checkouts.clone(), pos)?);
                state.name = None;
                state.checkouts_seen += 1;
            }
        }
    }

    Ok(Document {
        crl_version: version.unwrap_or_else(|| SUPPORTED_VERSION.to_string()),
        definitions,
        blocks,
        source_names,
    })
}

fn materialize_block(
    state: &BlockState,
    checkouts: Vec<String>,
    pos: Pos,
) -> Result<ComponentBlock, ResolveError> {
    let missing = |which| ResolveError::MissingRequiredDirective {
        which,
        pos: pos.clone(),
    };
    let target = state
        .target
        .clone()
        .ok_or_else(|| missing(Keyword::Target))?;
    let vcs_type = state.vcs_type.ok_or_else(|| missing(Keyword::Type))?;
    let url = state.url.clone().ok_or_else(|| missing(Keyword::Url))?;

    let anon_user = state.anon_user.get();
    let anon_pass = state.anon_pass.get();
    if anon_user.is_some() != anon_pass.is_some() {
        return Err(ResolveError::OrphanAnonPass { pos });
    }
    if anon_user.is_some() && vcs_type != VcsType::Cvs {
        return Err(ResolveError::AnonCredentialsRequireCvs { pos });
    }
    let repo_path = state.repo_path.get();
    if repo_path.is_some() && !vcs_type.supports_repo_path() {
        return Err(ResolveError::RepoPathWithoutDvcs { pos });
    }
    if state.name.is_some() && checkouts.len() > 1 {
        return Err(ResolveError::AmbiguousName { pos });
    }

    Ok(ComponentBlock {
        target,
        vcs_type,
        url,
        auth_url: state.auth_url.get(),
        anon_user,
        anon_pass,
        repo_path,
        name_override: state.name.clone(),
        checkouts,
        origin: pos,
    })
}

/// Replaces every `$k` in `template` with the k-th `/`-separated segment of
/// `component_path`, counting from 1.
pub fn substitute_positional(
    template: &str,
    component_path: &str,
) -> Result<String, PositionalOutOfRange> {
    let segments: Vec<&str> = component_path.split('/').collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(at) = rest.find('$') {
        out.push_str(&rest[..at]);
        let after = &rest[at + 1..];
        let digits = after
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(after.len());
        if digits == 0 {
            out.push('$');
            rest = after;
            continue;
        }
        // Absurdly long digit runs saturate and fall out of range below.
        let index: usize = after[..digits].parse().unwrap_or(usize::MAX);
        match index.checked_sub(1).and_then(|i| segments.get(i)) {
            Some(seg) => out.push_str(seg),
            None => {
                return Err(PositionalOutOfRange {
                    index,
                    component_path: component_path.to_string(),
                })
            }
        }
        rest = &after[digits..];
    }
    out.push_str(rest);
    Ok(out)
}

fn push_relative(base: &mut PathBuf, part: &str) {
    if base.as_os_str().is_empty() {
        base.push(part);
    } else {
        base.push(part.trim_start_matches('/'));
    }
}

/// Destination directory of `component` within `block`.
pub fn destination_for(block: &ComponentBlock, component: &str, root: Option<&Path>) -> PathBuf {
    let mut dest = root.map(Path::to_path_buf).unwrap_or_default();
    push_relative(&mut dest, &block.target);
    let component = match (&block.name_override, component.rsplit_once('/')) {
        (Some(name), Some((parent, _))) => format!("{parent}/{name}"),
        (Some(name), None) => name.clone(),
        (None, _) => component.to_string(),
    };
    push_relative(&mut dest, &component);
    dest
}

/// The credential a block is fetched with, given the chosen identity.
pub fn credential_for(block: &ComponentBlock, identity: &Identity) -> Credential {
    match (identity, &block.anon_user, &block.anon_pass) {
        (Identity::Username(u), _, _) => Credential::Username(u.clone()),
        (Identity::Anonymous, Some(user), Some(pass)) => Credential::CvsAnon {
            user: user.clone(),
            pass: pass.clone(),
        },
        (Identity::Anonymous, _, _) => Credential::Anonymous,
    }
}

/// The URL template a block is fetched from under `credential`.
pub fn url_template(block: &ComponentBlock, credential: &Credential) -> String {
    match (&block.auth_url, credential) {
        (Some(auth), Credential::Username(_)) => auth.to_string(),
        _ => block.url.to_string(),
    }
}

/// Expands every block into one task per checkout path, in document order.
///
/// `decisions` holds one identity per block; `anonymous` overrides them all.
/// Tasks start in [`Mode::Checkout`]; the engine assigns update modes.
pub fn resolve_tasks(
    document: &Document,
    root_override: Option<&Path>,
    anonymous: bool,
    decisions: &[Identity],
) -> Result<Vec<FetchTask>, ResolveError> {
    if decisions.len() != document.blocks.len() {
        return Err(ResolveError::DecisionCount {
            expected: document.blocks.len(),
            got: decisions.len(),
        });
    }
    let mut tasks = Vec::with_capacity(document.checkout_count());
    for (index, (block, identity)) in document.blocks.iter().zip(decisions).enumerate() {
        let identity = if anonymous {
            &Identity::Anonymous
        } else {
            identity
        };
        let credentials = credential_for(block, identity);
        let template = url_template(block, &credentials);
        for component in &block.checkouts {
            let positional = |source| ResolveError::Positional {
                pos: block.origin.clone(),
                component: component.clone(),
                source,
            };
            let resolved_url = substitute_positional(&template, component).map_err(positional)?;
            let repo_extract = match &block.repo_path {
                Some(rp) if block.vcs_type.supports_repo_path() => {
                    Some(substitute_positional(rp, component).map_err(positional)?)
                }
                _ => None,
            };
            tasks.push(FetchTask {
                component_path: component.clone(),
                resolved_url,
                destination: destination_for(block, component, root_override),
                vcs_type: block.vcs_type,
                mode: Mode::Checkout,
                credentials: credentials.clone(),
                repo_extract,
                block: index,
            });
        }
    }
    Ok(tasks)
}

/// Concatenates documents in order. Definitions stay file-scoped.
pub fn merge_documents(documents: Vec<Document>) -> Result<Document, ResolveError> {
    let mut iter = documents.into_iter();
    let mut merged = iter.next().ok_or(ResolveError::NoDocuments)?;
    for doc in iter {
        if doc.crl_version != merged.crl_version {
            return Err(ResolveError::VersionMismatch {
                a: merged.crl_version,
                b: doc.crl_version,
            });
        }
        merged.definitions.extend(doc.definitions);
        merged.blocks.extend(doc.blocks);
        for name in doc.source_names {
            if !merged.source_names.contains(&name) {
                merged.source_names.push(name);
            }
        }
    }
    Ok(merged)
}

/// Drops tasks whose destination was already claimed by an earlier task.
pub fn dedup_tasks(tasks: Vec<FetchTask>) -> Vec<FetchTask> {
    let mut seen = HashSet::new();
    tasks
        .into_iter()
        .filter(|t| seen.insert(t.destination.clone()))
        .collect()
}

/// Parses one CRL text all the way to a [`Document`].
pub fn load_document(text: &str, source_name: &str) -> Result<Document, LoadError> {
    let raw = crate::parser::parse_str(text, source_name)?;
    let (_, expanded) = expand_defines(&raw)?;
    Ok(assemble_blocks(&expanded)?)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}
