//! Line scanner and directive parser for CRL component lists.
//!
//! Parsing happens in two passes. [`scan`] strips comments and blank lines
//! while keeping the original line numbers, and [`parse_document`] turns the
//! surviving lines into an ordered stream of [`RawDirective`]s. Variable
//! expansion and block grouping live in [`crate::resolver`].

use std::fmt;

use thiserror::Error;

/// Position of a line inside a named source (file path or URL).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pos {
    pub source: String,
    pub line: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.line)
    }
}

/// A comment-stripped, trimmed, non-empty line of input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLine {
    pub source_name: String,
    pub line_number: usize,
    pub content: String,
}

impl RawLine {
    pub fn pos(&self) -> Pos {
        Pos {
            source: self.source_name.clone(),
            line: self.line_number,
        }
    }

    fn is_directive(&self) -> bool {
        self.content.starts_with('!')
    }
}

/// The closed set of CRL directives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    CrlVersion,
    Define,
    Target,
    Type,
    Url,
    AuthUrl,
    AnonUser,
    AnonPass,
    RepoPath,
    Checkout,
    Name,
}

impl Keyword {
    pub const ALL: [Keyword; 11] = [
        Keyword::CrlVersion,
        Keyword::Define,
        Keyword::Target,
        Keyword::Type,
        Keyword::Url,
        Keyword::AuthUrl,
        Keyword::AnonUser,
        Keyword::AnonPass,
        Keyword::RepoPath,
        Keyword::Checkout,
        Keyword::Name,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::CrlVersion => "CRL_VERSION",
            Keyword::Define => "DEFINE",
            Keyword::Target => "TARGET",
            Keyword::Type => "TYPE",
            Keyword::Url => "URL",
            Keyword::AuthUrl => "AUTH_URL",
            Keyword::AnonUser => "ANON_USER",
            Keyword::AnonPass => "ANON_PASS",
            Keyword::RepoPath => "REPO_PATH",
            Keyword::Checkout => "CHECKOUT",
            Keyword::Name => "NAME",
        }
    }

    /// Case-sensitive lookup.
    pub fn from_token(token: &str) -> Option<Keyword> {
        Keyword::ALL.into_iter().find(|k| k.as_str() == token)
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectiveValue {
    Text(String),
    Define { name: String, value: String },
    Checkout(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct RawDirective {
    pub keyword: Keyword,
    pub value: DirectiveValue,
    /// The line holding the `!KEYWORD`.
    pub origin: RawLine,
}

impl RawDirective {
    pub fn pos(&self) -> Pos {
        self.origin.pos()
    }

    /// The single-text value, if this directive carries one.
    pub fn text(&self) -> Option<&str> {
        match &self.value {
            DirectiveValue::Text(t) => Some(t),
            _ => None,
        }
    }
}

impl PartialEq for RawDirective {
    // Origins are ignored so that re-serialized lists compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.keyword == other.keyword && self.value == other.value
    }
}

/// A repository location, decomposed per the three LOC forms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Location {
    /// `:pserver:<path>` (CVS).
    Pserver { path: String },
    /// `<scheme>://<path>`.
    SchemeUrl { scheme: String, path: String },
    /// `<user>@<host>:<path>` (scp-style git).
    UserHostPath {
        user: String,
        host: String,
        path: String,
    },
}

impl Location {
    pub fn scheme(&self) -> Option<&str> {
        match self {
            Location::SchemeUrl { scheme, .. } => Some(scheme),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Pserver { path } => write!(f, ":pserver:{path}"),
            Location::SchemeUrl { scheme, path } => write!(f, "{scheme}://{path}"),
            Location::UserHostPath { user, host, path } => write!(f, "{user}@{host}:{path}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{pos}: unknown directive `!{keyword}`")]
    UnknownDirective { pos: Pos, keyword: String },
    #[error("{pos}: first directive must be !CRL_VERSION")]
    MissingVersionHeader { pos: Pos },
    #[error("{pos}: malformed directive: {reason}")]
    MalformedDirective { pos: Pos, reason: String },
    #[error("{pos}: !CHECKOUT lists no components")]
    EmptyCheckout { pos: Pos },
    #[error("{pos}: text outside of any directive: `{text}`")]
    UnexpectedText { pos: Pos, text: String },
    #[error("malformed location `{0}`")]
    MalformedLocation(String),
}

/// Splits `text` into comment-free, trimmed, non-empty lines.
pub fn scan(text: &str, source_name: &str) -> Vec<RawLine> {
    text.lines()
        .enumerate()
        .filter_map(|(idx, line)| {
            let content = match line.find('#') {
                Some(at) => &line[..at],
                None => line,
            }
            .trim();
            (!content.is_empty()).then(|| RawLine {
                source_name: source_name.to_string(),
                line_number: idx + 1,
                content: content.to_string(),
            })
        })
        .collect()
}

/// True iff `value` is a non-empty NAME: alphanumerics, `.` and `_`.
pub fn validate_name(value: &str) -> bool {
    !value.is_empty()
        && value
            .chars()
            .all(|c| c.is_alphanumeric() || c == '.' || c == '_')
}

fn is_path_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | '_' | '-' | '$')
}

/// True iff `value` is a PATH: `/`-separated non-empty segments, with an
/// optional leading `/`.
pub fn validate_path(value: &str) -> bool {
    let body = value.strip_prefix('/').unwrap_or(value);
    !body.is_empty()
        && body
            .split('/')
            .all(|seg| !seg.is_empty() && seg.chars().all(is_path_char))
}

fn is_host_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | '_' | '-')
}

/// Decomposes a repository location into one of the LOC forms.
pub fn parse_location(value: &str) -> Result<Location, ParseError> {
    let malformed = || ParseError::MalformedLocation(value.to_string());
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return Err(malformed());
    }
    if let Some(path) = value.strip_prefix(":pserver:") {
        if path.is_empty() {
            return Err(malformed());
        }
        return Ok(Location::Pserver {
            path: path.to_string(),
        });
    }
    if let Some((scheme, path)) = value.split_once("://") {
        let scheme_ok = !scheme.is_empty()
            && scheme
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '.' | '-'));
        if scheme_ok && !path.is_empty() {
            return Ok(Location::SchemeUrl {
                scheme: scheme.to_string(),
                path: path.to_string(),
            });
        }
        return Err(malformed());
    }
    if let Some((user, rest)) = value.split_once('@') {
        if let Some((host, path)) = rest.split_once(':') {
            let field_ok = |s: &str| !s.is_empty() && s.chars().all(is_host_char);
            if field_ok(user) && field_ok(host) && !path.is_empty() {
                return Ok(Location::UserHostPath {
                    user: user.to_string(),
                    host: host.to_string(),
                    path: path.to_string(),
                });
            }
        }
    }
    Err(malformed())
}

/// True if `text` references a `$NAME` variable (positional `$1` excluded).
pub(crate) fn has_variable_reference(text: &str) -> bool {
    text.split('$')
        .skip(1)
        .any(|rest| rest.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_'))
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `!KEYWORD rest` into the keyword token and the remainder.
fn split_keyword(content: &str) -> (&str, &str) {
    let body = content[1..].trim_start();
    let end = body
        .find(|c: char| c.is_whitespace() || c == '=')
        .unwrap_or(body.len());
    (&body[..end], body[end..].trim_start())
}

fn malformed(line: &RawLine, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedDirective {
        pos: line.pos(),
        reason: reason.into(),
    }
}

fn check_value(keyword: Keyword, value: &str, line: &RawLine) -> Result<(), ParseError> {
    let ok = match keyword {
        Keyword::CrlVersion | Keyword::Type | Keyword::AnonUser => validate_name(value),
        Keyword::Url | Keyword::AuthUrl => {
            if has_variable_reference(value) {
                // Checked again once definitions are expanded.
                !value.chars().any(char::is_whitespace)
            } else {
                parse_location(value).is_ok()
            }
        }
        Keyword::Target | Keyword::AnonPass | Keyword::RepoPath | Keyword::Name => {
            validate_path(value)
        }
        Keyword::Define | Keyword::Checkout => true,
    };
    if ok {
        Ok(())
    } else {
        Err(malformed(
            line,
            format!("invalid value `{value}` for !{keyword}"),
        ))
    }
}

/// Parses scanned lines into the ordered directive stream.
pub fn parse_document(lines: &[RawLine]) -> Result<Vec<RawDirective>, ParseError> {
    let mut out: Vec<RawDirective> = Vec::new();
    let mut iter = lines.iter().peekable();

    while let Some(line) = iter.next() {
        if !line.is_directive() {
            return Err(if out.is_empty() {
                ParseError::MissingVersionHeader { pos: line.pos() }
            } else {
                ParseError::UnexpectedText {
                    pos: line.pos(),
                    text: line.content.clone(),
                }
            });
        }

        let (token, rest) = split_keyword(&line.content);
        let keyword = Keyword::from_token(token).ok_or_else(|| ParseError::UnknownDirective {
            pos: line.pos(),
            keyword: token.to_string(),
        })?;
        if out.is_empty() && keyword != Keyword::CrlVersion {
            return Err(ParseError::MissingVersionHeader { pos: line.pos() });
        }

        // DEFINE carries its name before the `=`.
        let (define_name, rest) = if keyword == Keyword::Define {
            let end = rest
                .find(|c: char| c.is_whitespace() || c == '=')
                .unwrap_or(rest.len());
            let name = &rest[..end];
            if !is_identifier(name) {
                return Err(malformed(line, format!("invalid definition name `{name}`")));
            }
            (Some(name.to_string()), rest[end..].trim_start())
        } else {
            (None, rest)
        };

        let Some(value) = rest.strip_prefix('=') else {
            return Err(malformed(line, "expected `=`"));
        };
        let mut value = value.trim().to_string();

        if keyword == Keyword::Checkout {
            let mut components = Vec::new();
            if !value.is_empty() {
                components.push(value);
            }
            while let Some(next) = iter.next_if(|l| !l.is_directive()) {
                components.push(next.content.clone());
            }
            if components.is_empty() {
                return Err(ParseError::EmptyCheckout { pos: line.pos() });
            }
            if let Some(bad) = components.iter().find(|c| !validate_path(c)) {
                return Err(malformed(line, format!("invalid component path `{bad}`")));
            }
            out.push(RawDirective {
                keyword,
                value: DirectiveValue::Checkout(components),
                origin: line.clone(),
            });
            continue;
        }

        // A value may start on the following line.
        if value.is_empty() {
            match iter.next_if(|l| !l.is_directive()) {
                Some(next) => value = next.content.clone(),
                None => return Err(malformed(line, format!("!{keyword} requires a value"))),
            }
        }

        let value = match define_name {
            Some(name) => {
                if !(validate_path(&value) || parse_location(&value).is_ok()) {
                    return Err(malformed(
                        line,
                        format!("invalid value `{value}` for !DEFINE {name}"),
                    ));
                }
                DirectiveValue::Define { name, value }
            }
            None => {
                check_value(keyword, &value, line)?;
                DirectiveValue::Text(value)
            }
        };
        out.push(RawDirective {
            keyword,
            value,
            origin: line.clone(),
        });
    }

    if out.is_empty() {
        return Err(ParseError::MissingVersionHeader {
            pos: Pos {
                source: lines
                    .first()
                    .map(|l| l.source_name.clone())
                    .unwrap_or_default(),
                line: 0,
            },
        });
    }
    Ok(out)
}

/// Scans and parses in one step.
pub fn parse_str(text: &str, source_name: &str) -> Result<Vec<RawDirective>, ParseError> {
    parse_document(&scan(text, source_name))
}

/// Renders directives back to CRL text that parses to the same stream.
pub fn to_crl_text(directives: &[RawDirective]) -> String {
    let mut out = String::new();
    for d in directives {
        match &d.value {
            DirectiveValue::Text(v) => out.push_str(&format!("!{} = {}\n", d.keyword, v)),
            DirectiveValue::Define { name, value } => {
                out.push_str(&format!("!DEFINE {name} = {value}\n"))
            }
            DirectiveValue::Checkout(paths) => {
                out.push_str(&format!("!{} =\n", d.keyword));
                for p in paths {
                    out.push_str(p);
                    out.push('\n');
                }
            }
        }
    }
    out
}
