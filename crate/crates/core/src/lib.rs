//! Component Retrieval Language.
//!
//! A CRL list names software components, the repositories they live in and
//! where each one goes in a local source tree. This crate parses such lists,
//! resolves them into fetch tasks and runs those tasks against CVS,
//! Subversion, Git, Mercurial, Darcs and plain HTTP/FTP downloads.
//!
//! ```
//! let doc = crl::load_document(
//!     "!CRL_VERSION = 1.0\n\
//!      !TARGET = arrangements\n\
//!      !TYPE = git\n\
//!      !URL = git://example.org/$1.git\n\
//!      !CHECKOUT = Carpet\n",
//!     "example.th",
//! )
//! .unwrap();
//! let tasks = crl::resolve_tasks(&doc, None, true, &[crl::Identity::Anonymous]).unwrap();
//! assert_eq!(tasks[0].resolved_url, "git://example.org/Carpet.git");
//! ```

pub mod auth;
pub mod backends;
pub mod engine;
pub mod event;
pub mod parser;
pub mod resolver;

pub use auth::{AuthError, Decision, NoPrompt, Prompt, UsersFile};
pub use backends::{Backend, BackendError, BackendRegistry, CommandRunner, ProcessRunner};
pub use engine::{execute, plan, run, EngineError, FetchReport, Plan, RunConfig, RunOutcome};
pub use event::{Event, EventSink, NullSink, VecSink};
pub use parser::{parse_str, ParseError};
pub use resolver::{
    load_document, resolve_tasks, Document, FetchTask, Identity, LoadError, Mode, ResolveError,
    VcsType,
};
