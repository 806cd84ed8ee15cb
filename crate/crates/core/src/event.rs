//! Run events emitted by the engine and backends.
//!
//! Sinks decide what to show; the CLI renders them per verbosity level.

use std::cell::RefCell;
use std::path::PathBuf;
use std::time::Duration;

use crate::resolver::Mode;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// `--debug` listing of the planned work.
    PlanListed {
        entries: Vec<PlanEntry>,
    },
    TaskStarted {
        mode: Mode,
        component: String,
        destination: PathBuf,
    },
    /// An external command is about to run.
    Command {
        argv: Vec<String>,
        working_dir: PathBuf,
    },
    /// Captured output of the command that just ran.
    Output {
        text: String,
    },
    TaskFailed {
        component: String,
        message: String,
    },
    Warning(String),
    Finished {
        failed_components: Vec<String>,
        elapsed: Duration,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub mode: Mode,
    pub component: String,
    pub destination: PathBuf,
}

pub trait EventSink {
    fn emit(&self, event: Event);
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: Event) {}
}

/// Collects events in memory.
#[derive(Default)]
pub struct VecSink {
    events: RefCell<Vec<Event>>,
}

impl VecSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&self) -> Vec<Event> {
        std::mem::take(&mut self.events.borrow_mut())
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.events.borrow().clone()
    }
}

impl EventSink for VecSink {
    fn emit(&self, event: Event) {
        self.events.borrow_mut().push(event);
    }
}
