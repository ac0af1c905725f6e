//! Append-only execution journal.
//!
//! Text form, one record per line:
//! `<iso-timestamp> <component-id> <action> <ok|fail> <millis>`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use parking_lot::Mutex;

use super::lifecycle::{LifecycleAction, LifecycleState};
use super::ComponentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Fail,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalRecord {
    pub timestamp: DateTime<Utc>,
    pub component: ComponentId,
    pub action: LifecycleAction,
    pub outcome: Outcome,
    pub millis: u64,
}

impl fmt::Display for JournalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
            self.component,
            self.action,
            self.outcome.as_str(),
            self.millis
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JournalError {
    #[error("malformed journal line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("journal line {line}: `{action}` is not legal for {component} in state {state}")]
    IllegalReplay {
        line: usize,
        component: ComponentId,
        action: LifecycleAction,
        state: LifecycleState,
    },
}

impl FromStr for JournalRecord {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        let [ts, id, action, outcome, millis] = fields[..] else {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        };
        let timestamp = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| format!("bad timestamp `{ts}`: {e}"))?
            .with_timezone(&Utc);
        let action = action.parse().map_err(|e| format!("{e}"))?;
        let outcome = match outcome {
            "ok" => Outcome::Ok,
            "fail" => Outcome::Fail,
            other => return Err(format!("bad outcome `{other}`")),
        };
        let millis = millis
            .parse()
            .map_err(|e| format!("bad duration `{millis}`: {e}"))?;
        Ok(JournalRecord {
            timestamp,
            component: ComponentId::from(id),
            action,
            outcome,
            millis,
        })
    }
}

#[derive(Debug, Default)]
pub struct Journal {
    records: Mutex<Vec<JournalRecord>>,
}

impl Journal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: JournalRecord) {
        self.records.lock().push(record);
    }

    pub fn len(&self) -> usize {
        self.records.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<JournalRecord> {
        self.records.lock().clone()
    }

    /// Records appended after the first `from`.
    pub fn since(&self, from: usize) -> Vec<JournalRecord> {
        self.records.lock().get(from..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn export(&self) -> String {
        let mut out = String::new();
        for r in self.records.lock().iter() {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

/// Parse exported journal text.
pub fn parse_journal(text: &str) -> Result<Vec<JournalRecord>, JournalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.parse().map_err(|reason| JournalError::Malformed {
                line: i + 1,
                reason,
            })
        })
        .collect()
}

/// Rebuild the state map by replaying successful records from `Uninstalled`.
pub fn replay(
    records: &[JournalRecord],
) -> Result<BTreeMap<ComponentId, LifecycleState>, JournalError> {
    let mut states = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let state = states
            .entry(r.component.clone())
            .or_insert(LifecycleState::Uninstalled);
        if r.outcome == Outcome::Fail {
            continue;
        }
        *state = state
            .apply(r.action)
            .ok_or_else(|| JournalError::IllegalReplay {
                line: i + 1,
                component: r.component.clone(),
                action: r.action,
                state: *state,
            })?;
    }
    Ok(states)
}
