//! The generic deployment state machine shared by every component.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Lifecycle state of a component. Every component starts `Uninstalled`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleState {
    #[default]
    Uninstalled,
    Installed,
    Started,
}

/// One of the four generic deployment methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleAction {
    Install,
    Start,
    Stop,
    Uninstall,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 3] = [
        LifecycleState::Uninstalled,
        LifecycleState::Installed,
        LifecycleState::Started,
    ];

    /// Raw transition function; `None` when the action has no edge from this state.
    pub fn apply(self, action: LifecycleAction) -> Option<LifecycleState> {
        use LifecycleAction::*;
        use LifecycleState::*;
        match (self, action) {
            (Uninstalled, Install) => Some(Installed),
            (Installed, Start) => Some(Started),
            (Started, Stop) => Some(Installed),
            (Installed, Uninstall) => Some(Uninstalled),
            _ => None,
        }
    }

    fn rank(self) -> u8 {
        match self {
            LifecycleState::Uninstalled => 0,
            LifecycleState::Installed => 1,
            LifecycleState::Started => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Uninstalled => "uninstalled",
            LifecycleState::Installed => "installed",
            LifecycleState::Started => "started",
        }
    }
}

impl LifecycleAction {
    pub const ALL: [LifecycleAction; 4] = [
        LifecycleAction::Install,
        LifecycleAction::Start,
        LifecycleAction::Stop,
        LifecycleAction::Uninstall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleAction::Install => "install",
            LifecycleAction::Start => "start",
            LifecycleAction::Stop => "stop",
            LifecycleAction::Uninstall => "uninstall",
        }
    }
}

/// Shortest legal action sequence leading from `from` to `to`.
///
/// The state graph is a line (`Uninstalled - Installed - Started`), so the
/// path is unique and never longer than two actions.
pub fn path(from: LifecycleState, to: LifecycleState) -> Vec<LifecycleAction> {
    let mut actions = Vec::with_capacity(2);
    let mut at = from;
    while at != to {
        let action = if at.rank() < to.rank() {
            match at {
                LifecycleState::Uninstalled => LifecycleAction::Install,
                _ => LifecycleAction::Start,
            }
        } else {
            match at {
                LifecycleState::Started => LifecycleAction::Stop,
                _ => LifecycleAction::Uninstall,
            }
        };
        at = at.apply(action).expect("path follows legal edges");
        actions.push(action);
    }
    actions
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for LifecycleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown lifecycle name `{0}`")]
pub struct UnknownLifecycleName(pub String);

impl FromStr for LifecycleAction {
    type Err = UnknownLifecycleName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LifecycleAction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownLifecycleName(s.to_string()))
    }
}

impl FromStr for LifecycleState {
    type Err = UnknownLifecycleName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LifecycleState::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownLifecycleName(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::LifecycleAction::*;
    use super::LifecycleState::*;
    use super::*;

    #[test]
    fn raw_edges() {
        assert_eq!(Uninstalled.apply(Install), Some(Installed));
        assert_eq!(Uninstalled.apply(Start), None);
        assert_eq!(Started.apply(Uninstall), None);
        assert_eq!(Installed.apply(Stop), None);
    }

    #[test]
    fn chains() {
        assert_eq!(path(Uninstalled, Started), vec![Install, Start]);
        assert_eq!(path(Started, Uninstalled), vec![Stop, Uninstall]);
        assert_eq!(path(Started, Started), vec![]);
        assert_eq!(path(Installed, Installed), vec![]);
    }

    #[test]
    fn every_path_is_legal_and_short() {
        for from in LifecycleState::ALL {
            for to in LifecycleState::ALL {
                let p = path(from, to);
                assert!(p.len() <= 2);
                let end = p.iter().try_fold(from, |s, a| s.apply(*a));
                assert_eq!(end, Some(to));
            }
        }
    }

    #[test]
    fn names_parse_back() {
        for a in LifecycleAction::ALL {
            assert_eq!(a.as_str().parse::<LifecycleAction>().unwrap(), a);
        }
        assert!("reboot".parse::<LifecycleAction>().is_err());
    }
}
