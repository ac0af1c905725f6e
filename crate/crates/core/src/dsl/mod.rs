//! Configuration language: parsing, fragment merging and expansion.
//!
//! ```text
//! MyDeployment = OpenCCM.Deployment {
//!   nodes = {
//!     apply FOR(i,0,2) {
//!       node-%{i} = Grid5000_NODE { port = Port(22) }
//!     }
//!   }
//! }
//! ```
//!
//! Identifiers are `[A-Za-z_][A-Za-z0-9_.-]*`; `#` starts a line comment.

mod ast;
mod expand;
mod merge;
mod parse;

pub use ast::{
    unparse, Assign, Block, Ctor, Document, Entry, Literal, Loop, Reference, Span, Value,
};
pub use expand::{classify, expand, Arg, EBlock, ECtor, EEntry, EValue, ExpandedConfig};
pub use merge::merge;
pub use parse::{is_identifier, parse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("{span}: syntax error: expected {}, found {found}", .expected.join(" or "))]
    Syntax {
        span: Span,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("{span}: loop variable `{var}` is not in scope")]
    UnboundLoopVariable { span: Span, var: String },
    #[error("{span}: `{name}` is already declared at {first}")]
    DuplicateName { span: Span, name: String, first: Span },
    #[error("{span}: reference `{path}` does not resolve")]
    DanglingReference { span: Span, path: String },
    #[error("no full configuration (`Name = Kind {{ ... }}`) among {}", .sources.join(", "))]
    NoRoot { sources: Vec<String> },
    #[error("both {first} and {second} are full configurations")]
    MultipleRoots { first: String, second: String },
}

impl DslError {
    pub fn span(&self) -> Option<&Span> {
        match self {
            DslError::Syntax { span, .. }
            | DslError::UnboundLoopVariable { span, .. }
            | DslError::DuplicateName { span, .. }
            | DslError::DanglingReference { span, .. } => Some(span),
            DslError::NoRoot { .. } | DslError::MultipleRoots { .. } => None,
        }
    }
}

/// Parse, merge and expand several sources given as `(name, text)`.
pub fn load<'a, I>(sources: I) -> Result<ExpandedConfig, DslError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let docs = sources
        .into_iter()
        .map(|(name, text)| parse(text, name))
        .collect::<Result<Vec<_>, _>>()?;
    expand(&merge(docs)?)
}
