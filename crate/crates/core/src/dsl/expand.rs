use indexmap::map::Entry as MapEntry;
use indexmap::IndexMap;

use super::ast::{Block, Document, Entry, Literal, Span, Value};
use super::DslError;
use crate::personality::{ParamValue, ResourceRequest};

/// Literal after interpolation, classified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arg {
    pub value: ParamValue,
    pub span: Span,
}

/// Integers, `~` paths, `key=value|...` resource requests, otherwise strings.
pub fn classify(text: &str) -> ParamValue {
    if let Ok(i) = text.parse::<i64>() {
        ParamValue::Int(i)
    } else if text.starts_with('~') {
        ParamValue::Path(text.to_string())
    } else if let Some(r) = ResourceRequest::parse(text) {
        ParamValue::Resources(r)
    } else {
        ParamValue::Str(text.to_string())
    }
}

/// Entries keyed by name, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EBlock {
    pub entries: IndexMap<String, EEntry>,
}

impl EBlock {
    pub fn get(&self, name: &str) -> Option<&EEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EEntry> {
        self.entries.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EEntry {
    pub name: String,
    pub span: Span,
    pub value: EValue,
}

impl EEntry {
    /// Nested entries of a block or constructor block.
    pub fn block(&self) -> Option<&EBlock> {
        match &self.value {
            EValue::Block(b) => Some(b),
            EValue::Ctor(c) => c.block.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EValue {
    Ctor(ECtor),
    Block(EBlock),
    Ref { path: String, span: Span },
    Lit(Arg),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ECtor {
    pub kind: String,
    pub span: Span,
    pub args: Vec<Arg>,
    pub block: Option<EBlock>,
}

/// Configuration with loops unrolled, interpolation substituted and every
/// reference checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedConfig {
    pub name: String,
    pub kind: String,
    pub span: Span,
    pub args: Vec<Arg>,
    pub body: EBlock,
}

impl ExpandedConfig {
    /// Top-level block such as `nodes` or `services`.
    pub fn section(&self, name: &str) -> Option<&EBlock> {
        self.body.get(name)?.block()
    }

    /// Entry named by a root-relative path like `nodes/node-7`.
    pub fn resolve(&self, path: &str) -> Option<&EEntry> {
        let mut segments = path.split('/');
        let mut entry = self.body.get(segments.next()?)?;
        for s in segments {
            entry = entry.block()?.get(s)?;
        }
        Some(entry)
    }
}

type Scope<'a> = Vec<(&'a str, i64)>;

fn interpolate(text: &str, scope: &Scope<'_>, span: &Span) -> Result<String, DslError> {
    if !text.contains("%{") {
        return Ok(text.to_string());
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find("%{") {
        out.push_str(&rest[..at]);
        let tail = &rest[at + 2..];
        let end = tail.find('}').ok_or_else(|| DslError::Syntax {
            span: span.clone(),
            expected: vec!["`}` closing `%{`"],
            found: "end of text".into(),
        })?;
        let var = &tail[..end];
        let value = scope
            .iter()
            .rev()
            .find(|(v, _)| *v == var)
            .ok_or_else(|| DslError::UnboundLoopVariable {
                span: span.clone(),
                var: var.to_string(),
            })?
            .1;
        out.push_str(&value.to_string());
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn arg(lit: &Literal, scope: &Scope<'_>) -> Result<Arg, DslError> {
    Ok(Arg {
        value: classify(&interpolate(&lit.text, scope, &lit.span)?),
        span: lit.span.clone(),
    })
}

fn expand_entries<'a>(
    entries: &'a [Entry],
    scope: &mut Scope<'a>,
    out: &mut EBlock,
) -> Result<(), DslError> {
    for e in entries {
        match e {
            Entry::Loop(l) => {
                for i in l.lo..=l.hi {
                    scope.push((l.var.as_str(), i));
                    let r = expand_entries(&l.body.entries, scope, out);
                    scope.pop();
                    r?;
                }
            }
            Entry::Assign(a) => {
                let name = interpolate(&a.name, scope, &a.span)?;
                let value = expand_value(&a.value, scope)?;
                match out.entries.entry(name) {
                    MapEntry::Occupied(o) => {
                        return Err(DslError::DuplicateName {
                            span: a.span.clone(),
                            name: o.key().clone(),
                            first: o.get().span.clone(),
                        })
                    }
                    MapEntry::Vacant(v) => {
                        let name = v.key().clone();
                        v.insert(EEntry {
                            name,
                            span: a.span.clone(),
                            value,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

fn expand_block<'a>(b: &'a Block, scope: &mut Scope<'a>) -> Result<EBlock, DslError> {
    let mut out = EBlock::default();
    expand_entries(&b.entries, scope, &mut out)?;
    Ok(out)
}

fn expand_value<'a>(v: &'a Value, scope: &mut Scope<'a>) -> Result<EValue, DslError> {
    Ok(match v {
        Value::Ctor(c) => EValue::Ctor(ECtor {
            kind: interpolate(&c.kind, scope, &c.span)?,
            span: c.span.clone(),
            args: c
                .args
                .iter()
                .flatten()
                .map(|l| arg(l, scope))
                .collect::<Result<_, _>>()?,
            block: c.block.as_ref().map(|b| expand_block(b, scope)).transpose()?,
        }),
        Value::Block(b) => EValue::Block(expand_block(b, scope)?),
        Value::Ref(r) => EValue::Ref {
            path: interpolate(&r.path, scope, &r.span)?,
            span: r.span.clone(),
        },
        Value::Lit(l) => EValue::Lit(arg(l, scope)?),
    })
}

fn check_refs(config: &ExpandedConfig, block: &EBlock) -> Result<(), DslError> {
    for e in block.iter() {
        match &e.value {
            EValue::Ref { path, span } => {
                if config.resolve(path).is_none() {
                    return Err(DslError::DanglingReference {
                        span: span.clone(),
                        path: path.clone(),
                    });
                }
            }
            EValue::Ctor(ECtor { block: Some(b), .. }) | EValue::Block(b) => {
                check_refs(config, b)?
            }
            _ => {}
        }
    }
    Ok(())
}

/// Unroll loops, substitute interpolation and resolve references of a
/// document holding one root entry (`Name = Kind { ... }`).
pub fn expand(doc: &Document) -> Result<ExpandedConfig, DslError> {
    let root = match doc.entries.as_slice() {
        [Entry::Assign(a)] => match &a.value {
            Value::Ctor(c) if c.block.is_some() => Some((a, c)),
            _ => None,
        },
        _ => None,
    };
    let Some((assign, ctor)) = root else {
        return Err(DslError::NoRoot {
            sources: vec![doc.source.to_string()],
        });
    };
    let mut scope = Vec::new();
    let config = ExpandedConfig {
        name: interpolate(&assign.name, &scope, &assign.span)?,
        kind: ctor.kind.clone(),
        span: assign.span.clone(),
        args: ctor
            .args
            .iter()
            .flatten()
            .map(|l| arg(l, &scope))
            .collect::<Result<_, _>>()?,
        body: expand_block(ctor.block.as_ref().expect("checked above"), &mut scope)?,
    };
    check_refs(&config, &config.body)?;
    Ok(config)
}
