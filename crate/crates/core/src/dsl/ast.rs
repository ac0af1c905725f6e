use std::fmt;
use std::sync::Arc;

/// Source position of a syntax node, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub source: Arc<str>,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(source: &Arc<str>, line: u32, col: u32) -> Self {
        Span {
            source: source.clone(),
            line,
            col,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.source, self.line, self.col)
    }
}

/// One parsed source file: the top-level entries. A full configuration has
/// a single entry such as `MyDeployment = OpenCCM.Deployment { ... }`; a
/// fragment holds bare `nodes = { ... }` / `services = { ... }` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub source: Arc<str>,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub span: Span,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Assign(Assign),
    Loop(Loop),
}

impl Entry {
    pub fn span(&self) -> &Span {
        match self {
            Entry::Assign(a) => &a.span,
            Entry::Loop(l) => &l.span,
        }
    }
}

/// `name = value`; the name may contain `%{var}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assign {
    pub name: String,
    pub span: Span,
    pub value: Value,
}

/// `apply FOR(var, lo, hi) { ... }`, bounds inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub var: String,
    pub lo: i64,
    pub hi: i64,
    pub span: Span,
    pub body: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    /// `Kind`, `Kind(args)`, `Kind { ... }` or `Kind(args) { ... }`.
    Ctor(Ctor),
    /// Anonymous block `{ ... }`.
    Block(Block),
    /// Path rooted at the configuration's top block, e.g. `nodes/node-0`.
    Ref(Reference),
    Lit(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ctor {
    pub kind: String,
    pub span: Span,
    pub args: Option<Vec<Literal>>,
    pub block: Option<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub path: String,
    pub span: Span,
}

/// Unquoted literal text, classified once interpolation has run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Literal {
    pub text: String,
    pub span: Span,
}

struct Indent(usize);

impl fmt::Display for Indent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in 0..self.0 {
            f.write_str("  ")?;
        }
        Ok(())
    }
}

fn write_entries(f: &mut fmt::Formatter<'_>, entries: &[Entry], depth: usize) -> fmt::Result {
    for e in entries {
        write!(f, "{}", Indent(depth))?;
        match e {
            Entry::Assign(a) => {
                write!(f, "{} = ", a.name)?;
                write_value(f, &a.value, depth)?;
            }
            Entry::Loop(l) => {
                write!(f, "apply FOR({},{},{}) ", l.var, l.lo, l.hi)?;
                write_block(f, &l.body, depth)?;
            }
        }
        writeln!(f)?;
    }
    Ok(())
}

fn write_block(f: &mut fmt::Formatter<'_>, b: &Block, depth: usize) -> fmt::Result {
    writeln!(f, "{{")?;
    write_entries(f, &b.entries, depth + 1)?;
    write!(f, "{}}}", Indent(depth))
}

fn write_value(f: &mut fmt::Formatter<'_>, v: &Value, depth: usize) -> fmt::Result {
    match v {
        Value::Ctor(c) => {
            f.write_str(&c.kind)?;
            if let Some(args) = &c.args {
                let texts: Vec<&str> = args.iter().map(|a| a.text.as_str()).collect();
                write!(f, "({})", texts.join(","))?;
            }
            if let Some(b) = &c.block {
                f.write_str(" ")?;
                write_block(f, b, depth)?;
            }
            Ok(())
        }
        Value::Block(b) => write_block(f, b, depth),
        Value::Ref(r) => f.write_str(&r.path),
        Value::Lit(l) => f.write_str(&l.text),
    }
}

/// Canonical source text: two-space indentation, one entry per line.
impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_entries(f, &self.entries, 0)
    }
}

pub fn unparse(doc: &Document) -> String {
    doc.to_string()
}
