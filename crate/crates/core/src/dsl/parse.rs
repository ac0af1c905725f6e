use std::sync::Arc;

use super::ast::{Assign, Block, Ctor, Document, Entry, Literal, Loop, Reference, Span, Value};
use super::DslError;

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    source: Arc<str>,
}

/// Characters that end a bare word in value position.
fn is_delim(c: char) -> bool {
    c.is_whitespace() || "{}(),=#".contains(c)
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_.-".contains(c)
}

/// Identifier grammar, with `%{var}` allowed anywhere after the first character.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    if !chars.next().is_some_and(is_ident_start) {
        return false;
    }
    let mut rest = &s[1..];
    while !rest.is_empty() {
        if let Some(tail) = rest.strip_prefix("%{") {
            let Some(end) = tail.find('}') else {
                return false;
            };
            if !is_plain_identifier(&tail[..end]) {
                return false;
            }
            rest = &tail[end + 1..];
        } else {
            let c = rest.chars().next().expect("non-empty");
            if !is_ident_char(c) {
                return false;
            }
            rest = &rest[c.len_utf8()..];
        }
    }
    true
}

fn is_plain_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char)
}

fn is_reference(word: &str) -> bool {
    word.contains('/') && word.split('/').all(is_identifier)
}

fn describe(c: Option<char>) -> String {
    match c {
        None => "end of input".into(),
        Some('\n') => "end of line".into(),
        Some(c) => format!("`{c}`"),
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(&self.source, self.line, self.col)
    }

    fn error(&self, expected: &[&'static str]) -> DslError {
        DslError::Syntax {
            span: self.span(),
            expected: expected.to_vec(),
            found: describe(self.peek()),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c == '#' {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char, what: &'static str) -> Result<(), DslError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[what]))
        }
    }

    /// Consume `%{var}` at the cursor into `out`.
    fn interpolation(&mut self, out: &mut String) -> Result<(), DslError> {
        let start = self.span();
        self.bump();
        self.bump();
        out.push_str("%{");
        loop {
            match self.peek() {
                Some('}') => {
                    self.bump();
                    out.push('}');
                    return Ok(());
                }
                Some(c) if is_ident_char(c) => {
                    self.bump();
                    out.push(c);
                }
                other => {
                    return Err(DslError::Syntax {
                        span: start,
                        expected: vec!["`}` closing `%{`"],
                        found: describe(other),
                    })
                }
            }
        }
    }

    fn at_interpolation(&self) -> bool {
        self.src[self.pos..].starts_with("%{")
    }

    /// A bare word in value or name position.
    fn word(&mut self) -> Result<String, DslError> {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if self.at_interpolation() {
                self.interpolation(&mut out)?;
            } else if is_delim(c) {
                break;
            } else {
                self.bump();
                out.push(c);
            }
        }
        Ok(out)
    }

    fn name(&mut self) -> Result<(String, Span), DslError> {
        self.skip_ws();
        let span = self.span();
        if !self.peek().is_some_and(is_ident_start) {
            return Err(self.error(&["name", "`}`"]));
        }
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if self.at_interpolation() {
                self.interpolation(&mut out)?;
            } else if is_ident_char(c) {
                self.bump();
                out.push(c);
            } else {
                break;
            }
        }
        Ok((out, span))
    }

    fn integer(&mut self) -> Result<i64, DslError> {
        self.skip_ws();
        let span = self.span();
        let found = self.word()?;
        found.parse().map_err(|_| DslError::Syntax {
            span,
            expected: vec!["integer"],
            found: format!("`{found}`"),
        })
    }

    fn entries(&mut self, closing: bool) -> Result<Vec<Entry>, DslError> {
        let mut entries = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None if !closing => return Ok(entries),
                None => return Err(self.error(&["name", "`}`"])),
                Some('}') if closing => {
                    self.bump();
                    return Ok(entries);
                }
                _ => entries.push(self.entry()?),
            }
        }
    }

    fn entry(&mut self) -> Result<Entry, DslError> {
        let (name, span) = self.name()?;
        self.skip_ws();
        if name == "apply" && self.peek() != Some('=') {
            return self.for_loop(span).map(Entry::Loop);
        }
        self.expect('=', "`=`")?;
        let value = self.value()?;
        Ok(Entry::Assign(Assign { name, span, value }))
    }

    fn for_loop(&mut self, span: Span) -> Result<Loop, DslError> {
        let (kw, kw_span) = self.name()?;
        if kw != "FOR" {
            return Err(DslError::Syntax {
                span: kw_span,
                expected: vec!["`FOR`"],
                found: format!("`{kw}`"),
            });
        }
        self.expect('(', "`(`")?;
        let (var, var_span) = self.name()?;
        if !is_plain_identifier(&var) {
            return Err(DslError::Syntax {
                span: var_span,
                expected: vec!["loop variable"],
                found: format!("`{var}`"),
            });
        }
        self.expect(',', "`,`")?;
        let lo = self.integer()?;
        self.expect(',', "`,`")?;
        let hi = self.integer()?;
        self.expect(')', "`)`")?;
        let body = self.block()?;
        Ok(Loop {
            var,
            lo,
            hi,
            span,
            body,
        })
    }

    fn block(&mut self) -> Result<Block, DslError> {
        self.skip_ws();
        let span = self.span();
        self.expect('{', "`{`")?;
        let entries = self.entries(true)?;
        Ok(Block { span, entries })
    }

    fn value(&mut self) -> Result<Value, DslError> {
        self.skip_ws();
        if self.peek() == Some('{') {
            return self.block().map(Value::Block);
        }
        let span = self.span();
        let word = self.word()?;
        if word.is_empty() {
            return Err(self.error(&["value"]));
        }
        if is_identifier(&word) {
            self.skip_ws();
            let args = if self.peek() == Some('(') {
                Some(self.args()?)
            } else {
                None
            };
            self.skip_ws();
            let block = if self.peek() == Some('{') {
                Some(self.block()?)
            } else {
                None
            };
            return Ok(Value::Ctor(Ctor {
                kind: word,
                span,
                args,
                block,
            }));
        }
        if is_reference(&word) {
            return Ok(Value::Ref(Reference { path: word, span }));
        }
        Ok(Value::Lit(Literal { text: word, span }))
    }

    fn args(&mut self) -> Result<Vec<Literal>, DslError> {
        self.bump();
        let mut args = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.bump();
            return Ok(args);
        }
        loop {
            self.skip_ws();
            let span = self.span();
            let mut text = String::new();
            while let Some(c) = self.peek() {
                if self.at_interpolation() {
                    self.interpolation(&mut text)?;
                } else if matches!(c, ',' | ')' | '(' | '{' | '}' | '\n' | '#') {
                    break;
                } else {
                    self.bump();
                    text.push(c);
                }
            }
            let text = text.trim_end().to_string();
            if text.is_empty() {
                return Err(self.error(&["argument"]));
            }
            args.push(Literal { text, span });
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(')') => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.error(&["`,`", "`)`"])),
            }
        }
    }
}

/// Parse one configuration source. `source` names it in diagnostics.
pub fn parse(text: &str, source: &str) -> Result<Document, DslError> {
    let source: Arc<str> = Arc::from(source);
    let mut p = Parser {
        src: text,
        pos: 0,
        line: 1,
        col: 1,
        source: source.clone(),
    };
    let entries = p.entries(false)?;
    Ok(Document { source, entries })
}
