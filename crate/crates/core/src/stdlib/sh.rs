//! POSIX `sh` dialect: renders [`Step`] lists to a script and parses the
//! rendered form back. One step per logical line; the first line is `set -e`
//! so a session stops at the first failing step.

use std::borrow::Cow;

use super::step::Step;

const PREAMBLE: &str = "set -e";
const REMOVE_PATH_HEAD: &str = "PATH=$(printf '%s\\n' \"$PATH\" | tr ':' '\\n' | grep -vxF -- ";
const REMOVE_PATH_TAIL: &str = " | paste -sd: -); export PATH";
const APPEND_PATH_HEAD: &str = "PATH=$PATH:";
const APPEND_PATH_TAIL: &str = "; export PATH";
const FETCH_GUARD: &str = "[ -e ";
const FETCH_CURL: &str = " ] || curl -fsSL -o ";
const START_HEAD: &str = "nohup sh -c ";
const START_MID: &str = " >/dev/null 2>&1 & echo $! > \"$HOME/.gridforge-";
const PID_TAIL: &str = ".pid\"";
const STOP_HEAD: &str = "kill \"$(cat \"$HOME/.gridforge-";
const STOP_MID: &str = ".pid\")\" && rm -f \"$HOME/.gridforge-";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShError {
    #[error("invalid variable name `{0}`")]
    VariableName(String),
    #[error("invalid process name `{0}`")]
    ProcessName(String),
    #[error("unterminated quote in script line {0}")]
    Unterminated(usize),
}

fn is_safe(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_@%+=:,./-".contains(c)
}

pub fn is_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn is_process_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "_.-".contains(c))
}

/// Quote `s` as a single shell word.
pub fn quote(s: &str) -> Cow<'_, str> {
    if !s.is_empty() && s.chars().all(is_safe) {
        Cow::Borrowed(s)
    } else {
        Cow::Owned(format!("'{}'", s.replace('\'', "'\\''")))
    }
}

fn ends_word(c: char) -> bool {
    c.is_whitespace() || ";|&()<>".contains(c)
}

/// Read one shell word at the start of `s`; returns the unquoted word and
/// the remaining input.
fn read_word(s: &str) -> Option<(String, &str)> {
    if s.is_empty() || s.starts_with(ends_word) {
        return None;
    }
    let mut word = String::new();
    let mut chars = s.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\'' => loop {
                match chars.next() {
                    Some((_, '\'')) => break,
                    Some((_, c)) => word.push(c),
                    None => return None,
                }
            },
            '\\' => word.push(chars.next()?.1),
            c if ends_word(c) => return Some((word, &s[i..])),
            c => word.push(c),
        }
    }
    Some((word, ""))
}

/// Split a simple command line into words, honouring quotes and backslashes.
/// Returns `None` on an unterminated quote.
pub fn split_words(line: &str) -> Option<Vec<String>> {
    let mut words = Vec::new();
    let mut rest = line.trim_start();
    while !rest.is_empty() {
        if let Some(c) = rest.chars().next().filter(|c| ends_word(*c) && !c.is_whitespace()) {
            words.push(c.to_string());
            rest = rest[c.len_utf8()..].trim_start();
            continue;
        }
        let (w, tail) = read_word(rest)?;
        words.push(w);
        rest = tail.trim_start();
    }
    Some(words)
}

fn exact_word(s: &str) -> Option<String> {
    match read_word(s)? {
        (w, "") => Some(w),
        _ => None,
    }
}

/// Word followed by fixed text.
fn word_then<'a>(s: &'a str, next: &str) -> Option<(String, &'a str)> {
    let (w, rest) = read_word(s)?;
    Some((w, rest.strip_prefix(next)?))
}

fn process_then<'a>(s: &'a str, next: &str) -> Option<(String, &'a str)> {
    // `next` always starts with text that is followed by a quote, which a
    // process name cannot contain.
    let end = s.find(next)?;
    let name = &s[..end];
    is_process_name(name).then(|| (name.to_string(), &s[end + next.len()..]))
}

fn structured(line: &str) -> Option<Step> {
    if let Some(rest) = line.strip_prefix(REMOVE_PATH_HEAD) {
        let (value, tail) = read_word(rest)?;
        return (tail == REMOVE_PATH_TAIL).then_some(Step::RemovePath { value });
    }
    if let Some(rest) = line.strip_prefix(APPEND_PATH_HEAD) {
        let (value, tail) = read_word(rest)?;
        return (tail == APPEND_PATH_TAIL).then_some(Step::AppendPath { value });
    }
    if let Some(rest) = line.strip_prefix("export ") {
        let (name, value) = rest.split_once('=')?;
        if !is_var_name(name) {
            return None;
        }
        return Some(Step::SetVar {
            name: name.to_string(),
            value: exact_word(value)?,
        });
    }
    if let Some(name) = line.strip_prefix("unset ") {
        return is_var_name(name).then(|| Step::UnsetVar {
            name: name.to_string(),
        });
    }
    if let Some(rest) = line.strip_prefix(FETCH_GUARD) {
        let (guard, rest) = word_then(rest, FETCH_CURL)?;
        let (dest, rest) = word_then(rest, " ")?;
        let url = exact_word(rest)?;
        return (guard == dest).then_some(Step::Fetch { url, dest });
    }
    if let Some(rest) = line.strip_prefix(START_HEAD) {
        let (command, rest) = word_then(rest, START_MID)?;
        let (name, rest) = process_then(rest, PID_TAIL)?;
        return rest.is_empty().then_some(Step::StartProcess { name, command });
    }
    if let Some(rest) = line.strip_prefix(STOP_HEAD) {
        let (name, rest) = process_then(rest, STOP_MID)?;
        let (again, rest) = process_then(rest, PID_TAIL)?;
        return (rest.is_empty() && again == name).then_some(Step::StopProcess { name });
    }
    if let Some(rest) = line.strip_prefix("rm -rf -- ") {
        return Some(Step::Remove {
            path: exact_word(rest)?,
        });
    }
    if let Some(rest) = line.strip_prefix("eval ") {
        return Some(Step::Exec {
            command: exact_word(rest)?,
        });
    }
    None
}

/// Commands that cannot be written verbatim without being misread.
fn needs_eval(command: &str) -> bool {
    command.is_empty()
        || command != command.trim()
        || command.contains(['\'', '\\', '\n', '\r'])
        || command == PREAMBLE
        || structured(command).is_some()
}

pub fn render_step(step: &Step) -> Result<String, ShError> {
    let line = match step {
        Step::SetVar { name, value } => {
            check_var(name)?;
            format!("export {name}={}", quote(value))
        }
        Step::UnsetVar { name } => {
            check_var(name)?;
            format!("unset {name}")
        }
        Step::AppendPath { value } => {
            format!("{APPEND_PATH_HEAD}{}{APPEND_PATH_TAIL}", quote(value))
        }
        Step::RemovePath { value } => {
            format!("{REMOVE_PATH_HEAD}{}{REMOVE_PATH_TAIL}", quote(value))
        }
        Step::Fetch { url, dest } => {
            let d = quote(dest);
            format!("{FETCH_GUARD}{d}{FETCH_CURL}{d} {}", quote(url))
        }
        Step::Exec { command } if needs_eval(command) => format!("eval {}", quote(command)),
        Step::Exec { command } => command.clone(),
        Step::StartProcess { name, command } => {
            check_process(name)?;
            format!("{START_HEAD}{}{START_MID}{name}{PID_TAIL}", quote(command))
        }
        Step::StopProcess { name } => {
            check_process(name)?;
            format!("{STOP_HEAD}{name}{STOP_MID}{name}{PID_TAIL}")
        }
        Step::Remove { path } => format!("rm -rf -- {}", quote(path)),
    };
    Ok(line)
}

fn check_var(name: &str) -> Result<(), ShError> {
    if is_var_name(name) {
        Ok(())
    } else {
        Err(ShError::VariableName(name.to_string()))
    }
}

fn check_process(name: &str) -> Result<(), ShError> {
    if is_process_name(name) {
        Ok(())
    } else {
        Err(ShError::ProcessName(name.to_string()))
    }
}

/// Render a session script.
pub fn render(steps: &[Step]) -> Result<String, ShError> {
    let mut script = String::from(PREAMBLE);
    script.push('\n');
    for step in steps {
        script.push_str(&render_step(step)?);
        script.push('\n');
    }
    Ok(script)
}

/// Split into logical lines: newlines inside single quotes, or escaped by a
/// backslash, do not end a line.
fn logical_lines(script: &str) -> Result<Vec<&str>, ShError> {
    let mut lines = Vec::new();
    let mut start = 0;
    let mut quoted = false;
    let mut escaped = false;
    for (i, c) in script.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\'' => quoted = !quoted,
            '\\' if !quoted => escaped = true,
            '\n' if !quoted => {
                lines.push(&script[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if quoted {
        return Err(ShError::Unterminated(lines.len() + 1));
    }
    if start < script.len() {
        lines.push(&script[start..]);
    }
    Ok(lines)
}

/// Parse a rendered script back into steps.
pub fn parse(script: &str) -> Result<Vec<Step>, ShError> {
    let mut steps = Vec::new();
    for (i, line) in logical_lines(script)?.into_iter().enumerate() {
        if line.is_empty() || (i == 0 && line == PREAMBLE) {
            continue;
        }
        steps.push(structured(line).unwrap_or_else(|| Step::Exec {
            command: line.to_string(),
        }));
    }
    Ok(steps)
}
