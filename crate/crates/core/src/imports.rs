//! Static import extraction for Python sources and resolution of imported
//! top-level modules to registry packages.
//!
//! The scanner is a tokenizer, not a parser: it understands string literals
//! (all prefixes, triple quotes, escapes), comments, bracket nesting and
//! backslash continuations, groups tokens into logical lines and then
//! matches the `import` / `from ... import` grammar on each statement.
//! Statements that follow a compound header on the same line
//! (`try: import x`) are also seen.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data;
use crate::graph::normalize_name;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ImportError {
    #[error("source is not valid UTF-8 (first bad byte at offset {offset})")]
    DecodeError { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportStyle {
    Plain,
    From,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportRecord {
    pub file: String,
    pub line: u32,
    /// Dotted module path as written, including leading dots for relative imports.
    pub module: String,
    /// First dotted segment after any leading dots; empty for `from . import x`.
    pub top_level: String,
    pub style: ImportStyle,
    pub alias: Option<String>,
}

impl ImportRecord {
    fn new(line: u32, module: String, style: ImportStyle, alias: Option<String>) -> Self {
        let top_level = module
            .trim_start_matches('.')
            .split('.')
            .next()
            .unwrap_or("")
            .to_string();
        ImportRecord {
            file: String::new(),
            line,
            module,
            top_level,
            style,
            alias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Name(String),
    Dot,
    Comma,
    Open,
    Close,
    Semi,
    Colon,
    Star,
    Str,
    Other,
}

#[derive(Debug)]
struct Token {
    tok: Tok,
    line: u32,
}

/// Tokenizer output: logical lines of tokens plus the text of every comment
/// and triple-quoted string (used for topic extraction).
#[derive(Debug, Default)]
struct Lexed {
    lines: Vec<Vec<Token>>,
    prose: Vec<String>,
}

fn is_string_prefix(name: &str) -> bool {
    name.len() <= 2
        && name
            .chars()
            .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
}

fn lex(source: &str) -> Lexed {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Lexed::default();
    let mut current: Vec<Token> = Vec::new();
    let mut depth: usize = 0;
    let mut line: u32 = 1;
    let mut i = 0;

    // Returns the index after the closing quote(s) and the number of newlines consumed.
    let read_string = |start: usize| -> (usize, u32, bool) {
        let quote = chars[start];
        let triple = start + 2 < chars.len() && chars[start + 1] == quote && chars[start + 2] == quote;
        let mut j = if triple { start + 3 } else { start + 1 };
        let mut newlines = 0;
        while j < chars.len() {
            let c = chars[j];
            if c == '\\' {
                if j + 1 < chars.len() && chars[j + 1] == '\n' {
                    newlines += 1;
                }
                j += 2;
                continue;
            }
            if c == '\n' {
                if !triple {
                    // unterminated single-line literal ends at the newline
                    return (j, newlines, triple);
                }
                newlines += 1;
            }
            if c == quote {
                if !triple {
                    return (j + 1, newlines, triple);
                }
                if j + 2 < chars.len() && chars[j + 1] == quote && chars[j + 2] == quote {
                    return (j + 3, newlines, triple);
                }
            }
            j += 1;
        }
        (chars.len(), newlines, triple)
    };

    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                if depth == 0 && !current.is_empty() {
                    out.lines.push(std::mem::take(&mut current));
                }
                i += 1;
            }
            '#' => {
                let start = i + 1;
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                out.prose.push(chars[start..i].iter().collect());
            }
            '\\' if i + 1 < chars.len() && chars[i + 1] == '\n' => {
                line += 1;
                i += 2;
            }
            '\\' if i + 2 < chars.len() && chars[i + 1] == '\r' && chars[i + 2] == '\n' => {
                line += 1;
                i += 3;
            }
            '\'' | '"' => {
                let (end, newlines, triple) = read_string(i);
                if triple {
                    let body_end = end.saturating_sub(3).max(i + 3).min(chars.len());
                    out.prose.push(chars[(i + 3).min(body_end)..body_end].iter().collect());
                }
                current.push(Token { tok: Tok::Str, line });
                line += newlines;
                i = end;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if i < chars.len() && matches!(chars[i], '\'' | '"') && is_string_prefix(&word) {
                    let (end, newlines, triple) = read_string(i);
                    if triple {
                        let body_end = end.saturating_sub(3).max(i + 3).min(chars.len());
                        out.prose.push(chars[(i + 3).min(body_end)..body_end].iter().collect());
                    }
                    current.push(Token { tok: Tok::Str, line });
                    line += newlines;
                    i = end;
                } else {
                    current.push(Token {
                        tok: Tok::Name(word),
                        line,
                    });
                }
            }
            c if c.is_ascii_digit() => {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                    i += 1;
                }
                current.push(Token { tok: Tok::Other, line });
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                let tok = match c {
                    '.' => Tok::Dot,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    '*' => Tok::Star,
                    '(' | '[' | '{' => {
                        depth += 1;
                        Tok::Open
                    }
                    ')' | ']' | '}' => {
                        depth = depth.saturating_sub(1);
                        Tok::Close
                    }
                    _ => Tok::Other,
                };
                current.push(Token { tok, line });
                i += 1;
            }
        }
    }
    if !current.is_empty() {
        out.lines.push(current);
    }
    out
}

const COMPOUND_HEADERS: &[&str] = &[
    "if", "elif", "else", "try", "except", "finally", "with", "for", "while", "def", "class",
    "async",
];

fn name_of(t: Option<&Token>) -> Option<&str> {
    match t.map(|t| &t.tok) {
        Some(Tok::Name(n)) => Some(n),
        _ => None,
    }
}

fn parse_statement(toks: &[Token], out: &mut Vec<ImportRecord>) {
    match name_of(toks.first()) {
        Some("import") => parse_import(toks, out),
        Some("from") => parse_from(toks, out),
        Some(head) if COMPOUND_HEADERS.contains(&head) => {
            let mut depth = 0usize;
            for (idx, t) in toks.iter().enumerate() {
                match t.tok {
                    Tok::Open => depth += 1,
                    Tok::Close => depth = depth.saturating_sub(1),
                    Tok::Colon if depth == 0 => {
                        let rest = &toks[idx + 1..];
                        if !rest.is_empty() {
                            parse_statement(rest, out);
                        }
                        return;
                    }
                    _ => {}
                }
            }
        }
        _ => {}
    }
}

/// Reads `NAME (. NAME)*` starting at `pos`.
fn dotted_name(toks: &[Token], mut pos: usize) -> Option<(String, usize)> {
    let mut name = name_of(toks.get(pos))?.to_string();
    pos += 1;
    while matches!(toks.get(pos).map(|t| &t.tok), Some(Tok::Dot)) {
        let part = name_of(toks.get(pos + 1))?;
        name.push('.');
        name.push_str(part);
        pos += 2;
    }
    Some((name, pos))
}

fn parse_import(toks: &[Token], out: &mut Vec<ImportRecord>) {
    let line = toks[0].line;
    let mut pos = 1;
    let mut records = Vec::new();
    loop {
        let Some((module, next)) = dotted_name(toks, pos) else {
            return;
        };
        pos = next;
        let mut alias = None;
        if name_of(toks.get(pos)) == Some("as") {
            let Some(a) = name_of(toks.get(pos + 1)) else {
                return;
            };
            alias = Some(a.to_string());
            pos += 2;
        }
        records.push(ImportRecord::new(line, module, ImportStyle::Plain, alias));
        match toks.get(pos).map(|t| &t.tok) {
            Some(Tok::Comma) => pos += 1,
            None => break,
            _ => return,
        }
    }
    out.extend(records);
}

fn parse_from(toks: &[Token], out: &mut Vec<ImportRecord>) {
    let line = toks[0].line;
    let mut pos = 1;
    let mut dots = 0;
    while matches!(toks.get(pos).map(|t| &t.tok), Some(Tok::Dot)) {
        dots += 1;
        pos += 1;
    }
    let mut module = ".".repeat(dots);
    if name_of(toks.get(pos)) != Some("import") {
        let Some((name, next)) = dotted_name(toks, pos) else {
            return;
        };
        module.push_str(&name);
        pos = next;
    }
    if module.is_empty() || name_of(toks.get(pos)) != Some("import") {
        return;
    }
    pos += 1;
    // the imported-name list must be non-empty: `*`, `(names)` or `names`
    let valid = match toks.get(pos).map(|t| &t.tok) {
        Some(Tok::Star) => true,
        Some(Tok::Open) => name_of(toks.get(pos + 1)).is_some(),
        Some(Tok::Name(_)) => true,
        _ => false,
    };
    if !valid {
        return;
    }
    let style = if dots > 0 {
        ImportStyle::Relative
    } else {
        ImportStyle::From
    };
    out.push(ImportRecord::new(line, module, style, None));
}

fn parse_lexed(lexed: &Lexed) -> Vec<ImportRecord> {
    let mut out = Vec::new();
    for logical in &lexed.lines {
        for stmt in logical.split(|t| t.tok == Tok::Semi) {
            if !stmt.is_empty() {
                parse_statement(stmt, &mut out);
            }
        }
    }
    out
}

/// Import statements in source order.
pub fn extract_imports(source: &str) -> Vec<ImportRecord> {
    parse_lexed(&lex(source))
}

pub fn extract_imports_bytes(bytes: &[u8]) -> Result<Vec<ImportRecord>, ImportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ImportError::DecodeError {
        offset: e.valid_up_to(),
    })?;
    Ok(extract_imports(text))
}

/// Imports together with comment and docstring text.
pub fn extract_with_prose(source: &str) -> (Vec<ImportRecord>, Vec<String>) {
    let lexed = lex(source);
    let imports = parse_lexed(&lexed);
    (imports, lexed.prose)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionClass {
    Registry,
    Stdlib,
    Local,
    Unresolved,
}

impl fmt::Display for ResolutionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResolutionClass::Registry => "registry",
            ResolutionClass::Stdlib => "stdlib",
            ResolutionClass::Local => "local",
            ResolutionClass::Unresolved => "unresolved",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub top_level: String,
    pub package: Option<String>,
    pub class: ResolutionClass,
}

/// How standard-library modules that also have a registry entry are classified.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdlibPolicy {
    /// Standard-library modules are always `stdlib`.
    #[default]
    Strict,
    /// A standard-library module with a registry placeholder counts as `registry`.
    RegistryPlaceholder,
}

#[derive(Debug, Clone, Default)]
pub struct Resolver {
    aliases: BTreeMap<String, String>,
    stdlib: BTreeSet<String>,
    registry: BTreeSet<String>,
    policy: StdlibPolicy,
}

impl Resolver {
    /// Built-in alias table and stdlib list with the given registry index.
    pub fn with_defaults<I, S>(registry: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut r = Resolver::default()
            .with_aliases_text(data::ALIASES)
            .with_stdlib_text(data::STDLIB);
        r.extend_registry(registry);
        r
    }

    /// `module<TAB>distribution` rows.
    pub fn with_aliases_text(mut self, text: &str) -> Self {
        self.aliases = data::data_pairs(text)
            .filter_map(|(m, d)| Some((m.to_string(), normalize_name(d).ok()?)))
            .collect();
        self
    }

    pub fn with_stdlib_text(mut self, text: &str) -> Self {
        self.stdlib = data::data_lines(text).map(str::to_string).collect();
        self
    }

    pub fn with_policy(mut self, policy: StdlibPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn extend_registry<I, S>(&mut self, names: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.registry
            .extend(names.into_iter().filter_map(|n| normalize_name(n.as_ref()).ok()));
    }

    pub fn registry_contains(&self, name: &str) -> bool {
        normalize_name(name).is_ok_and(|n| self.registry.contains(&n))
    }

    pub fn alias_for(&self, top_level: &str) -> Option<&str> {
        self.aliases
            .get(top_level)
            .or_else(|| self.aliases.get(&top_level.to_lowercase()))
            .map(String::as_str)
    }

    /// alias table, then stdlib, then exact registry match, else unresolved.
    pub fn resolve(&self, top_level: &str) -> Resolution {
        let res = |package: Option<String>, class| Resolution {
            top_level: top_level.to_string(),
            package,
            class,
        };
        if let Some(pkg) = self.alias_for(top_level) {
            return res(Some(pkg.to_string()), ResolutionClass::Registry);
        }
        let normalized = normalize_name(top_level).ok();
        if self.stdlib.contains(top_level) {
            let in_registry = normalized.as_ref().is_some_and(|n| self.registry.contains(n));
            let class = if self.policy == StdlibPolicy::RegistryPlaceholder && in_registry {
                ResolutionClass::Registry
            } else {
                ResolutionClass::Stdlib
            };
            return res(normalized, class);
        }
        match normalized {
            Some(n) if self.registry.contains(&n) => res(Some(n), ResolutionClass::Registry),
            _ => res(None, ResolutionClass::Unresolved),
        }
    }

    pub fn resolve_record(&self, record: &ImportRecord) -> Resolution {
        if record.style == ImportStyle::Relative {
            return Resolution {
                top_level: record.top_level.clone(),
                package: None,
                class: ResolutionClass::Local,
            };
        }
        self.resolve(&record.top_level)
    }
}
