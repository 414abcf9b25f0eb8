//! Run configuration: a flat text format of `[section]` headers and
//! `key = value` lines.
//!
//! ```text
//! # comment (also after a value, when preceded by whitespace)
//! [problem]
//! dim = 2
//! length = 4pi
//! phi = 1 0 2, 0.5 0 4      # comma list of `c b p` triples, or `laplacian`
//! f = allen_cahn            # registry name, optionally `name(args)` or `-name`
//! ```
//!
//! Numbers accept a trailing `pi` factor (`pi`, `4pi`, `0.5*pi`). Lists are
//! comma separated; commas inside parentheses do not split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Position of a token in the config file, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub value: String,
    pub value_pos: Pos,
}

#[derive(Clone, Debug)]
pub struct Section {
    pub pos: Pos,
    pub entries: BTreeMap<String, Entry>,
}

/// Parsed but untyped document.
#[derive(Clone, Debug)]
pub struct Document {
    pub path: PathBuf,
    pub sections: BTreeMap<String, Section>,
}

/// Allowed keys per section; anything else is rejected with its position.
const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["checks", "seed", "out"]),
    (
        "problem",
        &["dim", "points", "length", "topology", "origin", "phi", "f", "g", "h", "s", "beta"],
    ),
    ("field", &["source", "initial", "value"]),
    (
        "solver",
        &[
            "max_iters",
            "tol",
            "damping",
            "jacobian",
            "preconditioner",
            "linear_tol",
            "restart",
            "max_linear_iters",
            "pseudo_time",
            "gradient_cap",
        ],
    ),
    ("ellipticity", &["regime", "mu", "m", "samples", "n", "c1_phi_scale"]),
    ("tolerances", &["bound", "analytic_bound", "lemma", "remainder"]),
    ("case", &["samples", "zeta_radius", "eta_radius", "expect"]),
    ("rigidity", &["r0", "p_hat", "expect"]),
    ("counterexample", &["p", "beta", "n", "residual_tol", "slope_tol"]),
];

impl Document {
    pub fn parse(path: &Path, text: &str) -> Result<Self, CliError> {
        let err = |line: usize, col: usize, msg: String| CliError::Parse {
            path: path.to_path_buf(),
            pos: Pos { line, col },
            msg,
        };
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = strip_comment(raw);
            let trimmed = content.trim_start();
            if trimmed.trim().is_empty() {
                continue;
            }
            let indent = content.len() - trimmed.len();
            let col0 = raw[..indent].chars().count() + 1;
            let trimmed = trimmed.trim_end();
            if let Some(rest) = trimmed.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(err(line, col0 + trimmed.chars().count(), "expected `]` to close section header".into()));
                };
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(err(line, col0 + 1, format!("unknown section `{name}`")));
                }
                if sections.contains_key(name) {
                    return Err(err(line, col0, format!("duplicate section `{name}`")));
                }
                sections.insert(
                    name.to_string(),
                    Section {
                        pos: Pos { line, col: col0 },
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name.to_string());
                continue;
            }
            let Some(eq) = trimmed.find('=') else {
                return Err(err(line, col0, "expected `key = value` or `[section]`".into()));
            };
            let Some(section) = current.as_ref() else {
                return Err(err(line, col0, "key outside of any section".into()));
            };
            let key = trimmed[..eq].trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(line, col0, format!("invalid key `{key}`")));
            }
            let allowed = SCHEMA.iter().find(|(s, _)| s == section).map(|(_, keys)| *keys).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(err(line, col0, format!("unknown key `{key}` in section [{section}]")));
            }
            let after = &trimmed[eq + 1..];
            let value = after.trim();
            if value.is_empty() {
                return Err(err(line, col0 + trimmed[..=eq].chars().count(), format!("missing value for `{key}`")));
            }
            let lead = after.len() - after.trim_start().len();
            let value_col = col0 + trimmed[..eq + 1 + lead].chars().count();
            let entries = &mut sections.get_mut(section).expect("section inserted").entries;
            if entries.contains_key(key) {
                return Err(err(line, col0, format!("duplicate key `{key}`")));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    value_pos: Pos { line, col: value_col },
                },
            );
        }
        Ok(Document {
            path: path.to_path_buf(),
            sections,
        })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.entries.get(key))
    }

    pub fn error_at(&self, pos: Pos, msg: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.clone(),
            pos,
            msg: msg.into(),
        }
    }

    /// Error for a missing required key, pointing at its section header.
    pub fn missing(&self, section: &str, key: &str) -> CliError {
        let pos = self.sections.get(section).map(|s| s.pos).unwrap_or(Pos { line: 1, col: 1 });
        self.error_at(pos, format!("missing required key `{key}` in [{section}]"))
    }

    pub fn number(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        self.get(section, key)
            .map(|e| parse_number(&e.value).ok_or_else(|| self.error_at(e.value_pos, format!("`{}` is not a number", e.value))))
            .transpose()
    }

    pub fn number_or(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.number(section, key)?.unwrap_or(default))
    }

    pub fn required_number(&self, section: &str, key: &str) -> Result<f64, CliError> {
        self.number(section, key)?.ok_or_else(|| self.missing(section, key))
    }

    pub fn integer(&self, section: &str, key: &str) -> Result<Option<u64>, CliError> {
        self.get(section, key)
            .map(|e| {
                e.value
                    .replace('_', "")
                    .parse::<u64>()
                    .map_err(|_| self.error_at(e.value_pos, format!("`{}` is not a nonnegative integer", e.value)))
            })
            .transpose()
    }

    pub fn integer_or(&self, section: &str, key: &str, default: u64) -> Result<u64, CliError> {
        Ok(self.integer(section, key)?.unwrap_or(default))
    }

    pub fn text(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|e| e.value.as_str())
    }
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && i > 0 && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

/// A float, optionally followed by `pi` (with or without `*`).
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(head) = s.strip_suffix("pi") {
        let head = head.trim_end().trim_end_matches('*').trim_end();
        let factor = match head {
            "" => 1.0,
            "-" => -1.0,
            _ => head.parse::<f64>().ok()?,
        };
        return Some(factor * std::f64::consts::PI);
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Splits on commas that are not inside parentheses. Returns each item with
/// its character offset into `s`.
pub fn split_list(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, &s[start..]));
    out.into_iter()
        .map(|(off, item)| {
            let lead = item.len() - item.trim_start().len();
            (s[..off + lead].chars().count(), item.trim())
        })
        .collect()
}

/// `name`, `-name`, or `name(a, b, ...)` with numeric arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct Call {
    pub name: String,
    pub negate: bool,
    pub args: Vec<f64>,
}

pub fn parse_call(s: &str) -> Result<Call, (usize, String)> {
    let s = s.trim();
    let (negate, body, shift) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start(), s.len() - rest.trim_start().len()),
        None => (false, s, 0),
    };
    let (name, args) = match body.find('(') {
        Some(open) => {
            let Some(inner) = body[open + 1..].strip_suffix(')') else {
                return Err((shift + body.len(), "expected `)`".into()));
            };
            let mut args = Vec::new();
            if !inner.trim().is_empty() {
                for (off, item) in split_list(inner) {
                    let v = parse_number(item).ok_or((shift + open + 1 + off, format!("`{item}` is not a number")))?;
                    args.push(v);
                }
            }
            (body[..open].trim(), args)
        }
        None => (body, Vec::new()),
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err((shift, format!("invalid name `{name}`")));
    }
    Ok(Call {
        name: name.to_string(),
        negate,
        args,
    })
}
