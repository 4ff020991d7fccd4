//! Construction strings.
//!
//! A domain string is `base` optionally followed by `|key:value,key:value...`.
//! Values may carry a parenthesized argument list, inside which `,` and `:`
//! lose their meaning: `action:pixel-pick-and-place(1)`. A repeated key
//! overrides the earlier value but keeps its position, so appending
//! `,disp:False` to a string works as an override.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub base: String,
    pub params: IndexMap<String, String>,
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::Parse { position, message: message.into() }
}

const STRUCTURAL: [char; 5] = ['|', ',', ':', '(', ')'];

fn check_atom(s: &str, what: &str, offset: usize) -> Result<()> {
    if s.is_empty() {
        return Err(parse_error(offset, format!("empty {what}")));
    }
    if let Some(i) = s.find(STRUCTURAL) {
        return Err(parse_error(offset + i, format!("unexpected `{}` in {what}", &s[i..i + 1])));
    }
    Ok(())
}

impl DomainSpec {
    pub fn new(base: impl Into<String>) -> Self {
        DomainSpec { base: base.into(), params: IndexMap::new() }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(parse_error(0, "empty domain string"));
        }
        let (base, rest) = match s.find('|') {
            Some(i) => (&s[..i], Some(i + 1)),
            None => (s, None),
        };
        check_atom(base, "base", 0)?;
        let mut spec = DomainSpec::new(base);
        let Some(start) = rest else { return Ok(spec) };

        let bytes = s.as_bytes();
        let mut i = start;
        loop {
            let key_start = i;
            while i < s.len() && !matches!(bytes[i], b':' | b',' | b'|' | b'(' | b')') {
                i += 1;
            }
            check_atom(&s[key_start..i], "key", key_start)?;
            if i >= s.len() || bytes[i] != b':' {
                return Err(parse_error(i, format!("expected `:` after key `{}`", &s[key_start..i])));
            }
            let key = &s[key_start..i];
            i += 1;

            let value_start = i;
            let mut depth = 0usize;
            while i < s.len() {
                match bytes[i] {
                    b'(' => depth += 1,
                    b')' => {
                        if depth == 0 {
                            return Err(parse_error(i, "unbalanced `)`"));
                        }
                        depth -= 1;
                    }
                    b',' if depth == 0 => break,
                    b'|' | b':' if depth == 0 => {
                        return Err(parse_error(i, format!("unexpected `{}` in value", bytes[i] as char)))
                    }
                    _ => {}
                }
                i += 1;
            }
            if depth != 0 {
                return Err(parse_error(i, "unclosed `(`"));
            }
            let value = &s[value_start..i];
            if value.is_empty() {
                return Err(parse_error(value_start, format!("empty value for key `{key}`")));
            }
            if value.starts_with('(') {
                return Err(parse_error(value_start, "a value needs a name before its arguments"));
            }
            if let Some(close) = value.rfind(')') {
                if close + 1 != value.len() {
                    return Err(parse_error(value_start + close + 1, "text after a closing `)`"));
                }
            }
            spec.params.insert(key.to_string(), value.to_string());
            if i >= s.len() {
                return Ok(spec);
            }
            i += 1;
        }
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        for (n, (k, v)) in self.params.iter().enumerate() {
            f.write_str(if n == 0 { "|" } else { "," })?;
            write!(f, "{k}:{v}")?;
        }
        Ok(())
    }
}

impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainSpec::parse(s)
    }
}

/// Splits `name(args)` into its name and argument text.
pub fn split_call(value: &str) -> (&str, Option<&str>) {
    match value.find('(') {
        Some(i) if value.ends_with(')') => (&value[..i], Some(&value[i + 1..value.len() - 1])),
        _ => (value, None),
    }
}

/// `base` or `base|variant`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentSpec {
    pub base: String,
    pub variant: Option<String>,
}

impl AgentSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (base, variant) = match s.split_once('|') {
            Some((b, v)) => (b, Some(v)),
            None => (s, None),
        };
        if base.is_empty() {
            return Err(parse_error(0, "empty agent base"));
        }
        match variant {
            Some("") => Err(parse_error(s.len(), "empty agent variant")),
            Some(v) if v.contains('|') => Err(parse_error(base.len() + 1 + v.find('|').unwrap(), "second `|`")),
            v => Ok(AgentSpec { base: base.to_string(), variant: v.map(str::to_string) }),
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            Some(v) => write!(f, "{}|{v}", self.base),
            None => f.write_str(&self.base),
        }
    }
}

impl FromStr for AgentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentSpec::parse(s)
    }
}
