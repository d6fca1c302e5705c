//! Language codes and surface-string normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// A benchmark language code such as `en`, `zh` or `pt-br`.
///
/// Codes are lowercase ASCII: a 2–3 letter primary subtag optionally
/// followed by one `-` and a 2–8 character alphanumeric region/script tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Lang(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid language code {0:?}")]
pub struct InvalidLang(pub String);

impl Lang {
    pub fn new(code: &str) -> Result<Self, InvalidLang> {
        let code = code.trim();
        let (primary, rest) = match code.split_once('-') {
            Some((p, r)) => (p, Some(r)),
            None => (code, None),
        };
        let primary_ok =
            (2..=3).contains(&primary.len()) && primary.bytes().all(|b| b.is_ascii_lowercase());
        let rest_ok = rest.is_none_or(|r| {
            (2..=8).contains(&r.len())
                && r.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        });
        if primary_ok && rest_ok {
            Ok(Self(code.to_string()))
        } else {
            Err(InvalidLang(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Lang {
    type Err = InvalidLang;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for Lang {
    type Error = InvalidLang;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s)
    }
}

impl From<Lang> for String {
    fn from(l: Lang) -> Self {
        l.0
    }
}

/// NFC-normalize and trim a surface form. Case is preserved.
pub fn normalize_surface(s: &str) -> String {
    s.nfc().collect::<String>().trim().to_string()
}

/// Comparison key for agreement and synset checks: normalized, then
/// lowercased. Lowercasing is a no-op for caseless scripts (Han, kana, Hebrew).
pub fn fold(s: &str) -> String {
    normalize_surface(s).to_lowercase()
}

/// ASCII slug of an English surface: lowercase, spaces and underscores become
/// hyphens, anything else outside `[a-z0-9-]` is dropped.
pub fn slugify(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in normalize_surface(s).to_lowercase().chars() {
        match ch {
            'a'..='z' | '0'..='9' => out.push(ch),
            ' ' | '_' | '-'
                if !out.is_empty() && !out.ends_with('-') => {
                    out.push('-');
                }
            _ => {}
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}
