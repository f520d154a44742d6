//! Conditional-independence statements and their text grammar.
//!
//! ```text
//! A1,A2 _||_ W | Z        {A1,A2} independent of {W} given {Z}
//! A1 _||_ A2 |            empty conditioning set
//! A1 _||_ A2 | -          same
//! ```
//!
//! Whitespace is insignificant. Disjointness and name resolution are checked
//! when a statement is evaluated against a table, not here.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::table::Schema;

pub type NameSet = BTreeSet<String>;

/// `x ⫫ y | given`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CIStatement {
    pub x: NameSet,
    pub y: NameSet,
    pub given: NameSet,
}

pub(crate) fn names<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> NameSet {
    items.into_iter().map(|s| s.as_ref().to_string()).collect()
}

impl CIStatement {
    pub fn new<S: AsRef<str>>(
        x: impl IntoIterator<Item = S>,
        y: impl IntoIterator<Item = S>,
        given: impl IntoIterator<Item = S>,
    ) -> Self {
        CIStatement {
            x: names(x),
            y: names(y),
            given: names(given),
        }
    }

    pub fn swapped(&self) -> Self {
        CIStatement {
            x: self.y.clone(),
            y: self.x.clone(),
            given: self.given.clone(),
        }
    }

    /// Same statement up to the symmetry `x ⫫ y | z  ⇔  y ⫫ x | z`.
    pub fn equivalent(&self, other: &CIStatement) -> bool {
        self == other || *self == other.swapped()
    }

    /// Checks non-emptiness, disjointness and that every name is in `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.x.is_empty() || self.y.is_empty() {
            return Err(Error::MalformedStatement(format!("`{self}` has an empty side")));
        }
        check_disjoint(&[&self.x, &self.y, &self.given])?;
        for n in self.x.iter().chain(&self.y).chain(&self.given) {
            schema.require(n)?;
        }
        Ok(())
    }
}

pub(crate) fn check_disjoint(sets: &[&NameSet]) -> Result<()> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if let Some(n) = a.intersection(b).next() {
                return Err(Error::OverlappingSets(n.clone()));
            }
        }
    }
    Ok(())
}

fn write_set(f: &mut fmt::Formatter<'_>, s: &NameSet) -> fmt::Result {
    let joined: Vec<&str> = s.iter().map(String::as_str).collect();
    f.write_str(&joined.join(","))
}

impl fmt::Display for CIStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_set(f, &self.x)?;
        f.write_str(" _||_ ")?;
        write_set(f, &self.y)?;
        f.write_str(" |")?;
        if !self.given.is_empty() {
            f.write_str(" ")?;
            write_set(f, &self.given)?;
        }
        Ok(())
    }
}

const SEP: &str = "_||_";

fn parse_names(text: &str, offset: usize, allow_empty: bool) -> Result<NameSet> {
    let trimmed = text.trim();
    if trimmed.is_empty() || (allow_empty && trimmed == "-") {
        if allow_empty {
            return Ok(NameSet::new());
        }
        return Err(Error::Parse {
            pos: offset,
            msg: "expected at least one variable name".into(),
        });
    }
    let mut out = NameSet::new();
    let mut pos = offset;
    for part in text.split(',') {
        let name = part.trim();
        if name.is_empty() {
            return Err(Error::Parse {
                pos,
                msg: "empty variable name".into(),
            });
        }
        if let Some(i) = name.find(|c: char| c.is_whitespace() || c == '|') {
            let lead = part.len() - part.trim_start().len();
            return Err(Error::Parse {
                pos: pos + lead + i,
                msg: format!("unexpected character in `{name}`"),
            });
        }
        out.insert(name.to_string());
        pos += part.len() + 1;
    }
    Ok(out)
}

impl FromStr for CIStatement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sep = s.find(SEP).ok_or_else(|| Error::Parse {
            pos: 0,
            msg: format!("missing `{SEP}`"),
        })?;
        let lhs = &s[..sep];
        let rest_start = sep + SEP.len();
        let rest = &s[rest_start..];
        if let Some(i) = rest.find(SEP) {
            return Err(Error::Parse {
                pos: rest_start + i,
                msg: format!("second `{SEP}`"),
            });
        }
        let (rhs, given, given_start) = match rest.find('|') {
            Some(bar) => (&rest[..bar], &rest[bar + 1..], rest_start + bar + 1),
            None => (rest, "", s.len()),
        };
        if let Some(i) = given.find('|') {
            return Err(Error::Parse {
                pos: given_start + i,
                msg: "second `|`".into(),
            });
        }
        Ok(CIStatement {
            x: parse_names(lhs, 0, false)?,
            y: parse_names(rhs, rest_start, false)?,
            given: parse_names(given, given_start, true)?,
        })
    }
}

impl Serialize for CIStatement {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CIStatement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The groups are jointly (fully) independent given `given`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualStatement {
    pub groups: Vec<NameSet>,
    #[serde(default)]
    pub given: NameSet,
}

impl MutualStatement {
    pub fn singletons<S: AsRef<str>>(vars: impl IntoIterator<Item = S>, given: impl IntoIterator<Item = S>) -> Self {
        MutualStatement {
            groups: vars.into_iter().map(|v| names([v])).collect(),
            given: names(given),
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.groups.len() < 2 {
            return Err(Error::MalformedStatement("mutual independence needs at least two groups".into()));
        }
        if self.groups.iter().any(|g| g.is_empty()) {
            return Err(Error::MalformedStatement("empty group".into()));
        }
        let mut sets: Vec<&NameSet> = self.groups.iter().collect();
        sets.push(&self.given);
        check_disjoint(&sets)?;
        for n in sets.iter().flat_map(|s| s.iter()) {
            schema.require(n)?;
        }
        Ok(())
    }
}

impl fmt::Display for MutualStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("mutual(")?;
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write_set(f, g)?;
        }
        f.write_str(" |")?;
        if !self.given.is_empty() {
            f.write_str(" ")?;
            write_set(f, &self.given)?;
        }
        f.write_str(")")
    }
}

/// A premise: either a CI statement or a mutual-independence statement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Statement {
    Ci(CIStatement),
    Mutual(MutualStatement),
}

impl Statement {
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        match self {
            Statement::Ci(s) => s.validate(schema),
            Statement::Mutual(m) => m.validate(schema),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Ci(s) => s.fmt(f),
            Statement::Mutual(m) => m.fmt(f),
        }
    }
}
