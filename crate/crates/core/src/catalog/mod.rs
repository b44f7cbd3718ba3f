//! The categorized seed-alpha catalog.
//!
//! A catalog is an immutable, versioned snapshot. Updates go through
//! [`AlphaCatalog::add_entries`], which returns a new snapshot one version higher.
//!
//! Manifest format, one record per line:
//!
//! ```text
//! # comment
//! #@ version = 3
//! category | name | expression [| provenance | added_version]
//! ```
//!
//! Categories keep the order of their first appearance.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{analyze, parse, Expr, ExprMeta, ParseError};
use crate::market::BASE_FIELDS;

const BUILTIN_MANIFEST: &str = include_str!("../../data/seed_alphas.manifest");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Builtin,
    Llm,
    User,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Builtin => "builtin",
            Provenance::Llm => "llm",
            Provenance::User => "user",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "builtin" => Ok(Provenance::Builtin),
            "llm" => Ok(Provenance::Llm),
            "user" => Ok(Provenance::User),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// Identity of an alpha: its category plus its name within the category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlphaKey {
    pub category: String,
    pub name: String,
}

impl AlphaKey {
    pub fn new(category: impl Into<String>, name: impl Into<String>) -> Self {
        Self { category: category.into(), name: name.into() }
    }
}

impl fmt::Display for AlphaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.category, self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub category: String,
    pub name: String,
    /// Source text as written in the manifest.
    pub expression: String,
    pub provenance: Provenance,
    pub added_version: u64,
    expr: Expr,
    meta: ExprMeta,
}

impl CatalogEntry {
    /// Parses and analyzes `expression`; `added_version` is assigned on insertion.
    pub fn new(
        category: impl Into<String>,
        name: impl Into<String>,
        expression: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self, CatalogError> {
        let (category, name, expression) = (category.into(), name.into(), expression.into());
        check_text("category", &category)?;
        check_text("name", &name)?;
        let expr =
            parse(&expression).map_err(|error| CatalogError::Parse { key: AlphaKey::new(&category, &name), error })?;
        let meta = analyze(&expr);
        Ok(Self { category, name, expression, provenance, added_version: 0, expr, meta })
    }

    pub fn key(&self) -> AlphaKey {
        AlphaKey::new(&self.category, &self.name)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn meta(&self) -> &ExprMeta {
        &self.meta
    }

    /// Required fields that are not among the base OHLCV fields.
    pub fn needs_fields(&self) -> Vec<String> {
        self.meta.required_fields.iter().filter(|f| !BASE_FIELDS.contains(&f.as_str())).cloned().collect()
    }
}

fn check_text(what: &'static str, s: &str) -> Result<(), CatalogError> {
    if s.trim().is_empty() || s.contains('|') || s.contains('\n') || s.trim() != s {
        return Err(CatalogError::BadText { what, text: s.to_string() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("no categories")]
    NoCategories,
    #[error("{} invalid row(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rows(Vec<RowError>),
    #[error("duplicate alpha {0}")]
    Duplicate(AlphaKey),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("{key}: {error}")]
    Parse { key: AlphaKey, error: ParseError },
    #[error("invalid {what} {text:?}")]
    BadText { what: &'static str, text: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A versioned snapshot of seed alphas.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCatalog {
    entries: Vec<CatalogEntry>,
    version: u64,
    categories: Vec<String>,
}

impl AlphaCatalog {
    /// The shipped catalog.
    pub fn builtin() -> AlphaCatalog {
        parse_manifest(BUILTIN_MANIFEST).expect("builtin manifest is valid")
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &AlphaKey) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.category == key.category && e.name == key.name)
    }

    /// Position of `category` in the catalog's category order.
    pub fn category_rank(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    /// Entries of one category, in catalog order.
    pub fn filter_by_category(&self, category: &str) -> Result<Vec<&CatalogEntry>, CatalogError> {
        if self.category_rank(category).is_none() {
            return Err(CatalogError::UnknownCategory(category.to_string()));
        }
        Ok(self.entries.iter().filter(|e| e.category == category).collect())
    }

    /// A new snapshot with `entries` appended at `version + 1`. `self` is untouched.
    pub fn add_entries(&self, entries: Vec<CatalogEntry>) -> Result<AlphaCatalog, CatalogError> {
        let version = self.version + 1;
        let mut next = self.clone();
        let mut seen: HashSet<AlphaKey> = self.entries.iter().map(|e| e.key()).collect();
        for mut e in entries {
            if !seen.insert(e.key()) {
                return Err(CatalogError::Duplicate(e.key()));
            }
            if next.category_rank(&e.category).is_none() {
                next.categories.push(e.category.clone());
            }
            e.added_version = version;
            next.entries.push(e);
        }
        next.version = version;
        Ok(next)
    }

    /// The entries named by `keys`, in `keys` order, at the same version. Unknown keys
    /// are ignored.
    pub fn subset(&self, keys: &[AlphaKey]) -> AlphaCatalog {
        let entries: Vec<CatalogEntry> = keys.iter().filter_map(|k| self.get(k).cloned()).collect();
        let categories =
            self.categories.iter().filter(|c| entries.iter().any(|e| &e.category == *c)).cloned().collect();
        AlphaCatalog { entries, version: self.version, categories }
    }

    /// All fields any entry needs beyond the base OHLCV set.
    pub fn external_fields(&self) -> BTreeSet<String> {
        self.entries.iter().flat_map(|e| e.needs_fields()).collect()
    }

    /// Manifest text that [`parse_manifest`] reads back to an equal catalog.
    pub fn to_manifest(&self) -> String {
        let mut out = format!("#@ version = {}\n", self.version);
        for e in &self.entries {
            out.push_str(&format!(
                "{} | {} | {} | {} | {}\n",
                e.category, e.name, e.expression, e.provenance, e.added_version
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CatalogError> {
        std::fs::write(path, self.to_manifest())?;
        Ok(())
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<AlphaCatalog, CatalogError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

/// Parses manifest text. All row problems are collected before failing.
pub fn parse_manifest(text: &str) -> Result<AlphaCatalog, CatalogError> {
    let mut version = 1u64;
    let mut entries: Vec<CatalogEntry> = Vec::new();
    let mut categories: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let mut errors = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if let Some(directive) = trimmed.strip_prefix("#@") {
            match parse_directive(directive) {
                Ok(v) => version = v,
                Err(message) => errors.push(RowError { line, message }),
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('|').map(str::trim).collect();
        if cols.len() != 3 && cols.len() != 5 {
            errors.push(RowError { line, message: format!("expected 3 or 5 columns, found {}", cols.len()) });
            continue;
        }
        let provenance = match cols.get(3).map(|s| s.parse::<Provenance>()) {
            None => Provenance::Builtin,
            Some(Ok(p)) => p,
            Some(Err(message)) => {
                errors.push(RowError { line, message });
                continue;
            }
        };
        let added = match cols.get(4).map(|s| s.parse::<u64>()) {
            None => None,
            Some(Ok(v)) => Some(v),
            Some(Err(_)) => {
                errors.push(RowError { line, message: format!("bad added_version {:?}", cols[4]) });
                continue;
            }
        };
        let mut entry = match CatalogEntry::new(cols[0], cols[1], cols[2], provenance) {
            Ok(e) => e,
            Err(e) => {
                errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        if !seen.insert(entry.key()) {
            errors.push(RowError { line, message: format!("duplicate alpha {}", entry.key()) });
            continue;
        }
        entry.added_version = added.unwrap_or(0);
        if !categories.contains(&entry.category) {
            categories.push(entry.category.clone());
        }
        entries.push(entry);
    }
    if !errors.is_empty() {
        return Err(CatalogError::Rows(errors));
    }
    if categories.is_empty() {
        return Err(CatalogError::NoCategories);
    }
    for e in &mut entries {
        if e.added_version == 0 {
            e.added_version = version;
        }
        if e.added_version > version {
            return Err(CatalogError::Rows(vec![RowError {
                line: 0,
                message: format!("{} added at version {} after catalog version {version}", e.key(), e.added_version),
            }]));
        }
    }
    Ok(AlphaCatalog { entries, version, categories })
}

fn parse_directive(s: &str) -> Result<u64, String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("bad directive {s:?}"))?;
    if key.trim() != "version" {
        return Err(format!("unknown directive {:?}", key.trim()));
    }
    value.trim().parse::<u64>().ok().filter(|v| *v >= 1).ok_or_else(|| format!("bad version {:?}", value.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_counts() {
        let c = AlphaCatalog::builtin();
        assert_eq!(c.categories().len(), 9);
        assert_eq!(c.len(), 92);
        let counts: Vec<usize> = c.categories().iter().map(|k| c.filter_by_category(k).unwrap().len()).collect();
        assert_eq!(counts, vec![11, 10, 10, 6, 18, 8, 10, 9, 10]);
        assert_eq!(c.version(), 1);
        assert!(c.entries().iter().all(|e| e.provenance == Provenance::Builtin && e.added_version == 1));
    }

    #[test]
    fn needs_fields_flags_external_inputs() {
        let c = AlphaCatalog::builtin();
        let pe = c.get(&AlphaKey::new("Fundamental", "Price-to-Earnings Ratio (P/E)")).unwrap();
        assert_eq!(pe.needs_fields(), vec!["EPS".to_string()]);
        let dpo = c.get(&AlphaKey::new("Momentum", "Detrended Price Oscillator (DPO)")).unwrap();
        assert!(dpo.needs_fields().is_empty());
    }

    #[test]
    fn empty_and_comment_only_fail() {
        assert!(matches!(parse_manifest(""), Err(CatalogError::NoCategories)));
        assert!(matches!(parse_manifest("# nothing\n\n"), Err(CatalogError::NoCategories)));
    }

    #[test]
    fn bad_rows_listed_with_lines() {
        let text = "A | x | CLOSE\nA | y | SMA(CLOSE\nB | z | CLOSE | alien | 1\nA | x | OPEN\n";
        match parse_manifest(text) {
            Err(CatalogError::Rows(rows)) => {
                let lines: Vec<usize> = rows.iter().map(|r| r.line).collect();
                assert_eq!(lines, vec![2, 3, 4]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn add_entries_is_persistent() {
        let c = AlphaCatalog::builtin();
        let e = CatalogEntry::new("Momentum", "Two Day", "CLOSE - DELAY(CLOSE, 2)", Provenance::User).unwrap();
        let next = c.add_entries(vec![e]).unwrap();
        assert_eq!(next.len(), c.len() + 1);
        assert_eq!(next.version(), 2);
        assert_eq!(c.version(), 1);
        assert_eq!(next.entries().last().unwrap().added_version, 2);
        let dup = CatalogEntry::new("Momentum", "Price Momentum", "CLOSE", Provenance::User).unwrap();
        assert!(matches!(next.add_entries(vec![dup]), Err(CatalogError::Duplicate(_))));
        assert!(matches!(c.filter_by_category("Astrology"), Err(CatalogError::UnknownCategory(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let c = AlphaCatalog::builtin();
        let e = CatalogEntry::new("Sentiment", "Fresh", "CS_RANK(VOLUME)", Provenance::Llm).unwrap();
        let next = c.add_entries(vec![e]).unwrap();
        let back = parse_manifest(&next.to_manifest()).unwrap();
        assert_eq!(back, next);
        assert_eq!(back.categories().last().unwrap(), "Sentiment");
    }
}
