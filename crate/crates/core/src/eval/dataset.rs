//! Text formats for keyword libraries, training pairs and test datasets.
//!
//! - keyword library: one keyword per line, blank lines skipped
//! - pairs: `query<TAB>keyword`
//! - dataset: `query<TAB>golden[ || golden...][<TAB>scenario]`

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::vocab::normalize_text;

pub const GOLDEN_SEPARATOR: &str = " || ";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// 1-based line number in the source file, or position for generated data.
    pub id: usize,
    pub query: String,
    /// Normalized (lowercased, single-spaced) golden keywords.
    pub golden: BTreeSet<String>,
    pub scenario: Option<String>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> EvalError {
    EvalError::Parse { line, reason: reason.into() }
}

pub fn read_keywords<R: BufRead>(reader: R) -> Result<Vec<String>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| parse_err(n + 1, e.to_string()))?;
        let kw = normalize_text(&line);
        if !kw.is_empty() {
            out.push(kw);
        }
    }
    Ok(out)
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| parse_err(n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (query, keyword) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(n + 1, "expected query<TAB>keyword"))?;
        let keyword = normalize_text(keyword);
        if keyword.is_empty() {
            return Err(parse_err(n + 1, "empty keyword"));
        }
        out.push((normalize_text(query), keyword));
    }
    Ok(out)
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[(String, String)]) -> std::io::Result<()> {
    for (q, k) in pairs {
        writeln!(w, "{q}\t{k}")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<QueryRecord>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let id = n + 1;
        let line = line.map_err(|e| parse_err(id, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let query = normalize_text(cols.next().unwrap_or_default());
        let golden: BTreeSet<String> = cols
            .next()
            .ok_or_else(|| parse_err(id, "expected query<TAB>golden"))?
            .split("||")
            .map(normalize_text)
            .filter(|g| !g.is_empty())
            .collect();
        if golden.is_empty() {
            return Err(parse_err(id, "no golden keywords"));
        }
        let scenario = cols.next().map(str::trim).filter(|s| !s.is_empty()).map(String::from);
        if cols.next().is_some() {
            return Err(parse_err(id, "too many columns"));
        }
        out.push(QueryRecord { id, query, golden, scenario });
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(mut w: W, records: &[QueryRecord]) -> std::io::Result<()> {
    for r in records {
        let golden: Vec<&str> = r.golden.iter().map(String::as_str).collect();
        write!(w, "{}\t{}", r.query, golden.join(GOLDEN_SEPARATOR))?;
        if let Some(s) = &r.scenario {
            write!(w, "\t{s}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
