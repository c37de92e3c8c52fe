use regex::Regex;
use std::sync::LazyLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("found {found} item{}, need {need}", if *.found == 1 { "" } else { "s" })]
pub struct ParseError {
    pub found: usize,
    pub need: usize,
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+\s*[.)]\s*(.*)$").unwrap());

/// Extracts the first `m` items of a numbered list.
///
/// Lines starting with `N.` or `N)` are items. Because prompts end with
/// `1.`, a first non-empty line without a marker counts as item 1. Other
/// unmarked lines and empty items are ignored.
pub fn parse_numbered_list(raw: &str, m: usize) -> Result<Vec<String>, ParseError> {
    let mut items = Vec::new();
    let mut first = true;
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let text = match MARKER.captures(line) {
            Some(c) => Some(c.get(1).map_or("", |g| g.as_str()).trim()),
            None if first => Some(line.trim()),
            None => None,
        };
        first = false;
        if let Some(t) = text.filter(|t| !t.is_empty()) {
            items.push(t.to_string());
            if items.len() == m {
                return Ok(items);
            }
        }
    }
    Err(ParseError {
        found: items.len(),
        need: m,
    })
}
