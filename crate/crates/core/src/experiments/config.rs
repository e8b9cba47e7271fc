//! Flat key-value config files. CLI flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key = value` / `key value` lines; `#` starts a comment.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
}

pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = if let Some((k, v)) = line.split_once('=') {
            (k.trim(), v.trim())
        } else if let Some((k, v)) = line.split_once(char::is_whitespace) {
            (k.trim(), v.trim())
        } else {
            return Err(format!("line {}: expected `key = value`", lineno + 1));
        };
        if key.is_empty() || value.is_empty() {
            return Err(format!("line {}: empty key or value", lineno + 1));
        }
        out.insert(key.replace('-', "_"), value.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_separators_and_comments() {
        let cfg = parse_config("seed = 7\nk 12\n# comment\ngnn gat # trailing\n").unwrap();
        assert_eq!(cfg.get("seed").unwrap(), "7");
        assert_eq!(cfg.get("k").unwrap(), "12");
        assert_eq!(cfg.get("gnn").unwrap(), "gat");
    }

    #[test]
    fn dashes_normalize_to_underscores() {
        let cfg = parse_config("input-mode = raw\n").unwrap();
        assert_eq!(cfg.get("input_mode").unwrap(), "raw");
    }

    #[test]
    fn rejects_bare_words() {
        assert!(parse_config("justakey\n").is_err());
    }
}
