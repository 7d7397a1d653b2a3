//! Line-oriented `key=value` blocks used for lighting rigs, job files and configs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An ordered `key=value` block. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvBlock {
    entries: Vec<(String, String)>,
    lines: BTreeMap<String, usize>,
}

impl KvBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut block = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, found '{line}'"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if block.lines.contains_key(key) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key '{key}'"),
                });
            }
            block.lines.insert(key.to_string(), i + 1);
            block.entries.push((key.to_string(), v.trim().to_string()));
        }
        Ok(block)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        self.lines.insert(key.clone(), self.entries.len() + 1);
        self.entries.push((key, value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Argument(format!("missing required key '{key}'")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| Error::Parse {
                line: self.lines.get(key).copied().unwrap_or(0),
                msg: format!("invalid value '{v}' for '{key}'"),
            }),
        }
    }

    /// Rejects any key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse {
                    line: self.lines.get(k).copied().unwrap_or(0),
                    msg: format!("unknown key '{k}'"),
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// Formats a float so that parsing it back reproduces the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_vec3(v: [f64; 3]) -> String {
    format!("{},{},{}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2]))
}

pub fn parse_vec3(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("expected three comma-separated numbers, found '{s}'")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::Format(format!("bad number '{p}' in '{s}'")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let b = KvBlock::parse("# c\nmesh = a.obj\nviews=6\n\n").unwrap();
        assert_eq!(b.get("mesh"), Some("a.obj"));
        assert_eq!(b.parse_value::<usize>("views").unwrap(), Some(6));
        assert!(b.reject_unknown(&["mesh"]).is_err());
        assert!(b.reject_unknown(&["mesh", "views"]).is_ok());
        assert!(matches!(KvBlock::parse("a=1\nnot a pair"), Err(Error::Parse { line: 2, .. })));
        assert!(KvBlock::parse("a=1\na=2").is_err());
    }

    #[test]
    fn float_text_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2400.0, -4.25e-7] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(parse_vec3(&fmt_vec3([0.1, 0.2, 0.3])).unwrap(), [0.1, 0.2, 0.3]);
    }
}
