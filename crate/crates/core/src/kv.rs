//! Flat `key = value` text files shared by the manifest and config formats.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat; order
//! is preserved.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    pub entries: Vec<(String, String, usize)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            entries.push((k.to_string(), v.trim().to_string(), i + 1));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = (&'a str, usize)> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(value: &str, line: usize, want: Option<usize>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid value `{s}`"),
            })
        })
        .collect::<Result<_>>()?;
    if let Some(n) = want {
        if items.len() != n {
            return Err(Error::Parse {
                line,
                msg: format!("expected {n} values, found {}", items.len()),
            });
        }
    }
    Ok(items)
}

pub(crate) fn parse_one<T: std::str::FromStr>(value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid value `{value}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_lines() {
        let kv = KvFile::parse("# c\n a = 1 \n\nb=2 3\na = 4\n").unwrap();
        assert_eq!(kv.get("a"), Some(("4", 5)));
        assert_eq!(kv.all("a").count(), 2);
        assert_eq!(parse_list::<u32>("2 3", 4, Some(2)).unwrap(), vec![2, 3]);
        assert!(matches!(KvFile::parse("x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_list::<u32>("2", 9, Some(2)), Err(Error::Parse { line: 9, .. })));
    }
}
