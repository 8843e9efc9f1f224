//! Flat `key=value` configuration text.
//!
//! One pair per line. Blank lines and lines starting with `#` are skipped;
//! whitespace around keys and values is trimmed. Later duplicates win.

use crate::error::{Error, Result};

pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(Error::parse(
                start,
                format!("expected key=value, found {trimmed:?}"),
            ));
        };
        let key = key.trim();
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::parse(start, format!("invalid key {key:?}")));
        }
        let key = key.replace('-', "_");
        let value = value.trim().to_string();
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => out.push((key, value)),
        }
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean {value:?} for {key}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let kv = parse_key_values("# header\nepochs = 10\n\nlr-main=0.01\nepochs=12\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("epochs".to_string(), "12".to_string()),
                ("lr_main".to_string(), "0.01".to_string())
            ]
        );
    }

    #[test]
    fn reports_line_offset() {
        let err = parse_key_values("a=1\nbroken line\n").unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_key_values("=3").is_err());
        assert!(parse_key_values("a b=3").is_err());
    }

    #[test]
    fn value_helpers() {
        assert_eq!(parse_value::<usize>("k", "5").unwrap(), 5);
        assert!(parse_value::<usize>("k", "-5").is_err());
        assert!(parse_bool("b", "true").unwrap());
        assert!(parse_bool("b", "maybe").is_err());
    }
}
