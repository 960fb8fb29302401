//! CSV and JSON writers.
//!
//! CSV files use `,` separators, a header row and LF line endings; every
//! real is written with 17 significant digits (`{:.16e}`). JSON documents
//! use the shortest representation that round-trips exactly, and `null` for
//! non-finite values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::CliError;

/// A real in the CSV format: 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A real as a JSON value; non-finite values become `null`.
pub fn json_real(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

/// Writes `rows` under `header` to `dir/name`.
pub fn write_csv<I>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let _ = writeln!(text, "{}", row.join(","));
    }
    write_file(&dir.join(name), &text)
}

/// Writes a pretty-printed JSON document to `dir/name`.
pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialise");
    text.push('\n');
    write_file(&dir.join(name), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, -1.0 / 3.0, 2.00055e-3, 1e-300, -0.0] {
            assert_eq!(real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(real(1.0), "1.0000000000000000e0");
        assert_eq!(json_real(f64::INFINITY), Value::Null);
        let v = json_real(0.1 + 0.2);
        assert_eq!(v.as_f64().unwrap(), 0.1 + 0.2);
    }
}
