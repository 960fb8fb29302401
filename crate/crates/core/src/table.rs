//! Two-column numeric text tables used for user-supplied densities and
//! resilience functions.

use crate::error::{Error, Result};

/// Parses whitespace- or comma-separated `x, value` rows.
///
/// Blank lines and lines starting with `#` are skipped. Abscissae must be
/// strictly increasing and every entry finite.
pub fn parse_two_column(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::invalid(format!(
                "line {}: expected two columns, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |f: &str| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::invalid(format!("line {}: '{f}' is not a finite number", lineno + 1))
                })
        };
        rows.push((parse(fields[0])?, parse(fields[1])?));
    }
    if rows.len() < 2 {
        return Err(Error::invalid("a table needs at least two rows"));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid(
            "table abscissae must be strictly increasing",
        ));
    }
    Ok(rows)
}

/// Index `i` of the segment `[xs[i], xs[i+1]]` containing `x`, clamped to the
/// first and last segments.
pub(crate) fn segment(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    match xs.partition_point(|&v| v <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    }
}

/// Piecewise-linear interpolation, extrapolating linearly past the ends.
pub(crate) fn lerp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = segment(xs, x);
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}
