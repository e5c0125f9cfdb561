//! Minimal CSV writing: comma separated, header row, LF endings, floats
//! with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a table whose cells are already formatted.
pub(crate) fn render(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub(crate) fn render_floats(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    render(header, rows.into_iter().map(|r| r.into_iter().map(float).collect()))
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
