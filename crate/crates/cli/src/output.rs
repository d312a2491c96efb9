//! File writers. Numbers use the shortest round-trip representation, so a
//! re-run with the same config reproduces every file byte for byte.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("output: create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row).with_context(|| format!("output: write {}", path.display()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("output: serialize")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("output: write {}", path.display()))
}
