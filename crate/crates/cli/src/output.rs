//! Deterministic CSV/JSON writers. Every document carries the tool version
//! and the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nskrt_core::Provenance;
use serde::Serialize;

pub const TOOL: &str = "nskrt";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn provenance(config_hash: &str) -> Provenance {
    Provenance {
        tool: TOOL.into(),
        version: VERSION.into(),
        config_hash: config_hash.into(),
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV text: provenance comment, header, rows.
pub fn csv(config_hash: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = format!("# {TOOL} {VERSION} config_hash={config_hash}\n");
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// A JSON document with provenance alongside the body's fields.
#[derive(Serialize)]
pub struct Document<'a, T: Serialize> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn json<T: Serialize>(config_hash: &str, body: &T) -> Result<String> {
    let doc = Document {
        provenance: provenance(config_hash),
        body,
    };
    let mut s = serde_json::to_string_pretty(&doc).context("output: serialising document")?;
    s.push('\n');
    Ok(s)
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("output: creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("output: writing {}", path.display()))?;
    Ok(path)
}
