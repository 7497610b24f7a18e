//! CSV tables, summaries and metadata files.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

/// Floats carry 17 significant digits so reruns can be compared byte for byte.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One asserted inequality, named by what it checks.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub anchor: String,
    pub passed: bool,
    pub observed: f64,
    pub limit: f64,
    pub detail: String,
}

impl Assertion {
    pub fn new(anchor: &str, passed: bool, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            anchor: anchor.to_string(),
            passed,
            observed,
            limit,
            detail: detail.into(),
        }
    }

    /// Passes when `observed <= limit`.
    pub fn at_most(anchor: &str, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::new(anchor, observed <= limit, observed, limit, detail)
    }

    /// Passes when `observed >= limit`.
    pub fn at_least(anchor: &str, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::new(anchor, observed >= limit, observed, limit, detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub passed: bool,
    pub failures: usize,
    pub assertions: Vec<Assertion>,
    pub stats: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaInfo {
    pub declared: f64,
    pub field_estimate: f64,
    pub frame_estimate: f64,
    pub effective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub samples: usize,
    pub config: serde_json::Value,
    pub lambda: Option<LambdaInfo>,
    pub gates: Vec<Gate>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn csv_uses_lf() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), float(0.25)]);
        t.write(&p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1,2.5000000000000000e-1\n");
    }
}
