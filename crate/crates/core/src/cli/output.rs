//! Report and plot-data files, written together at the end of a run.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::Outcome;
use crate::error::{Error, Result};
use crate::stat_tests::PValue;

pub(super) struct Outputs {
    dir: PathBuf,
    run: String,
    report: Option<PathBuf>,
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub(super) fn new(dir: &Path, run: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            run: run.to_string(),
            report: None,
            files: Vec::new(),
        }
    }

    fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}.{ext}", self.run))
    }

    pub(super) fn json<T: Serialize>(&mut self, report: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
        body.push('\n');
        let path = self.path("report", "json");
        self.report = Some(path.clone());
        self.files.push((path, body));
        Ok(())
    }

    pub(super) fn plot(&mut self, figure: &str, csv: String) {
        let path = self.path(figure, "csv");
        self.files.push((path, csv));
    }

    pub(super) fn data_file(&mut self, suffix: &str, csv: String) -> PathBuf {
        let path = self.path(suffix, "csv");
        self.files.push((path.clone(), csv));
        path
    }

    pub(super) fn finish(self, summary: String, success: bool) -> Result<Outcome> {
        std::fs::create_dir_all(&self.dir)?;
        for (path, body) in &self.files {
            std::fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(Outcome {
            report: self.report.unwrap_or_default(),
            files: self.files.into_iter().map(|(p, _)| p).collect(),
            summary,
            success,
        })
    }
}

/// Two-column CSV with a header row.
pub(super) fn xy_csv<X: Display, Y: Display>(header: (&str, &str), rows: impl IntoIterator<Item = (X, Y)>) -> String {
    let mut s = format!("{},{}\n", header.0, header.1);
    for (x, y) in rows {
        s.push_str(&format!("{x},{y}\n"));
    }
    s
}

pub(super) fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => "n/a".to_string(),
    }
}

pub(super) fn fmt_p(p: PValue) -> String {
    match p {
        PValue::Exact(v) => format!("{v:.4}"),
        PValue::Bracket(b) => b.label().to_string(),
        PValue::Unavailable => "n/a".to_string(),
    }
}
