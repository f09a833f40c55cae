//! Output directory, plain-text report and key=value summary.

use std::fs;
use std::path::{Path, PathBuf};

use evoeq::Trajectory64;

use crate::error::CliError;

/// Fixed-width scientific notation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Output {
    dir: PathBuf,
    quiet: bool,
    report: Vec<String>,
    summary: Vec<(String, String)>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

impl Output {
    pub fn new(dir: PathBuf, quiet: bool) -> Self {
        Self {
            dir,
            quiet,
            report: Vec::new(),
            summary: Vec::new(),
        }
    }

    /// Adds a report line, echoed to stdout unless quiet.
    pub fn line(&mut self, s: impl Into<String>) {
        let s = s.into();
        if !self.quiet {
            println!("{s}");
        }
        self.report.push(s);
    }

    pub fn key(&mut self, k: &str, v: impl ToString) {
        self.summary.push((k.to_string(), v.to_string()));
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        Ok(self.dir.join(name))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(name)?;
        fs::write(&p, contents).map_err(|e| io_err(&p, e))
    }

    pub fn trajectory(&self, name: &str, u: &Trajectory64) -> Result<(), CliError> {
        let p = self.path(name)?;
        let file = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        u.write_csv(std::io::BufWriter::new(file)).map_err(|e| io_err(&p, e))
    }

    pub fn table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let p = self.path(name)?;
        let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
        w.write_record(header).map_err(|e| io_err(&p, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| io_err(&p, e))?;
        }
        w.flush().map_err(|e| io_err(&p, e))
    }

    /// Writes `report.txt` and `summary.txt`.
    pub fn finish(&self) -> Result<(), CliError> {
        let mut report = self.report.join("\n");
        report.push('\n');
        self.write("report.txt", &report)?;
        let summary: String = self.summary.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        self.write("summary.txt", &summary)
    }
}
