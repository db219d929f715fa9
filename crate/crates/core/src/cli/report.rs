use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::CliError;

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything a command produced: config echo, key-value results, verdicts
/// and named file artifacts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub results: Vec<(String, String)>,
    pub verdicts: Vec<Verdict>,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl RunReport {
    pub fn new(command: &str, config: &[(String, String)]) -> Self {
        Self { command: command.to_string(), config: config.to_vec(), ..Default::default() }
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.push((key.to_string(), value.to_string()));
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl ToString) {
        self.verdicts.push(Verdict { name: name.to_string(), pass, detail: detail.to_string() });
    }

    pub fn artifact(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Verdict table, one `PASS`/`FAIL` line per check.
    pub fn summary(&self) -> String {
        let width = self.verdicts.iter().map(|v| v.name.len()).max().unwrap_or(0);
        let mut s = String::new();
        for v in &self.verdicts {
            let tag = if v.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{tag}  {:width$}  {}", v.name, v.detail);
        }
        let passed = self.verdicts.iter().filter(|v| v.pass).count();
        let _ = writeln!(s, "{} {passed}/{} checks passed", self.command, self.verdicts.len());
        s
    }

    /// Report body without the wall-time footer.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "\n[config]");
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k} = {v}");
        }
        if !self.results.is_empty() {
            let _ = writeln!(s, "\n[results]");
            for (k, v) in &self.results {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        if !self.verdicts.is_empty() {
            let _ = writeln!(s, "\n[verdicts]");
            s.push_str(&self.summary());
        }
        s
    }
}

/// Writes `report.txt` and every artifact into `dir`, creating it if needed.
/// Returns the written paths, `report.txt` first.
pub fn write_report(report: &RunReport, dir: &Path, wall_secs: f64) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(report.artifacts.len() + 1);
    let path = dir.join("report.txt");
    let text = format!("{}\nwall_time_s = {wall_secs:.3}\n", report.to_text());
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    for (name, bytes) in &report.artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
