//! Result files: CSV tables and the plain `report.txt`.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::ExperimentKind;
use crate::error::CliError;

/// `x` with `digits` significant digits; round-trips at 17.
pub fn num(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{:.*e}", digits.saturating_sub(1), x)
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn render(&self, digits: usize) -> String {
        match self {
            Cell::Num(x) => num(*x, digits),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// `# ...` lines written after the header.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, digits: usize) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|c| c.render(digits)).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// Everything one experiment produced; nothing touches the disk until
/// [`Outcome::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub kind: ExperimentKind,
    pub params: Vec<(String, String)>,
    pub results: Vec<(String, String)>,
    pub checks: Vec<Check>,
    /// Scalar summary used for sweep rows.
    pub metrics: Vec<(String, f64)>,
    pub tables: Vec<Table>,
    pub digits: usize,
}

impl Outcome {
    pub fn new(kind: ExperimentKind, digits: usize) -> Self {
        Self {
            kind,
            params: Vec::new(),
            results: Vec::new(),
            checks: Vec::new(),
            metrics: Vec::new(),
            tables: Vec::new(),
            digits,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_string(), value.to_string()));
    }

    pub fn param_num(&mut self, key: &str, x: f64) {
        let v = num(x, self.digits);
        self.params.push((key.to_string(), v));
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.push((key.to_string(), value.to_string()));
    }

    /// Records `x` both as a report line and as a sweep metric.
    pub fn metric(&mut self, key: &str, x: f64) {
        let v = num(x, self.digits);
        self.results.push((key.to_string(), v));
        self.metrics.push((key.to_string(), x));
    }

    pub fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            ok,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.kind.name());
        let _ = writeln!(s, "status = {}", if self.passed() { "pass" } else { "fail" });
        s.push_str("\n[parameters]\n");
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[results]\n");
        for (k, v) in &self.results {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[checks]\n");
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.ok { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        if !self.tables.is_empty() {
            s.push_str("\n[files]\n");
            for t in &self.tables {
                let _ = writeln!(s, "{} ({} rows)", t.name, t.rows.len());
            }
        }
        s
    }

    /// Writes the tables and `report.txt` into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut files: Vec<(String, String)> = self
            .tables
            .iter()
            .map(|t| (t.name.clone(), t.render(self.digits)))
            .collect();
        files.push(("report.txt".into(), self.report()));
        write_files(dir, &files)
    }
}

pub fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(())
}
