use std::path::{Path, PathBuf};

use romes::io::format_value;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One file written by a command, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub kind: String,
}

/// Collects written files for the summary.
#[derive(Debug, Default)]
pub struct Outputs {
    root: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Io(format!("create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record(&mut self, path: &str, kind: &str) {
        self.files.push(OutputFile {
            path: path.to_string(),
            kind: kind.to_string(),
        });
    }

    /// Writes a CSV table. `None` cells are left empty.
    pub fn table(&mut self, name: &str, header: &[String], rows: &[Vec<Cell>]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.record(name, "csv");
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let path = self.root.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_value(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Empty, Cell::Int)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
