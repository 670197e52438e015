//! Loading scripts and notebooks into a flat, line-addressed [`SourceUnit`].
//!
//! Notebooks are flattened by concatenating their code cells in document
//! order. No separator lines are introduced; the cell boundaries are kept in
//! [`SourceUnit::cell_map`] so every flat line can be mapped back to the cell
//! it came from.

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    InvalidUtf8 { path: String },
    #[error("malformed notebook {path}: {reason}")]
    MalformedNotebook { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("line {line} is outside 1..={len}")]
pub struct OutOfRange {
    pub line: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Script,
    Notebook,
}

/// A contiguous run of flat lines contributed by one notebook code cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange {
    /// Index of the cell in the notebook's `cells` array (markdown cells count).
    pub cell_index: usize,
    pub first_line: usize,
    pub last_line: usize,
}

/// Location of a flat line in the original document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineLocation {
    Script(usize),
    /// Cell index and 1-based line within that cell.
    Cell {
        cell: usize,
        line: usize,
    },
}

impl fmt::Display for LineLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineLocation::Script(line) => write!(f, "{line}"),
            LineLocation::Cell { cell, line } => write!(f, "cell {cell}, line {line}"),
        }
    }
}

/// A script or flattened notebook.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    pub id: String,
    pub kind: UnitKind,
    lines: Vec<String>,
    cell_map: Vec<CellRange>,
    trailing_newline: bool,
    /// Original notebook document, kept so edits can be written back into it.
    notebook: Option<Value>,
}

impl SourceUnit {
    /// Builds a script unit from text. Lines are split on `\n` only, so a
    /// `\r` before the newline stays part of the line text.
    pub fn from_script(id: impl Into<String>, text: &str) -> Self {
        let trailing_newline = text.ends_with('\n');
        let body = text.strip_suffix('\n').unwrap_or(text);
        let lines = if text.is_empty() {
            Vec::new()
        } else {
            body.split('\n').map(str::to_owned).collect()
        };
        SourceUnit {
            id: id.into(),
            kind: UnitKind::Script,
            lines,
            cell_map: Vec::new(),
            trailing_newline,
            notebook: None,
        }
    }

    /// Parses notebook JSON and flattens its code cells.
    pub fn from_notebook(id: impl Into<String>, json: &str) -> Result<Self, IngestError> {
        let id = id.into();
        let malformed = |reason: String| IngestError::MalformedNotebook {
            path: id.clone(),
            reason,
        };
        let doc: Value = serde_json::from_str(json).map_err(|e| malformed(e.to_string()))?;
        let cells = doc
            .get("cells")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing top-level \"cells\" array".into()))?;

        let mut lines = Vec::new();
        let mut cell_map = Vec::new();
        for (cell_index, cell) in cells.iter().enumerate() {
            if cell.get("cell_type").and_then(Value::as_str) != Some("code") {
                continue;
            }
            let text = cell_source(cell)
                .ok_or_else(|| malformed(format!("cell {cell_index} has no readable source")))?;
            let cell_lines = split_cell(&text);
            if cell_lines.is_empty() {
                continue;
            }
            let first_line = lines.len() + 1;
            lines.extend(cell_lines);
            cell_map.push(CellRange {
                cell_index,
                first_line,
                last_line: lines.len(),
            });
        }

        Ok(SourceUnit {
            id,
            kind: UnitKind::Notebook,
            lines,
            cell_map,
            trailing_newline: false,
            notebook: Some(doc),
        })
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Text of a 1-based flat line.
    pub fn line(&self, flat_line: usize) -> Option<&str> {
        flat_line
            .checked_sub(1)
            .and_then(|i| self.lines.get(i))
            .map(String::as_str)
    }

    pub fn cell_map(&self) -> &[CellRange] {
        &self.cell_map
    }

    pub fn is_notebook(&self) -> bool {
        self.kind == UnitKind::Notebook
    }

    /// Maps a flat line to its position in the original document.
    pub fn map_line(&self, flat_line: usize) -> Result<LineLocation, OutOfRange> {
        let len = self.lines.len();
        if flat_line == 0 || flat_line > len {
            return Err(OutOfRange {
                line: flat_line,
                len,
            });
        }
        if self.kind == UnitKind::Script {
            return Ok(LineLocation::Script(flat_line));
        }
        let pos = self
            .cell_map
            .partition_point(|range| range.last_line < flat_line);
        let range = self.cell_map[pos];
        Ok(LineLocation::Cell {
            cell: range.cell_index,
            line: flat_line - range.first_line + 1,
        })
    }

    /// Index into `cell_map` of the range containing `flat_line`.
    pub(crate) fn cell_slot(&self, flat_line: usize) -> Option<usize> {
        let pos = self
            .cell_map
            .partition_point(|range| range.last_line < flat_line);
        self.cell_map
            .get(pos)
            .filter(|range| range.first_line <= flat_line)
            .map(|_| pos)
    }

    /// The flat text analyzed by the parser: every line followed by `\n`.
    pub fn flat_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Serializes the unit back to file contents.
    pub fn to_file_text(&self) -> String {
        match &self.notebook {
            None => {
                let mut out = self.lines.join("\n");
                if self.trailing_newline {
                    out.push('\n');
                }
                out
            }
            Some(doc) => {
                let mut out = to_notebook_json(doc);
                out.push('\n');
                out
            }
        }
    }

    /// Builds a unit of the same kind and identity with new content.
    ///
    /// `cells` assigns each new line to a slot of the current `cell_map`; it is
    /// ignored for scripts. Cells that end up with no lines are written back
    /// with an empty source.
    pub(crate) fn with_lines(&self, lines: Vec<String>, cells: &[usize]) -> SourceUnit {
        let Some(doc) = &self.notebook else {
            return SourceUnit {
                id: self.id.clone(),
                kind: self.kind,
                lines,
                cell_map: Vec::new(),
                trailing_newline: self.trailing_newline,
                notebook: None,
            };
        };

        let mut per_cell: Vec<Vec<String>> = vec![Vec::new(); self.cell_map.len()];
        for (line, &slot) in lines.into_iter().zip(cells) {
            per_cell[slot].push(line);
        }
        let mut doc = doc.clone();
        if let Some(cells) = doc.get_mut("cells").and_then(Value::as_array_mut) {
            for (range, cell_lines) in self.cell_map.iter().zip(&per_cell) {
                let original_lines = &self.lines[range.first_line - 1..range.last_line];
                if cell_lines.as_slice() == original_lines {
                    continue;
                }
                if let Some(cell) = cells.get_mut(range.cell_index) {
                    cell["source"] = source_array(cell_lines);
                }
            }
        }
        let json = to_notebook_json(&doc);
        // Re-flattening keeps cell_map consistent with the written document.
        SourceUnit::from_notebook(self.id.clone(), &json)
            .expect("re-serialized notebook always has a cells array")
    }
}

fn cell_source(cell: &Value) -> Option<String> {
    match cell.get("source")? {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => parts
            .iter()
            .map(|p| p.as_str())
            .collect::<Option<Vec<_>>>()
            .map(|parts| parts.concat()),
        _ => None,
    }
}

fn split_cell(text: &str) -> Vec<String> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n').map(str::to_owned).collect()
}

fn source_array(lines: &[String]) -> Value {
    let n = lines.len();
    Value::Array(
        lines
            .iter()
            .enumerate()
            .map(|(i, line)| {
                if i + 1 < n {
                    Value::String(format!("{line}\n"))
                } else {
                    Value::String(line.clone())
                }
            })
            .collect(),
    )
}

/// Jupyter writes notebooks with one-space indentation.
fn to_notebook_json(doc: &Value) -> String {
    use serde::Serialize;
    let mut buf = Vec::new();
    let formatter = serde_json::ser::PrettyFormatter::with_indent(b" ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    doc.serialize(&mut ser)
        .expect("serializing a JSON value cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Reads a file from disk. `.ipynb` files are parsed as notebooks, anything
/// else as a plain script.
pub fn load_unit(path: &Path) -> Result<SourceUnit, IngestError> {
    let id = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: id.clone(),
        source,
    })?;
    let text =
        String::from_utf8(bytes).map_err(|_| IngestError::InvalidUtf8 { path: id.clone() })?;
    if path.extension().and_then(|e| e.to_str()) == Some("ipynb") {
        SourceUnit::from_notebook(id, &text)
    } else {
        Ok(SourceUnit::from_script(id, &text))
    }
}

/// Whether `path` names a file the analyzer reads.
pub fn is_source_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("py" | "ipynb")
    )
}

/// Every `.py` and `.ipynb` file under `root`, in sorted path order. A file
/// path is returned as is.
pub fn discover_sources(root: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if !root.is_dir() {
        if !root.exists() {
            return Err(IngestError::Io {
                path: root.display().to_string(),
                source: std::io::Error::from(std::io::ErrorKind::NotFound),
            });
        }
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Io {
            path: e.path().unwrap_or(root).display().to_string(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && is_source_path(entry.path()) {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}
