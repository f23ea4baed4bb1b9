//! Buffered, all-or-nothing result files. Every file starts with a comment
//! line naming the tool version, configuration hash and master seed.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn header_line(hash: &str, seed: u64) -> String {
    format!("# focusim {VERSION} config_hash={hash} seed={seed}\n")
}

/// One CSV table. Numbers are written with the shortest representation
/// that parses back to the same value.
#[derive(Debug)]
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    rows: usize,
}

/// A single CSV cell.
pub enum Cell<'a> {
    Num(f64),
    Int(u64),
    Text(&'a str),
    Empty,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Table { writer, rows: 0 }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        let fields: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Num(v) => format!("{v}"),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => (*s).to_string(),
                Cell::Empty => String::new(),
            })
            .collect();
        self.writer.write_record(&fields).expect("in-memory write");
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

/// Files collected during a command and written only once it succeeds.
#[derive(Debug)]
pub struct Outputs {
    header: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(hash: &str, seed: u64) -> Self {
        Outputs {
            header: header_line(hash, seed),
            files: Vec::new(),
        }
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn add_text(&mut self, name: &str, body: &str) {
        let mut bytes = self.header.clone().into_bytes();
        bytes.extend_from_slice(body.as_bytes());
        if !body.ends_with('\n') {
            bytes.push(b'\n');
        }
        self.files.push((name.to_string(), bytes));
    }

    /// Adds a CSV file; a table without data rows is an `EMPTY_RESULTS`
    /// error.
    pub fn add_table(&mut self, name: &str, table: Table) -> Result<(), CliError> {
        if table.rows() == 0 {
            return Err(CliError::EmptyResults(name.to_string()));
        }
        let mut bytes = self.header.clone().into_bytes();
        bytes.extend(table.into_bytes());
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// File names and contents in the order they were added.
    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    /// Writes every file through a temporary sibling and a rename.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, &bytes).map_err(|e| io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.row(&[Cell::Num(0.1 + 0.2), Cell::Empty, Cell::Text("x")]);
        let text = String::from_utf8(t.into_bytes()).unwrap();
        assert_eq!(text, "a,b,c\n0.30000000000000004,,x\n");
    }

    #[test]
    fn empty_table_is_rejected() {
        let mut out = Outputs::new("0123456789abcdef", 1);
        let e = out.add_table("x.csv", Table::new(&["a"])).unwrap_err();
        assert_eq!(e.code(), "EMPTY_RESULTS");
    }

    #[test]
    fn files_carry_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(&config_hash("{}"), 7);
        out.add_text("r.txt", "hello");
        let paths = out.commit(dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("# focusim "));
        assert!(text.contains(" seed=7\nhello\n"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
