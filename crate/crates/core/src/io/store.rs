//! JSON-lines case files: one case record per line.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ExecutionCase;

/// A line rejected at ingestion. Lines are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub cases: Vec<ExecutionCase>,
    pub skipped: Vec<SkippedLine>,
}

/// One accepted record and where its line starts.
struct Entry {
    offset: u64,
    case: ExecutionCase,
}

/// Reads every line, keeping well-formed records with unseen ids. Blank
/// lines are ignored.
fn scan<R: BufRead>(mut reader: R) -> Result<(Vec<Entry>, Vec<SkippedLine>)> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeMap::new();
    let mut offset = 0u64;
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let start = offset;
        offset += n as u64;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim(),
            Err(e) => {
                skipped.push(SkippedLine {
                    line: line_no,
                    reason: format!("not UTF-8: {e}"),
                });
                continue;
            }
        };
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<ExecutionCase>(text) {
            Ok(case) => {
                if let Some(first) = seen.insert(case.id.clone(), line_no) {
                    seen.insert(case.id.clone(), first);
                    skipped.push(SkippedLine {
                        line: line_no,
                        reason: format!("duplicate id `{}` (first on line {first})", case.id),
                    });
                } else {
                    entries.push(Entry { offset: start, case });
                }
            }
            Err(e) => skipped.push(SkippedLine {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok((entries, skipped))
}

/// Parses a JSONL stream, skipping malformed or duplicate records.
pub fn read_cases<R: Read>(reader: R) -> Result<LoadReport> {
    let (entries, skipped) = scan(BufReader::new(reader))?;
    Ok(LoadReport {
        cases: entries.into_iter().map(|e| e.case).collect(),
        skipped,
    })
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<LoadReport> {
    read_cases(File::open(path)?)
}

pub fn write_cases<W: Write>(mut writer: W, cases: &[ExecutionCase]) -> Result<()> {
    for case in cases {
        serde_json::to_writer(&mut writer, case)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_cases(path: impl AsRef<Path>, cases: &[ExecutionCase]) -> Result<()> {
    write_cases(BufWriter::new(File::create(path)?), cases)
}

/// An indexed case file: ids map to line offsets so single cases can be read
/// back without loading the whole file.
#[derive(Debug)]
pub struct CaseStore {
    path: PathBuf,
    index: BTreeMap<String, u64>,
}

impl CaseStore {
    /// Opens (or creates) a store, returning the lines that were skipped.
    pub fn open(path: impl Into<PathBuf>) -> Result<(CaseStore, Vec<SkippedLine>)> {
        let path = path.into();
        let file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let (entries, skipped) = scan(BufReader::new(file))?;
        let index = entries.into_iter().map(|e| (e.case.id, e.offset)).collect();
        Ok((CaseStore { path, index }, skipped))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Result<Option<ExecutionCase>> {
        let Some(&offset) = self.index.get(id) else {
            return Ok(None);
        };
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(offset))?;
        let mut line = String::new();
        BufReader::new(file).read_line(&mut line)?;
        Ok(Some(serde_json::from_str(line.trim())?))
    }

    /// Appends a case; ids must stay unique.
    pub fn append(&mut self, case: &ExecutionCase) -> Result<()> {
        if self.index.contains_key(&case.id) {
            return Err(Error::Config(format!("duplicate case id `{}`", case.id)));
        }
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        let mut offset = file.seek(SeekFrom::End(0))?;
        if offset > 0 {
            let mut last = [0u8; 1];
            let mut reader = File::open(&self.path)?;
            reader.seek(SeekFrom::Start(offset - 1))?;
            reader.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
                offset += 1;
            }
        }
        let mut line = serde_json::to_vec(case)?;
        line.push(b'\n');
        file.write_all(&line)?;
        self.index.insert(case.id.clone(), offset);
        Ok(())
    }
}
