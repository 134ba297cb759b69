//! Plain-text corpus helpers. Input is assumed to be tokenized already, so
//! tokenization is a whitespace split.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

pub fn tokenize(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

/// Reads a UTF-8 file as lines, reporting the line number of bad input.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, raw) in BufReader::new(file).split(b'\n').enumerate() {
        let raw = raw.map_err(|e| Error::io(path, e))?;
        let mut line = String::from_utf8(raw).map_err(|_| Error::format(path, i + 1, "invalid UTF-8"))?;
        if line.ends_with('\r') {
            line.pop();
        }
        lines.push(line);
    }
    Ok(lines)
}

/// Reads one whitespace-tokenized sentence per line.
pub fn read_sentences(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    Ok(read_lines(path)?
        .iter()
        .map(|l| tokenize(l).into_iter().map(str::to_owned).collect())
        .collect())
}
