//! JSON Lines helpers.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses one value per non-blank line; errors carry the 1-based line number.
pub fn read_lines<R: BufRead, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_lines<W: Write, T: Serialize>(mut out: W, values: &[T]) -> Result<()> {
    for v in values {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &std::path::Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    read_lines(std::io::BufReader::new(file)).map_err(|e| Error::load(path, e.to_string()))
}
