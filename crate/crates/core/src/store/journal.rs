use std::fs::{self, OpenOptions};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalOp {
    Put,
    Transition,
    SnowIndex,
}

/// One committed mutation. `payload` is the full item after the change, or
/// the appended snow-index record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    pub op: JournalOp,
    pub id: String,
    pub payload: serde_json::Value,
}

/// Reads every complete entry. A final line without its newline, or one that
/// does not parse, is a torn write: it is truncated away. Corruption anywhere
/// else is an error.
pub(super) fn replay(path: &Path) -> Result<Vec<JournalEntry>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let (line, complete) = match rest.iter().position(|&b| b == b'\n') {
            Some(n) => (&rest[..n], true),
            None => (rest, false),
        };
        let parsed = serde_json::from_slice::<JournalEntry>(line);
        let last = offset + line.len() + usize::from(complete) >= bytes.len();
        match parsed {
            Ok(e) if complete => entries.push(e),
            Ok(_) | Err(_) if last => {
                log::warn!("truncating torn journal tail at line {line_no}");
                OpenOptions::new().write(true).open(path)?.set_len(offset as u64)?;
                break;
            }
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => return Err(StoreError::Corrupt { line: line_no, message: e.to_string() }),
        }
        offset += line.len() + 1;
    }
    Ok(entries)
}
