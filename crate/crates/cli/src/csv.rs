//! Byte-stable CSV emission: header row included by the caller, '.'
//! decimal (Rust float formatting), ',' separators, LF line endings.

use std::path::Path;

use crate::config::CliError;

pub fn write_rows(path: &Path, rows: &[String]) -> Result<(), CliError> {
    let mut text = rows.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io)
}
