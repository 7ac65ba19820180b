//! Numeric matrix files.
//!
//! Two encodings are accepted:
//! - CSV: rows of decimal reals, optionally preceded by a header row.
//! - Binary: the magic `VNDM1\0`, then `rows` and `cols` as little-endian
//!   `u64`, then `rows * cols` little-endian `f64` values in row-major order.
//!
//! Readers detect the binary form from its magic bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 6] = b"VNDM1\0";
const HEADER_LEN: usize = MAGIC.len() + 16;

/// A matrix together with its column names, when the source had a header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Malformed(format!("cannot read {}: {e}", path.display())))?;
    if bytes.starts_with(MAGIC) {
        Ok(Table { header: None, data: decode_binary(&bytes)? })
    } else {
        parse_csv(&bytes)
    }
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    Ok(read_table(path)?.data)
}

pub fn encode_binary(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> CliResult<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN || !bytes.starts_with(MAGIC) {
        return Err(CliError::Malformed("truncated binary matrix header".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (word(MAGIC.len()), word(MAGIC.len() + 8));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| CliError::Malformed(format!("declared size {rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(CliError::Malformed(format!(
            "declared {rows}x{cols} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    Ok(DMatrix::from_row_iterator(rows, cols, values))
}

pub fn parse_csv(bytes: &[u8]) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Malformed(e.to_string()))?;
        if let Some(col) = record.iter().position(str::is_empty) {
            return Err(CliError::Malformed(format!("missing value on line {} column {}", line + 1, col + 1)));
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                    return Err(CliError::Malformed(format!(
                        "non-finite value on line {} column {}",
                        line + 1,
                        col + 1
                    )));
                }
                rows.push(values);
            }
            Err(_) if line == 0 => header = Some(record.iter().map(str::to_string).collect()),
            Err(_) => {
                let col = record.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0);
                return Err(CliError::Malformed(format!(
                    "cannot parse '{}' on line {} column {}",
                    &record[col],
                    line + 1,
                    col + 1
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Malformed("no numeric rows".into()));
    }
    let cols = rows[0].len();
    let data = DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten());
    Ok(Table { header, data })
}

/// CSV with shortest round-trip decimal formatting.
pub fn encode_csv(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
