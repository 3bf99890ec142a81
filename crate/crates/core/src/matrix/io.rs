//! Matrix files.
//!
//! Binary layout (`TASD1`): the 8-byte magic `TASDMAT1`, then `rows` and
//! `cols` as little-endian `u64`, then `rows * cols` little-endian IEEE-754
//! `f64` values in row-major order. Files ending in `.csv` are read as
//! comma-separated decimal rows of uniform width.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DenseMatrix;
use crate::error::{Result, TasdError};

pub const MAGIC: &[u8; 8] = b"TASDMAT1";

/// Loads a TASD1 file, or a CSV file when the extension is `.csv`.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    if has_csv_extension(path) {
        return load_csv(path);
    }
    let file = File::open(path).map_err(|e| TasdError::io(path, e))?;
    read_tasd1(BufReader::new(file), path)
}

pub fn save_matrix(mat: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| TasdError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tasd1(mat, &mut w).map_err(|e| TasdError::io(path, e))?;
    w.flush().map_err(|e| TasdError::io(path, e))
}

pub fn write_tasd1(mat: &DenseMatrix, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(mat.rows() as u64).to_le_bytes())?;
    w.write_all(&(mat.cols() as u64).to_le_bytes())?;
    for v in mat.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tasd1(mut r: impl Read, path: &Path) -> Result<DenseMatrix> {
    let bad_header = |reason: &str| TasdError::BadHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut magic = [0u8; 8];
    read_full(&mut r, &mut magic, path)?
        .then_some(())
        .ok_or_else(|| bad_header("truncated magic"))?;
    if &magic != MAGIC {
        return Err(TasdError::BadMagic(path.to_path_buf()));
    }
    let mut dims = [0u8; 16];
    read_full(&mut r, &mut dims, path)?
        .then_some(())
        .ok_or_else(|| bad_header("truncated dimensions"))?;
    let rows = u64::from_le_bytes(dims[..8].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(dims[8..].try_into().expect("8 bytes"));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| bad_header("dimensions overflow"))?;
    let mut bytes = Vec::new();
    r.take(count as u64 * 8 + 1)
        .read_to_end(&mut bytes)
        .map_err(|e| TasdError::io(path, e))?;
    if bytes.len() != count * 8 {
        return Err(bad_header(&format!(
            "payload holds {} bytes, header declares {}",
            bytes.len(),
            count * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseMatrix::new(rows as usize, cols as usize, data)
}

/// Fills `buf`; `Ok(false)` on premature EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<bool> {
    match r.read_exact(buf) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(TasdError::io(path, e)),
    }
}

fn has_csv_extension(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| TasdError::io(path, e))?;
    parse_csv(BufReader::new(file))
}

/// Parses headerless comma-separated rows of uniform width.
pub fn parse_csv(r: impl Read) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| TasdError::Csv(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(TasdError::Csv(format!(
                    "row {rows} has {} fields, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| TasdError::Csv(format!("row {rows}: cannot parse {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    DenseMatrix::new(rows, cols.unwrap_or(0), data)
}
