//! The FMX matrix container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FMX1" | rows: u32 | cols: u32 | dtype: u8 | payload (rows * cols elements, row-major)
//! ```
//!
//! dtype codes: `0` = f32, `1` = u8, `2` = u32 (class indices).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FMX1";
const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    U8 = 1,
    U32 = 2,
}

impl Dtype {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::U8),
            2 => Ok(Dtype::U32),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 | Dtype::U32 => 4,
            Dtype::U8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::U8 => "u8",
            Dtype::U32 => "u32",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
    U32(Vec<u32>),
}

impl Payload {
    pub fn dtype(&self) -> Dtype {
        match self {
            Payload::F32(_) => Dtype::F32,
            Payload::U8(_) => Dtype::U8,
            Payload::U32(_) => Dtype::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::U8(v) => v.len(),
            Payload::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A raw, untyped-by-role FMX matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FmxMatrix {
    pub rows: usize,
    pub cols: usize,
    pub payload: Payload,
}

impl FmxMatrix {
    pub fn new(rows: usize, cols: usize, payload: Payload) -> Result<Self> {
        if rows.checked_mul(cols) != Some(payload.len()) {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix with {} elements",
                payload.len()
            )));
        }
        if rows > u32::MAX as usize || cols > u32::MAX as usize {
            return Err(Error::Shape(format!("{rows}x{cols} exceeds u32 dims")));
        }
        Ok(FmxMatrix {
            rows,
            cols,
            payload,
        })
    }

    pub fn dtype(&self) -> Dtype {
        self.payload.dtype()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() * self.dtype().width());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.push(self.dtype() as u8);
        match &self.payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => out.extend_from_slice(v),
            Payload::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dtype = Dtype::from_code(bytes[12])?;
        let body = &bytes[HEADER_LEN..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(dtype.width()))
            .ok_or_else(|| Error::Shape(format!("{rows}x{cols} overflows")))?;
        if body.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: body.len(),
            });
        }
        if body.len() > expected {
            return Err(Error::TrailingBytes {
                extra: body.len() - expected,
            });
        }
        let payload = match dtype {
            Dtype::F32 => Payload::F32(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => Payload::U8(body.to_vec()),
            Dtype::U32 => Payload::U32(
                body.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(FmxMatrix {
            rows,
            cols,
            payload,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Reads either an FMX file or, for a `.csv` extension, a headerless numeric CSV
    /// converted to the requested dtype.
    pub fn read_any(path: impl AsRef<Path>, csv_dtype: Dtype) -> Result<Self> {
        let path = path.as_ref();
        let is_csv = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("csv"))
            .unwrap_or(false);
        if is_csv {
            read_csv(path, csv_dtype)
        } else {
            Self::read(path)
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn read_csv(path: &Path, dtype: Dtype) -> Result<FmxMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Shape(format!("{other:?}")),
        })?;
    let mut rows = 0usize;
    let mut cols = None;
    let mut values: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Shape(format!(
                    "csv row {rows} has {} fields, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Shape(format!("csv row {rows}: not a number: {field:?}")))?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    let payload = match dtype {
        Dtype::F32 => Payload::F32(values.iter().map(|&v| v as f32).collect()),
        Dtype::U8 => Payload::U8(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| integral(v, u8::MAX as f64, i, cols).map(|v| v as u8))
                .collect::<Result<_>>()?,
        ),
        Dtype::U32 => Payload::U32(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| integral(v, u32::MAX as f64, i, cols).map(|v| v as u32))
                .collect::<Result<_>>()?,
        ),
    };
    FmxMatrix::new(rows, cols, payload)
}

fn integral(v: f64, max: f64, index: usize, cols: usize) -> Result<f64> {
    if v.fract() != 0.0 || v < 0.0 || v > max {
        let (row, col) = (index / cols.max(1), index % cols.max(1));
        return Err(Error::Shape(format!(
            "csv value {v} at row {row}, col {col} is not a valid integer"
        )));
    }
    Ok(v)
}
