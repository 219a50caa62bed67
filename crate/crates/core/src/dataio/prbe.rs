//! PRBE v1: a flat little-endian container for row-major matrices.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PRBE"
//!      4     4  u32 version (= 1)
//!      8     4  u32 n_rows
//!     12     4  u32 dim
//!     16     2  u16 dtype (1 = f32, 2 = f64)
//!     18     2  u16 layer index
//!     20     .  n_rows * dim values, row-major
//! ```
//!
//! Embedding files hold exactly one f32 section. Probe checkpoints hold a
//! sequence of f64 sections back to back.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PRBE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const DTYPE_F32: u16 = 1;
pub const DTYPE_F64: u16 = 2;

/// Per-sentence representations for one (task, split, layer).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_rows: usize,
    dim: usize,
    layer: u16,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major values, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(n_rows: usize, dim: usize, layer: u16, values: Vec<f32>) -> Result<Self> {
        if n_rows == 0 || dim == 0 {
            return Err(Error::InvalidMatrix(format!(
                "shape {n_rows}x{dim} must be non-empty"
            )));
        }
        if n_rows > u32::MAX as usize || dim > u32::MAX as usize {
            return Err(Error::InvalidMatrix(format!(
                "shape {n_rows}x{dim} exceeds the u32 header range"
            )));
        }
        if values.len() != n_rows * dim {
            return Err(Error::InvalidMatrix(format!(
                "{} values for shape {n_rows}x{dim}",
                values.len()
            )));
        }
        check_finite(&values, dim, |v| v.is_finite())?;
        Ok(Self {
            n_rows,
            dim,
            layer,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], layer: u16) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), dim, layer, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer(&self) -> u16 {
        self.layer
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }

    /// Row-concatenation of several matrices sharing `dim`.
    pub fn concat(parts: &[&EmbeddingMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or(Error::Empty("no matrices to concatenate"))?;
        let mut values = Vec::new();
        for m in parts {
            if m.dim != first.dim {
                return Err(Error::DimMismatch {
                    expected: first.dim,
                    got: m.dim,
                    context: "concatenated embeddings",
                });
            }
            values.extend_from_slice(&m.values);
        }
        Self::new(values.len() / first.dim, first.dim, first.layer, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        put_header(&mut out, self.n_rows, self.dim, DTYPE_F32, self.layer);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = Header::parse(bytes)?;
        if header.dtype != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(header.dtype));
        }
        let payload = header.payload(bytes)?;
        if payload.len() != bytes.len() - HEADER_LEN {
            return Err(Error::InvalidMatrix(format!(
                "{} trailing bytes after payload",
                bytes.len() - HEADER_LEN - payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(header.n_rows, header.dim, header.layer, values)
    }
}

/// Fixed-size header shared by every PRBE section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n_rows: usize,
    pub dim: usize,
    pub dtype: u16,
    pub layer: u16,
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let u32_at =
            |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dtype = u16_at(16);
        if dtype != DTYPE_F32 && dtype != DTYPE_F64 {
            return Err(Error::UnsupportedDtype(dtype));
        }
        Ok(Self {
            n_rows: u32_at(8) as usize,
            dim: u32_at(12) as usize,
            dtype,
            layer: u16_at(18),
        })
    }

    fn elem_size(&self) -> usize {
        if self.dtype == DTYPE_F64 {
            8
        } else {
            4
        }
    }

    pub fn payload_len(&self) -> usize {
        self.n_rows * self.dim * self.elem_size()
    }

    fn payload<'a>(&self, bytes: &'a [u8]) -> Result<&'a [u8]> {
        let expected = self.payload_len();
        let found = bytes.len() - HEADER_LEN;
        if found < expected {
            return Err(Error::Truncated { expected, found });
        }
        Ok(&bytes[HEADER_LEN..HEADER_LEN + expected])
    }
}

/// Reads only the header of a PRBE file.
pub fn read_header(path: &Path) -> Result<Header> {
    let mut buf = [0u8; HEADER_LEN];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let n = read_up_to(&mut f, &mut buf).map_err(|e| Error::io(path, e))?;
    Header::parse(&buf[..n])
}

fn read_up_to(r: &mut impl std::io::Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    write_atomic(path, &matrix.to_bytes())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

/// One f64 matrix inside a multi-section checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub rows: usize,
    pub cols: usize,
    pub layer: u16,
    pub values: Vec<f64>,
}

pub fn encode_sections(sections: &[Section]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for s in sections {
        if s.values.len() != s.rows * s.cols {
            return Err(Error::InvalidMatrix(format!(
                "section holds {} values for shape {}x{}",
                s.values.len(),
                s.rows,
                s.cols
            )));
        }
        check_finite(&s.values, s.cols.max(1), |v| v.is_finite())?;
        put_header(&mut out, s.rows, s.cols, DTYPE_F64, s.layer);
        for v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_sections(mut bytes: &[u8]) -> Result<Vec<Section>> {
    let mut sections = Vec::new();
    while !bytes.is_empty() {
        let header = Header::parse(bytes)?;
        if header.dtype != DTYPE_F64 {
            return Err(Error::UnsupportedDtype(header.dtype));
        }
        let payload = header.payload(bytes)?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect::<Vec<_>>();
        check_finite(&values, header.dim.max(1), |v| v.is_finite())?;
        sections.push(Section {
            rows: header.n_rows,
            cols: header.dim,
            layer: header.layer,
            values,
        });
        bytes = &bytes[HEADER_LEN + header.payload_len()..];
    }
    Ok(sections)
}

fn put_header(out: &mut Vec<u8>, n_rows: usize, dim: usize, dtype: u16, layer: u16) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n_rows as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&dtype.to_le_bytes());
    out.extend_from_slice(&layer.to_le_bytes());
}

fn check_finite<T: Copy>(values: &[T], dim: usize, finite: impl Fn(T) -> bool) -> Result<()> {
    match values.iter().position(|&v| !finite(v)) {
        Some(i) => Err(Error::NonFinite {
            row: i / dim,
            col: i % dim,
        }),
        None => Ok(()),
    }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
