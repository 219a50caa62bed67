//! Probe checkpoints: PRBE f64 sections in W1, b1, W2, b2, W, b order
//! (W and b only for a probe without the MLP block). Vectors are stored as
//! single-row sections. The activation is not part of the file.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{Activation, LinearHead, MlpBlock, ProbeParams};
use crate::dataio::prbe::{self, Section};
use crate::error::{Error, Result};

fn matrix(m: &Array2<f64>, layer: u16) -> Section {
    Section {
        rows: m.nrows(),
        cols: m.ncols(),
        layer,
        values: m.iter().copied().collect(),
    }
}

fn vector(v: &Array1<f64>, layer: u16) -> Section {
    Section {
        rows: 1,
        cols: v.len(),
        layer,
        values: v.to_vec(),
    }
}

pub fn encode_checkpoint(params: &ProbeParams, layer: u16) -> Result<Vec<u8>> {
    let mut sections = Vec::with_capacity(6);
    if let Some(m) = &params.mlp {
        sections.push(matrix(&m.w1, layer));
        sections.push(vector(&m.b1, layer));
        sections.push(matrix(&m.w2, layer));
        sections.push(vector(&m.b2, layer));
    }
    sections.push(matrix(&params.head.w, layer));
    sections.push(vector(&params.head.b, layer));
    prbe::encode_sections(&sections)
}

/// Rebuilds parameters from checkpoint bytes; returns them with the layer
/// recorded in the sections.
pub fn decode_checkpoint(bytes: &[u8], activation: Activation) -> Result<(ProbeParams, u16)> {
    let sections = prbe::decode_sections(bytes)?;
    let bad = |msg: &str| Error::InvalidMatrix(format!("checkpoint: {msg}"));
    let layer = sections
        .first()
        .map(|s| s.layer)
        .ok_or_else(|| bad("no sections"))?;
    let to_matrix = |s: &Section| {
        Array2::from_shape_vec((s.rows, s.cols), s.values.clone())
            .map_err(|_| bad("bad matrix shape"))
    };
    let to_vector = |s: &Section| {
        if s.rows != 1 {
            return Err(bad("bias section must be a single row"));
        }
        Ok(Array1::from(s.values.clone()))
    };
    let params = match sections.as_slice() {
        [w, b] => ProbeParams {
            mlp: None,
            head: LinearHead {
                w: to_matrix(w)?,
                b: to_vector(b)?,
            },
        },
        [w1, b1, w2, b2, w, b] => ProbeParams {
            mlp: Some(MlpBlock {
                w1: to_matrix(w1)?,
                b1: to_vector(b1)?,
                w2: to_matrix(w2)?,
                b2: to_vector(b2)?,
                activation,
            }),
            head: LinearHead {
                w: to_matrix(w)?,
                b: to_vector(b)?,
            },
        },
        other => {
            return Err(bad(&format!(
                "expected 2 or 6 sections, found {}",
                other.len()
            )))
        }
    };
    params.validate()?;
    Ok((params, layer))
}

pub fn save_checkpoint(params: &ProbeParams, layer: u16, path: &Path) -> Result<()> {
    prbe::write_atomic(path, &encode_checkpoint(params, layer)?)
}

pub fn load_checkpoint(path: &Path, activation: Activation) -> Result<(ProbeParams, u16)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, activation)
}
