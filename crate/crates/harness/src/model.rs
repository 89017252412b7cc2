//! FCPM v1: serialized surrogate models.
//!
//! ```text
//! "FCPM"            4 bytes
//! version = 1       u32
//! kind              u8   (0 spectral operator, 1 quantile triplet)
//! [triplet only]    q_lo f64, q_hi f64, then three operator blocks (lo, mid, hi)
//! [operator only]   one operator block
//!
//! operator block:   dim u8, basis u8, modes u64, ridge f64, train_residual f64,
//!                   rows u64, cols u64, rows × cols f64 (row-major)
//! ```

use std::path::Path;

use fcp_core::surrogate::{Basis, SpectralOperator, TripletPredictor};

use crate::binary::{Reader, Writer};
use crate::error::{io_err, HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"FCPM";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Operator(SpectralOperator),
    Triplet(TripletPredictor),
}

impl Model {
    /// The point predictor (the middle head of a triplet).
    pub fn operator(&self) -> &SpectralOperator {
        match self {
            Model::Operator(op) => op,
            Model::Triplet(t) => &t.mid,
        }
    }
}

fn put_operator(w: &mut Writer, op: &SpectralOperator) {
    w.u8(op.dim() as u8);
    w.u8(op.basis().code());
    w.u64(op.modes() as u64);
    w.f64(op.ridge());
    w.f64(op.train_residual());
    w.u64(op.n_outputs() as u64);
    w.u64(op.n_features() as u64);
    w.f64s(&op.coefficients());
}

fn get_operator(r: &mut Reader) -> Result<SpectralOperator> {
    let start = r.pos();
    let dim = r.u8("dim")? as usize;
    let at = r.pos();
    let code = r.u8("basis")?;
    let basis = Basis::from_code(code).ok_or(HarnessError::Format {
        offset: at,
        message: format!("unknown basis {code}"),
    })?;
    let modes = r.usize("modes")?;
    let ridge = r.f64("ridge")?;
    let residual = r.f64("train residual")?;
    let rows = r.usize("rows")?;
    let cols = r.usize("cols")?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| r.error("coefficient count overflows"))?;
    let weights = r.f64s(n, "coefficients")?;
    SpectralOperator::from_parts(dim, basis, modes, ridge, weights, residual).map_err(|e| HarnessError::Format {
        offset: start,
        message: e.to_string(),
    })
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    match model {
        Model::Operator(op) => {
            w.u8(0);
            put_operator(&mut w, op);
        }
        Model::Triplet(t) => {
            w.u8(1);
            w.f64(t.q_lo);
            w.f64(t.q_hi);
            for op in [&t.lo, &t.mid, &t.hi] {
                put_operator(&mut w, op);
            }
        }
    }
    w.buf
}

/// Decodes a model. Triplet training histories are not stored.
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, VERSION)?;
    let at = r.pos();
    let model = match r.u8("model kind")? {
        0 => Model::Operator(get_operator(&mut r)?),
        1 => {
            let q_lo = r.f64("q_lo")?;
            let q_hi = r.f64("q_hi")?;
            let lo = get_operator(&mut r)?;
            let mid = get_operator(&mut r)?;
            let hi = get_operator(&mut r)?;
            Model::Triplet(
                TripletPredictor::from_heads(lo, mid, hi, q_lo, q_hi).map_err(|e| HarnessError::Format {
                    offset: at,
                    message: e.to_string(),
                })?,
            )
        }
        k => {
            return Err(HarnessError::Format {
                offset: at,
                message: format!("unknown model kind {k}"),
            })
        }
    };
    r.finish()?;
    Ok(model)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(io_err(path))
}

pub fn read_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(seed: f64) -> SpectralOperator {
        let q = Basis::Cosine.size(3);
        let w: Vec<f64> = (0..q * (q + 1)).map(|i| seed * (i as f64 * 0.37).cos()).collect();
        SpectralOperator::from_parts(1, Basis::Cosine, 3, 1e-6, w, 0.125).unwrap()
    }

    #[test]
    fn operator_round_trip() {
        let m = Model::Operator(op(1.0));
        assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
    }

    #[test]
    fn triplet_round_trip() {
        let t = TripletPredictor::from_heads(op(0.5), op(1.0), op(1.5), 0.05, 0.95).unwrap();
        let m = Model::Triplet(t);
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.operator(), &op(1.0));
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = encode_model(&Model::Operator(op(1.0)));
        let err = decode_model(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        assert!(decode_model(b"FCPD\x01\0\0\0").is_err());
    }
}
