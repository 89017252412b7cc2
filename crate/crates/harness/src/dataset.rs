//! FCPD v1: paired input/output fields on one grid.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "FCPD"            4 bytes
//! version = 1       u32
//! ndim              u8
//! cell counts       ndim × u64
//! grid kind         u8   (0 uniform, 1 center, 2 boundary, 3 explicit)
//! [explicit only]   per axis, N_k + 1 edges as f64
//! sample count      u64
//! samples           per sample: input then output, d f64 each, row-major
//! ```

use std::path::Path;

use fcp_core::{FcpError, Field, Grid, GridKind};

use crate::binary::{Reader, Writer};
use crate::error::{io_err, HarnessError, Result, StageExt};

pub const MAGIC: &[u8; 4] = b"FCPD";
pub const VERSION: u32 = 1;

/// Grid plus `(input, output)` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub grid: Grid,
    pub samples: Vec<(Field, Field)>,
}

pub fn encode_dataset(grid: &Grid, samples: &[(Field, Field)]) -> Result<Vec<u8>> {
    for (i, (x, y)) in samples.iter().enumerate() {
        if !x.grid().same_as(grid) || !y.grid().same_as(grid) {
            return Err(FcpError::InvalidArgument(format!(
                "sample {i} is not on the dataset grid"
            )))
            .stage("encode dataset");
        }
    }
    let ndim = u8::try_from(grid.dim())
        .map_err(|_| FcpError::InvalidArgument("too many dimensions".into()))
        .stage("encode dataset")?;
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(ndim);
    for &n in grid.shape() {
        w.u64(n as u64);
    }
    w.u8(grid.kind().code());
    if grid.kind() == GridKind::Explicit {
        for axis in 0..grid.dim() {
            w.f64s(grid.edges(axis));
        }
    }
    w.u64(samples.len() as u64);
    w.buf.reserve(samples.len() * 16 * grid.len());
    for (x, y) in samples {
        w.f64s(x.values());
        w.f64s(y.values());
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, VERSION)?;
    let ndim = r.u8("ndim")? as usize;
    if ndim == 0 {
        return Err(HarnessError::Format {
            offset: r.pos() - 1,
            message: "ndim must be at least 1".into(),
        });
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let at = r.pos();
        let n = r.usize("cell count")?;
        if n == 0 {
            return Err(HarnessError::Format {
                offset: at,
                message: "cell count must be at least 1".into(),
            });
        }
        shape.push(n);
    }
    let at = r.pos();
    let code = r.u8("grid kind")?;
    let kind = GridKind::from_code(code).ok_or(HarnessError::Format {
        offset: at,
        message: format!("unknown grid kind {code}"),
    })?;
    let at = r.pos();
    let grid = if kind == GridKind::Explicit {
        let mut edges = Vec::with_capacity(ndim);
        for &n in &shape {
            edges.push(r.f64s(n + 1, "grid edges")?);
        }
        Grid::explicit(edges)
    } else {
        Grid::new(kind, &shape)
    }
    .map_err(|e| HarnessError::Format {
        offset: at,
        message: e.to_string(),
    })?;
    let count = r.usize("sample count")?;
    let d = grid.len();
    let header = r.pos() as u128;
    let expected = header + count as u128 * 16 * d as u128;
    if expected != bytes.len() as u128 {
        return Err(HarnessError::Format {
            offset: bytes.len() as u64,
            message: format!(
                "length mismatch: header implies {expected} bytes, file has {}",
                bytes.len()
            ),
        });
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let mut pair = [None, None];
        for (slot, what) in pair.iter_mut().zip(["input", "output"]) {
            let at = r.pos();
            let vals = r.f64s(d, what)?;
            *slot = Some(Field::new(grid.clone(), vals).map_err(|e| HarnessError::Format {
                offset: at,
                message: format!("sample {i} {what}: {e}"),
            })?);
        }
        let [x, y] = pair;
        samples.push((x.expect("set"), y.expect("set")));
    }
    r.finish()?;
    Ok(Dataset { grid, samples })
}

pub fn write_dataset(path: &Path, grid: &Grid, samples: &[(Field, Field)]) -> Result<()> {
    let bytes = encode_dataset(grid, samples)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: &Grid, s: f64) -> (Field, Field) {
        let x: Vec<f64> = (0..grid.len()).map(|i| s * (i as f64).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v - 0.1).collect();
        (
            Field::new(grid.clone(), x).unwrap(),
            Field::new(grid.clone(), y).unwrap(),
        )
    }

    #[test]
    fn header_layout() {
        let g = Grid::uniform(&[3, 2]).unwrap();
        let bytes = encode_dataset(&g, &[sample(&g, 1.0)]).unwrap();
        assert_eq!(&bytes[..4], b"FCPD");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 2);
        assert_eq!(&bytes[9..17], &3u64.to_le_bytes());
        assert_eq!(&bytes[17..25], &2u64.to_le_bytes());
        assert_eq!(bytes[25], 0);
        assert_eq!(&bytes[26..34], &1u64.to_le_bytes());
        assert_eq!(bytes.len(), 34 + 2 * 6 * 8);
    }

    #[test]
    fn rejects_bad_headers() {
        let g = Grid::uniform(&[4]).unwrap();
        let good = encode_dataset(&g, &[sample(&g, 1.0)]).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_dataset(&bad),
            Err(HarnessError::Format { offset: 0, .. })
        ));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_dataset(&bad),
            Err(HarnessError::Format { offset: 4, .. })
        ));
        let mut bad = good.clone();
        bad[17] = 9;
        assert!(matches!(
            decode_dataset(&bad),
            Err(HarnessError::Format { offset: 17, .. })
        ));
        let mut long = good;
        long.push(0);
        assert!(decode_dataset(&long).is_err());
    }

    #[test]
    fn rejects_foreign_grid() {
        let g = Grid::uniform(&[4]).unwrap();
        let h = Grid::uniform(&[5]).unwrap();
        assert!(encode_dataset(&g, &[sample(&h, 1.0)]).is_err());
    }
}
