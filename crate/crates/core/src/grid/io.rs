//! Portable grid files.
//!
//! ```text
//! SGRID v1 <ndim> <extent>... <spacing>... <dtype>\n<payload>
//! ```
//!
//! `dtype` is one of `f32`, `f64`, `u8`; the payload is the row-major values
//! in little-endian byte order with nothing after it. Spacings are printed in
//! shortest round-trip decimal form so a write/read cycle is bit-exact.
//! `u8` payloads decode to a [`BinaryMask`], float payloads to a
//! [`ScalarGrid`].

use std::fs;
use std::path::Path;

use super::{BinaryMask, Geometry, ScalarGrid};
use crate::{Error, Result};

const MAGIC: &str = "SGRID";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::U8 => "u8",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            "u8" => Ok(Dtype::U8),
            other => Err(Error::Format(format!("unknown dtype {other:?}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Scalar(ScalarGrid),
    Mask(BinaryMask),
}

impl GridData {
    pub fn geometry(&self) -> &Geometry {
        match self {
            GridData::Scalar(g) => g.geometry(),
            GridData::Mask(m) => m.geometry(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarGrid> {
        match self {
            GridData::Scalar(g) => Ok(g),
            GridData::Mask(_) => Err(Error::Format("expected a float grid, found u8".into())),
        }
    }

    pub fn into_mask(self) -> Result<BinaryMask> {
        match self {
            GridData::Mask(m) => Ok(m),
            GridData::Scalar(_) => Err(Error::Format("expected a u8 mask, found floats".into())),
        }
    }

    fn natural_dtype(&self) -> Dtype {
        match self {
            GridData::Scalar(_) => Dtype::F64,
            GridData::Mask(_) => Dtype::U8,
        }
    }
}

impl From<ScalarGrid> for GridData {
    fn from(g: ScalarGrid) -> Self {
        GridData::Scalar(g)
    }
}

impl From<BinaryMask> for GridData {
    fn from(m: BinaryMask) -> Self {
        GridData::Mask(m)
    }
}

/// Serialize with an explicit dtype. Masks must be written as `u8`; scalar
/// grids as `f64`, or `f32` when the caller accepts rounding.
pub fn encode(data: &GridData, dtype: Dtype) -> Result<Vec<u8>> {
    let geometry = data.geometry();
    let mut header = format!("{MAGIC} {VERSION} {}", geometry.ndim());
    for n in geometry.shape() {
        header.push_str(&format!(" {n}"));
    }
    for h in geometry.spacing() {
        header.push_str(&format!(" {h}"));
    }
    header.push_str(&format!(" {}\n", dtype.as_str()));

    let mut out = header.into_bytes();
    out.reserve(geometry.len() * dtype.width());
    match (data, dtype) {
        (GridData::Mask(m), Dtype::U8) => out.extend_from_slice(m.values()),
        (GridData::Scalar(g), Dtype::F64) => {
            for v in g.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        (GridData::Scalar(g), Dtype::F32) => {
            for &v in g.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        (_, dtype) => {
            return Err(Error::Format(format!(
                "cannot store this grid as {}",
                dtype.as_str()
            )))
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<GridData> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let payload = &bytes[newline + 1..];

    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.first() != Some(&MAGIC) {
        return Err(Error::Format("bad magic".into()));
    }
    if tokens.get(1) != Some(&VERSION) {
        return Err(Error::Format(format!("unsupported version {:?}", tokens.get(1))));
    }
    let ndim: usize = tokens
        .get(2)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format("bad dimension count".into()))?;
    if !(2..=3).contains(&ndim) {
        return Err(Error::Format(format!("ndim {ndim} not in {{2, 3}}")));
    }
    let expected = 3 + 2 * ndim + 1;
    if tokens.len() != expected {
        return Err(Error::Format(format!(
            "header declares {ndim} axes but has {} fields (expected {expected})",
            tokens.len()
        )));
    }
    let shape = tokens[3..3 + ndim]
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("bad extent: {e}")))?;
    let spacing = tokens[3 + ndim..3 + 2 * ndim]
        .iter()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("bad spacing: {e}")))?;
    let dtype = Dtype::parse(tokens[expected - 1])?;
    let geometry = Geometry::new(shape, spacing).map_err(|e| Error::Format(e.to_string()))?;

    let want = geometry
        .len()
        .checked_mul(dtype.width())
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if payload.len() != want {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {want}",
            payload.len()
        )));
    }

    let as_format = |e: Error| Error::Format(e.to_string());
    Ok(match dtype {
        Dtype::U8 => GridData::Mask(BinaryMask::new(geometry, payload.to_vec()).map_err(as_format)?),
        Dtype::F64 => {
            let values = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            GridData::Scalar(ScalarGrid::new(geometry, values).map_err(as_format)?)
        }
        Dtype::F32 => {
            let values = payload
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            GridData::Scalar(ScalarGrid::new(geometry, values).map_err(as_format)?)
        }
    })
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridData> {
    decode(&fs::read(path)?)
}

/// Write in the grid's natural dtype (`f64` or `u8`).
pub fn write_grid(grid: &GridData, path: impl AsRef<Path>) -> Result<()> {
    write_grid_as(grid, grid.natural_dtype(), path)
}

pub fn write_grid_as(grid: &GridData, dtype: Dtype, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(grid, dtype)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_mask() -> BinaryMask {
        let geom = Geometry::new(vec![2, 3], vec![0.8, 1.25]).unwrap();
        BinaryMask::new(geom, vec![0, 1, 1, 0, 0, 1]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample_mask().into(), Dtype::U8).unwrap();
        let text = String::from_utf8_lossy(&bytes[..bytes.len() - 6]);
        assert_eq!(text, "SGRID v1 2 2 3 0.8 1.25 u8\n");
    }

    #[test]
    fn mask_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.sgrid");
        let data = GridData::from(sample_mask());
        write_grid(&data, &path).unwrap();
        assert_eq!(read_grid(&path).unwrap(), data);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = encode(&sample_mask().into(), Dtype::U8).unwrap();
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode(&sample_mask().into(), Dtype::U8).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn extent_count_must_match_ndim() {
        let mut bytes = b"SGRID v1 2 1 1 2 1 1 1 f64\n".to_vec();
        bytes.extend_from_slice(&[0; 16]);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_bad_values() {
        assert!(matches!(decode(b"GRID v1 2 1 1 1 1 u8\n\x00"), Err(Error::Format(_))));
        assert!(matches!(decode(b"SGRID v1 2 1 1 1 1 u8\n\x02"), Err(Error::Format(_))));
        let mut nan = b"SGRID v1 2 1 1 1 1 f64\n".to_vec();
        nan.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&nan), Err(Error::Format(_))));
        assert!(matches!(decode(b"SGRID v1 2 1 1 1 1 i16\n\x00\x00"), Err(Error::Format(_))));
    }

    #[test]
    fn f32_payloads_decode_to_scalar_grids() {
        let geom = Geometry::unit(vec![1, 2]).unwrap();
        let g = ScalarGrid::new(geom, vec![0.5, -2.0]).unwrap();
        let bytes = encode(&g.clone().into(), Dtype::F32).unwrap();
        assert_eq!(decode(&bytes).unwrap().into_scalar().unwrap(), g);
        assert!(encode(&g.into(), Dtype::U8).is_err());
    }

    fn arb_scalar_grid() -> impl Strategy<Value = ScalarGrid> {
        (
            prop::collection::vec(1usize..5, 2..=3),
            prop::collection::vec(1e-3f64..1e3, 3),
        )
            .prop_flat_map(|(shape, spacing)| {
                let n: usize = shape.iter().product();
                let spacing = spacing[..shape.len()].to_vec();
                prop::collection::vec(-1e12f64..1e12, n).prop_map(move |values| {
                    let geom = Geometry::new(shape.clone(), spacing.clone()).unwrap();
                    ScalarGrid::new(geom, values).unwrap()
                })
            })
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(grid in arb_scalar_grid()) {
            let data = GridData::from(grid);
            let back = decode(&encode(&data, Dtype::F64).unwrap()).unwrap();
            let (a, b) = (data.into_scalar().unwrap(), back.into_scalar().unwrap());
            prop_assert_eq!(a.geometry().shape(), b.geometry().shape());
            for (x, y) in a.geometry().spacing().iter().zip(b.geometry().spacing()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
