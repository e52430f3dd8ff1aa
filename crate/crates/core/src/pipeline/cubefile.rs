//! Cube files and raw-array import.
//!
//! A cube file is a 20-byte header followed by the samples as little-endian
//! f32 in `(row, col, band)` order:
//!
//! | bytes | field                         |
//! |-------|-------------------------------|
//! | 4     | magic `SLC1`                  |
//! | 4     | height (u32 LE)               |
//! | 4     | width (u32 LE)                |
//! | 4     | bands (u32 LE)                |
//! | 1     | dtype code, `1` = f32         |
//! | 1     | endianness, `0` = little      |
//! | 2     | reserved, zero                |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::error::{Error, Result};

pub const CUBE_MAGIC: [u8; 4] = *b"SLC1";
pub const CUBE_HEADER_LEN: usize = 20;
const DTYPE_F32: u8 = 1;
const LITTLE_ENDIAN: u8 = 0;

fn payload_len(h: usize, w: usize, c: usize, sample: usize) -> Result<usize> {
    h.checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(sample))
        .ok_or_else(|| Error::dim(format!("{h}x{w}x{c} overflows the addressable size")))
}

pub fn write_cube<W: Write>(cube: &HsiCube, mut w: W) -> Result<()> {
    let field =
        |v: usize| u32::try_from(v).map_err(|_| Error::dim(format!("dimension {v} exceeds u32")));
    let mut header = Vec::with_capacity(CUBE_HEADER_LEN);
    header.extend_from_slice(&CUBE_MAGIC);
    for v in [cube.height(), cube.width(), cube.bands()] {
        header.extend_from_slice(&field(v)?.to_le_bytes());
    }
    header.extend_from_slice(&[DTYPE_F32, LITTLE_ENDIAN, 0, 0]);
    w.write_all(&header)?;
    let payload: Vec<u8> = cube.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_cube<R: Read>(mut r: R) -> Result<HsiCube> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < CUBE_HEADER_LEN {
        return Err(Error::Truncated {
            expected: CUBE_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != CUBE_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            "SLC1"
        )));
    }
    let word =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (word(0), word(1), word(2));
    if bytes[16] != DTYPE_F32 {
        return Err(Error::Format(format!(
            "unsupported dtype code {}",
            bytes[16]
        )));
    }
    if bytes[17] != LITTLE_ENDIAN {
        return Err(Error::Format(format!(
            "unsupported endianness code {}",
            bytes[17]
        )));
    }
    let len = payload_len(h, w, c, 4)?;
    let expected = CUBE_HEADER_LEN as u64 + len as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after a {h}x{w}x{c} payload",
            actual - expected
        )));
    }
    let data = bytes[CUBE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    HsiCube::new(h, w, c, data)
}

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    write_cube(cube, BufWriter::new(File::create(path)?))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    read_cube(BufReader::new(File::open(path)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawDtype {
    U8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl RawDtype {
    pub fn size(self) -> usize {
        match self {
            RawDtype::U8 => 1,
            RawDtype::U16 | RawDtype::I16 => 2,
            RawDtype::U32 | RawDtype::I32 | RawDtype::F32 => 4,
            RawDtype::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], big: bool) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = b.try_into().unwrap();
                f64::from(if big {
                    <$t>::from_be_bytes(arr)
                } else {
                    <$t>::from_le_bytes(arr)
                })
            }};
        }
        match self {
            RawDtype::U8 => f64::from(b[0]),
            RawDtype::U16 => num!(u16),
            RawDtype::I16 => num!(i16),
            RawDtype::U32 => num!(u32),
            RawDtype::I32 => num!(i32),
            RawDtype::F32 => num!(f32),
            RawDtype::F64 => {
                let arr = b.try_into().unwrap();
                if big {
                    f64::from_be_bytes(arr)
                } else {
                    f64::from_le_bytes(arr)
                }
            }
        }
    }
}

/// Sample ordering of a raw array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleave {
    /// band-interleaved-by-pixel: `(row, col, band)`
    #[default]
    Bip,
    /// band-interleaved-by-line: `(row, band, col)`
    Bil,
    /// band-sequential: `(band, row, col)`
    Bsq,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

/// JSON sidecar describing a headerless raw array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: RawDtype,
    #[serde(default)]
    pub interleave: Interleave,
    #[serde(default)]
    pub byte_order: ByteOrder,
    /// Bytes to skip before the first sample.
    #[serde(default)]
    pub header_bytes: usize,
}

/// Decodes a raw array into a cube using `sidecar` for its layout.
pub fn import_raw_bytes(bytes: &[u8], sidecar: &RawSidecar) -> Result<HsiCube> {
    let (h, w, c) = (sidecar.height, sidecar.width, sidecar.bands);
    let size = sidecar.dtype.size();
    let expected = payload_len(h, w, c, size)?
        .checked_add(sidecar.header_bytes)
        .ok_or_else(|| Error::dim("raw size overflows"))?;
    if bytes.len() != expected {
        return Err(Error::dim(format!(
            "sidecar describes {h}x{w}x{c} {:?} ({expected} bytes) but the payload has {} bytes",
            sidecar.dtype,
            bytes.len()
        )));
    }
    let body = &bytes[sidecar.header_bytes..];
    let big = sidecar.byte_order == ByteOrder::Big;
    let sample = |idx: usize| {
        sidecar
            .dtype
            .decode(&body[idx * size..(idx + 1) * size], big)
    };
    HsiCube::from_fn(h, w, c, |i, j, k| {
        let idx = match sidecar.interleave {
            Interleave::Bip => (i * w + j) * c + k,
            Interleave::Bil => (i * c + k) * w + j,
            Interleave::Bsq => (k * h + i) * w + j,
        };
        sample(idx)
    })
}

/// Reads a raw array and its JSON sidecar (`<raw>.json` when `sidecar` is `None`).
pub fn import_raw(raw: impl AsRef<Path>, sidecar: Option<&Path>) -> Result<HsiCube> {
    let raw = raw.as_ref();
    let sidecar_path = match sidecar {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = raw.as_os_str().to_owned();
            s.push(".json");
            s.into()
        }
    };
    let meta: RawSidecar = serde_json::from_slice(&fs::read(&sidecar_path)?)?;
    import_raw_bytes(&fs::read(raw)?, &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cube() -> HsiCube {
        HsiCube::from_fn(3, 4, 2, |i, j, k| (i * 8 + j * 2 + k) as f64 * 0.1 - 0.3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cube = sample_cube();
        let mut buf = Vec::new();
        write_cube(&cube, &mut buf).unwrap();
        assert_eq!(buf.len(), CUBE_HEADER_LEN + 3 * 4 * 2 * 4);
        assert_eq!(&buf[..4], b"SLC1");
        let back = read_cube(buf.as_slice()).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn truncation_reports_byte_counts() {
        let mut buf = Vec::new();
        write_cube(&sample_cube(), &mut buf).unwrap();
        let full = buf.len() as u64;
        match read_cube(&buf[..buf.len() - 5]) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, full);
                assert_eq!(actual, full - 5);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_cube(&buf[..10]),
            Err(Error::Truncated {
                expected: 20,
                actual: 10
            })
        ));
        let msg = read_cube(&buf[..buf.len() - 5]).unwrap_err().to_string();
        assert!(msg.contains(&full.to_string()), "{msg}");
    }

    #[test]
    fn header_validation() {
        let mut buf = Vec::new();
        write_cube(&sample_cube(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[3] = b'9';
        assert!(matches!(read_cube(bad.as_slice()), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_cube(long.as_slice()), Err(Error::Format(_))));
        let mut dtype = buf.clone();
        dtype[16] = 7;
        assert!(matches!(read_cube(dtype.as_slice()), Err(Error::Format(_))));
        let mut huge = buf.clone();
        huge[4..16].copy_from_slice(&[0xFF; 12]);
        assert!(read_cube(huge.as_slice()).is_err());
    }

    #[test]
    fn raw_import_layouts() {
        // 2x2x2 cube with value = 100·i + 10·j + k
        let val = |i: usize, j: usize, k: usize| (100 * i + 10 * j + k) as u16;
        let mut bip = Vec::new();
        let mut bsq = Vec::new();
        let mut bil = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    bip.extend(val(i, j, k).to_le_bytes());
                }
            }
        }
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    bsq.extend(val(i, j, k).to_le_bytes());
                }
            }
        }
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    bil.extend(val(i, j, k).to_be_bytes());
                }
            }
        }
        let mut meta = RawSidecar {
            height: 2,
            width: 2,
            bands: 2,
            dtype: RawDtype::U16,
            interleave: Interleave::Bip,
            byte_order: ByteOrder::Little,
            header_bytes: 0,
        };
        let a = import_raw_bytes(&bip, &meta).unwrap();
        meta.interleave = Interleave::Bsq;
        let b = import_raw_bytes(&bsq, &meta).unwrap();
        meta.interleave = Interleave::Bil;
        meta.byte_order = ByteOrder::Big;
        let c = import_raw_bytes(&bil, &meta).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.get(1, 0, 1), 101.0);
    }

    #[test]
    fn raw_sidecar_mismatch_is_dimension_error() {
        let meta = RawSidecar {
            height: 4,
            width: 4,
            bands: 3,
            dtype: RawDtype::F32,
            interleave: Interleave::Bsq,
            byte_order: ByteOrder::Little,
            header_bytes: 0,
        };
        let err = import_raw_bytes(&[0u8; 100], &meta).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(err.to_string().contains("192"));
    }

    #[test]
    fn sidecar_json_defaults() {
        let meta: RawSidecar =
            serde_json::from_str(r#"{"height":2,"width":3,"bands":4,"dtype":"f64"}"#).unwrap();
        assert_eq!(meta.interleave, Interleave::Bip);
        assert_eq!(meta.byte_order, ByteOrder::Little);
    }
}
