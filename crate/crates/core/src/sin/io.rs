//! Versioned binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | field                                     |
//! |-------|-------------------------------------------|
//! | 4     | magic `SINP`                              |
//! | 4     | format version (u32)                      |
//! | 4     | input bands (u32)                         |
//! | 4     | output bands (u32)                        |
//! | 4     | hidden layers (u32)                       |
//! | 4     | hidden width (u32)                        |
//! | 1     | activation code (0 leaky, 1 relu, 2 gelu) |
//! | 1     | skip flag                                 |
//! | 2     | reserved, zero                            |
//!
//! followed by every layer's weights (row-major) then bias, as f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, SinArch, SinParams};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: [u8; 4] = *b"SINP";
pub const PARAMS_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn write_params<W: Write>(params: &SinParams, mut w: W) -> Result<()> {
    let a = params.arch;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&PARAMS_MAGIC);
    for v in [
        PARAMS_VERSION,
        to_u32(params.in_bands)?,
        to_u32(params.out_bands)?,
        to_u32(a.hidden_layers)?,
        to_u32(a.width)?,
    ] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&[a.activation.code(), u8::from(a.skip), 0, 0]);
    w.write_all(&header)?;
    let blob: Vec<u8> = params
        .flat()
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect();
    w.write_all(&blob)?;
    w.flush()?;
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<SinParams> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_counted(&mut r, &mut header, 0)?;
    if header[..4] != PARAMS_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected SINP",
            &header[..4]
        )));
    }
    let word = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != PARAMS_VERSION {
        return Err(Error::Format(format!(
            "unsupported parameter file version {version}"
        )));
    }
    let activation = Activation::from_code(header[24])
        .ok_or_else(|| Error::Format(format!("unknown activation code {}", header[24])))?;
    let arch = SinArch {
        hidden_layers: word(3) as usize,
        width: word(4) as usize,
        activation,
        skip: header[25] != 0,
    };
    let (in_bands, out_bands) = (word(1) as usize, word(2) as usize);
    let mut params = super::init_params(in_bands, out_bands, arch, 0)?;
    let count = params.param_count();
    let mut blob = vec![0u8; count * 4];
    read_exact_counted(&mut r, &mut blob, HEADER_LEN)?;
    let mut values = blob
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())));
    for layer in &mut params.layers {
        for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *v = values.next().expect("blob sized to parameter count");
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric(
            "parameter file contains non-finite values".into(),
        ));
    }
    Ok(params)
}

fn read_exact_counted<R: Read>(r: &mut R, buf: &mut [u8], offset: usize) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::Truncated {
                    expected: (offset + buf.len()) as u64,
                    actual: (offset + filled) as u64,
                })
            }
            n => filled += n,
        }
    }
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit the u32 header field")))
}

pub fn save_params(params: &SinParams, path: impl AsRef<Path>) -> Result<()> {
    write_params(params, BufWriter::new(File::create(path)?))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<SinParams> {
    read_params(BufReader::new(File::open(path)?))
}
