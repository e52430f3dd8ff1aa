//! Spectral response generators and CSV exchange.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::cube::SrfMatrix;
use crate::error::{Error, Result};

/// Band FWHM as a multiple of the spacing between band centers.
pub const DEFAULT_FWHM_SCALE: f64 = 1.0;

const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_3; // 2·sqrt(2·ln 2)

/// `c` Gaussian bands with centers equally spaced over `[0, C − 1]`.
///
/// The FWHM of every band is `fwhm_scale` times the center spacing (the full
/// band range when `c == 1`). Columns are normalized to unit sum.
pub fn make_gaussian_srf(hsi_bands: usize, msi_bands: usize, fwhm_scale: f64) -> Result<SrfMatrix> {
    if msi_bands == 0 || msi_bands > hsi_bands {
        return Err(Error::param(format!(
            "need 1 <= c <= C, got c = {msi_bands}, C = {hsi_bands}"
        )));
    }
    if !(fwhm_scale.is_finite() && fwhm_scale > 0.0) {
        return Err(Error::param(format!(
            "fwhm_scale must be positive, got {fwhm_scale}"
        )));
    }
    let span = (hsi_bands - 1) as f64;
    let (spacing, centers): (f64, Vec<f64>) = if msi_bands == 1 {
        (hsi_bands as f64, vec![span / 2.0])
    } else {
        let step = span / (msi_bands - 1) as f64;
        (step, (0..msi_bands).map(|m| step * m as f64).collect())
    };
    let sigma = fwhm_scale * spacing / FWHM_TO_SIGMA;
    let mut data = vec![0.0; hsi_bands * msi_bands];
    for (m, &mu) in centers.iter().enumerate() {
        for n in 0..hsi_bands {
            let d = n as f64 - mu;
            data[n * msi_bands + m] = (-d * d / (2.0 * sigma * sigma)).exp();
        }
        // Very narrow bands can underflow everywhere; keep the nearest band.
        if (0..hsi_bands).all(|n| data[n * msi_bands + m] == 0.0) {
            data[(mu.round() as usize) * msi_bands + m] = 1.0;
        }
    }
    SrfMatrix::new(hsi_bands, msi_bands, data)
}

/// Parses a headerless CSV with one row per hyperspectral band and one
/// column per multispectral band.
pub fn read_srf_csv<R: Read>(reader: R) -> Result<SrfMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Format(format!(
                    "SRF row {rows} has {} columns, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            data.push(field.parse::<f64>().map_err(|e| {
                Error::Format(format!("SRF row {rows}: cannot parse {field:?}: {e}"))
            })?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty SRF file".into()))?;
    SrfMatrix::new(rows, cols, data)
}

pub fn load_srf_csv(path: impl AsRef<Path>) -> Result<SrfMatrix> {
    read_srf_csv(File::open(path)?)
}

pub fn write_srf_csv<W: Write>(srf: &SrfMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for n in 0..srf.rows() {
        wtr.write_record((0..srf.cols()).map(|m| format!("{:e}", srf.get(n, m))))?;
    }
    wtr.flush()?;
    Ok(())
}
