//! Full-reference quality metrics for reconstructed cubes.
//!
//! `x` is always the reference and `xhat` the estimate. Statistics are
//! accumulated in f64; variances and covariances are population (1/N)
//! moments.

use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::degrade::snr_db as inf_as_null;
use crate::error::{Error, Result};
use crate::par;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SAM_EPS: f64 = 1e-8;
pub const SAM_DELTA: f64 = 1e-9;

/// Spatial support of the SSIM/UIQI statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatSupport {
    /// One set of statistics per band over the whole image.
    #[default]
    Global,
    /// Mean of the index over all fully-contained `size × size` windows.
    Windowed { size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    /// `null` in JSON when the reconstruction is exact.
    #[serde(with = "inf_as_null")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub uiqi: f64,
    pub ergas: f64,
    pub sam_deg: f64,
    pub r_ratio: f64,
    pub max_value: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub sam_eps: f64,
    pub sam_delta: f64,
    pub support: StatSupport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uiqi_skipped_bands: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ergas_skipped_bands: Vec<usize>,
}

fn check_shapes(x: &HsiCube, xhat: &HsiCube) -> Result<()> {
    if !x.same_shape(xhat) {
        return Err(Error::dim(format!(
            "metric inputs differ in shape: {}x{}x{} vs {}x{}x{}",
            x.height(),
            x.width(),
            x.bands(),
            xhat.height(),
            xhat.width(),
            xhat.bands()
        )));
    }
    if x.data().is_empty() {
        return Err(Error::Degenerate("empty cube".into()));
    }
    Ok(())
}

pub fn rmse(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    check_shapes(x, xhat)?;
    let sse: f64 = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| {
            let d = f64::from(b) - f64::from(a);
            d * d
        })
        .sum();
    Ok((sse / x.data().len() as f64).sqrt())
}

/// `20·log10(max_value / rmse)`; `+∞` when the cubes are identical.
pub fn psnr(x: &HsiCube, xhat: &HsiCube, max_value: f64) -> Result<f64> {
    Ok(psnr_from_rmse(rmse(x, xhat)?, max_value))
}

pub fn psnr_from_rmse(rmse: f64, max_value: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (max_value / rmse).log10()
    }
}

#[derive(Clone, Copy, Debug)]
struct Moments {
    mx: f64,
    my: f64,
    vx: f64,
    vy: f64,
    cxy: f64,
}

fn moments(a: impl Iterator<Item = (f64, f64)> + Clone) -> Moments {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in a.clone() {
        sx += x;
        sy += y;
        n += 1;
    }
    let nf = n as f64;
    let (mx, my) = (sx / nf, sy / nf);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (x, y) in a {
        let (dx, dy) = (x - mx, y - my);
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
    }
    Moments {
        mx,
        my,
        vx: vx / nf,
        vy: vy / nf,
        cxy: cxy / nf,
    }
}

fn ssim_index(m: Moments, c1: f64, c2: f64) -> f64 {
    ((2.0 * m.mx * m.my + c1) * (2.0 * m.cxy + c2))
        / ((m.mx * m.mx + m.my * m.my + c1) * (m.vx + m.vy + c2))
}

fn uiqi_index(m: Moments) -> Option<f64> {
    let denom = (m.vx + m.vy) * (m.mx * m.mx + m.my * m.my);
    (denom != 0.0).then(|| 4.0 * m.cxy * m.mx * m.my / denom)
}

// Per-band (or per-window) index values of a statistic, `None` where undefined.
fn band_indices(
    x: &HsiCube,
    xhat: &HsiCube,
    support: StatSupport,
    index: impl Fn(Moments) -> Option<f64> + Sync + Send,
) -> Result<Vec<Option<f64>>> {
    check_shapes(x, xhat)?;
    let (h, w) = (x.height(), x.width());
    if let StatSupport::Windowed { size } = support {
        if size == 0 || size > h || size > w {
            return Err(Error::param(format!(
                "window size {size} does not fit {h}x{w}"
            )));
        }
    }
    Ok(par::map_indexed(x.bands(), |k| {
        let a = x.band(k);
        let b = xhat.band(k);
        match support {
            StatSupport::Global => index(moments(a.iter().copied().zip(b.iter().copied()))),
            StatSupport::Windowed { size } => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for i0 in 0..=h - size {
                    for j0 in 0..=w - size {
                        let win =
                            (i0..i0 + size).flat_map(|i| (j0..j0 + size).map(move |j| i * w + j));
                        let pairs = win.map(|p| (a[p], b[p]));
                        if let Some(v) = index(moments(pairs)) {
                            sum += v;
                            count += 1;
                        }
                    }
                }
                (count > 0).then(|| sum / count as f64)
            }
        }
    }))
}

pub fn ssim_constants(max_value: f64) -> (f64, f64) {
    ((SSIM_K1 * max_value).powi(2), (SSIM_K2 * max_value).powi(2))
}

/// Mean over bands of the SSIM index.
pub fn ssim(x: &HsiCube, xhat: &HsiCube, max_value: f64, support: StatSupport) -> Result<f64> {
    let (c1, c2) = ssim_constants(max_value);
    let vals = band_indices(x, xhat, support, |m| Some(ssim_index(m, c1, c2)))?;
    Ok(vals.iter().flatten().sum::<f64>() / vals.len() as f64)
}

/// Mean over bands of the universal image quality index, plus the bands
/// skipped because the index is undefined (zero denominator).
pub fn uiqi_detailed(
    x: &HsiCube,
    xhat: &HsiCube,
    support: StatSupport,
) -> Result<(f64, Vec<usize>)> {
    let vals = band_indices(x, xhat, support, uiqi_index)?;
    let skipped: Vec<usize> = vals
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.is_none().then_some(k))
        .collect();
    if !skipped.is_empty() {
        log::warn!("UIQI undefined for bands {skipped:?}; excluded from the mean");
    }
    let kept: Vec<f64> = vals.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("UIQI is undefined for every band".into()));
    }
    Ok((kept.iter().sum::<f64>() / kept.len() as f64, skipped))
}

pub fn uiqi(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    uiqi_detailed(x, xhat, StatSupport::Global).map(|(v, _)| v)
}

/// `100 / r · sqrt(mean_k RMSE_k² / μ_k²)` with `μ_k` the reference band mean
/// and `r` the downsampling factor. Bands with zero mean are skipped.
pub fn ergas_detailed(x: &HsiCube, xhat: &HsiCube, r_ratio: f64) -> Result<(f64, Vec<usize>)> {
    check_shapes(x, xhat)?;
    if r_ratio.is_nan() || r_ratio <= 0.0 {
        return Err(Error::param(format!(
            "resolution ratio must be positive, got {r_ratio}"
        )));
    }
    let terms = par::map_indexed(x.bands(), |k| {
        let a = x.band(k);
        let b = xhat.band(k);
        let n = a.len() as f64;
        let mu = a.iter().sum::<f64>() / n;
        let mse = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (q - p) * (q - p))
            .sum::<f64>()
            / n;
        (mu != 0.0).then(|| mse / (mu * mu))
    });
    let skipped: Vec<usize> = terms
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.is_none().then_some(k))
        .collect();
    if !skipped.is_empty() {
        log::warn!("ERGAS: zero-mean bands {skipped:?} excluded");
    }
    let kept: Vec<f64> = terms.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Degenerate(
            "every reference band has zero mean".into(),
        ));
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok((100.0 / r_ratio * mean.sqrt(), skipped))
}

pub fn ergas(x: &HsiCube, xhat: &HsiCube, r_ratio: f64) -> Result<f64> {
    ergas_detailed(x, xhat, r_ratio).map(|(v, _)| v)
}

/// Mean spectral angle in degrees with the arccos argument clipped to `1 − δ`.
pub fn sam(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    check_shapes(x, xhat)?;
    let c = x.bands();
    let total: f64 = x
        .data()
        .chunks_exact(c)
        .zip(xhat.data().chunks_exact(c))
        .map(|(a, b)| {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (&p, &q) in a.iter().zip(b) {
                let (p, q) = (f64::from(p), f64::from(q));
                dot += p * q;
                na += p * p;
                nb += q * q;
            }
            let cos = (dot / (na.sqrt() * nb.sqrt() + SAM_EPS)).min(1.0 - SAM_DELTA);
            cos.acos().to_degrees()
        })
        .sum();
    Ok(total / x.num_pixels() as f64)
}

/// All six metrics with the constants used.
pub fn evaluate(x: &HsiCube, xhat: &HsiCube, r_ratio: f64, max_value: f64) -> Result<MetricReport> {
    evaluate_with(x, xhat, r_ratio, max_value, StatSupport::Global)
}

pub fn evaluate_with(
    x: &HsiCube,
    xhat: &HsiCube,
    r_ratio: f64,
    max_value: f64,
    support: StatSupport,
) -> Result<MetricReport> {
    let rmse = rmse(x, xhat)?;
    let (c1, c2) = ssim_constants(max_value);
    let (uiqi, uiqi_skipped_bands) = uiqi_detailed(x, xhat, support)?;
    let (ergas, ergas_skipped_bands) = ergas_detailed(x, xhat, r_ratio)?;
    Ok(MetricReport {
        rmse,
        psnr_db: psnr_from_rmse(rmse, max_value),
        ssim: ssim(x, xhat, max_value, support)?,
        uiqi,
        ergas,
        sam_deg: sam(x, xhat)?,
        r_ratio,
        max_value,
        ssim_c1: c1,
        ssim_c2: c2,
        sam_eps: SAM_EPS,
        sam_delta: SAM_DELTA,
        support,
        uiqi_skipped_bands,
        ergas_skipped_bands,
    })
}
