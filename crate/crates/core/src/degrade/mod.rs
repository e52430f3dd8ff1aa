//! Synthetic sensor degradation.
//!
//! A ground-truth cube is blurred band by band, decimated and corrupted with
//! white noise to form the low-resolution hyperspectral input; the same cube
//! is spectrally projected and corrupted to form the high-resolution
//! multispectral input.

mod psf;
mod srf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cube::{spectral_project, HsiCube, MsiImage, PsfKernel, SrfMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::seed::derive_seed;

pub use psf::{make_psf, PsfKind, DEFAULT_KERNEL_SIZE};
pub use srf::{load_srf_csv, make_gaussian_srf, read_srf_csv, write_srf_csv, DEFAULT_FWHM_SCALE};

/// Noise level of the multispectral input in every benchmark configuration.
pub const DEFAULT_MSI_SNR_DB: f64 = 40.0;

/// Downsampling factors paired with the hyperspectral SNR used at that factor.
pub const R_SNR_PAIRING: [(usize, f64); 4] = [(4, 35.0), (8, 30.0), (16, 25.0), (32, 20.0)];

/// The eight `(r, b)` configurations evaluated per ground truth.
pub const BENCHMARK_RB: [(usize, usize); 8] = [
    (4, 4),
    (8, 4),
    (16, 4),
    (32, 4),
    (8, 1),
    (8, 3),
    (8, 8),
    (8, 16),
];

/// Hyperspectral SNR paired with downsampling factor `r`, if it is one of
/// the benchmark factors.
pub fn paired_hsi_snr(r: usize) -> Option<f64> {
    R_SNR_PAIRING
        .iter()
        .find(|(f, _)| *f == r)
        .map(|&(_, snr)| snr)
}

/// One fully specified degradation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub psf: PsfKind,
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    pub r: usize,
    /// `f64::INFINITY` disables noise; serialized as `null`.
    #[serde(with = "snr_db")]
    pub hsi_snr_db: f64,
    pub srf: SrfMatrix,
    #[serde(with = "snr_db", default = "default_msi_snr")]
    pub msi_snr_db: f64,
    pub seed: u64,
}

fn default_kernel_size() -> usize {
    DEFAULT_KERNEL_SIZE
}

fn default_msi_snr() -> f64 {
    DEFAULT_MSI_SNR_DB
}

/// Serializes an SNR with `null` standing for "noise disabled".
pub mod snr_db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Builds the 80 benchmark specifications (10 PSFs × 8 `(r, b)` pairs) for a
/// ground truth with `bands` spectral bands. Each spec gets its own seed
/// derived from `seed` and its grid position.
pub fn benchmark_grid(bands: usize, seed: u64) -> Result<Vec<DegradationSpec>> {
    let mut specs = Vec::with_capacity(80);
    for psf in PsfKind::benchmark_set() {
        for &(r, b) in &BENCHMARK_RB {
            let hsi_snr_db = paired_hsi_snr(r).expect("benchmark factors are paired");
            specs.push(DegradationSpec {
                psf,
                kernel_size: DEFAULT_KERNEL_SIZE,
                r,
                hsi_snr_db,
                srf: make_gaussian_srf(bands, b, DEFAULT_FWHM_SCALE)?,
                msi_snr_db: DEFAULT_MSI_SNR_DB,
                seed: derive_seed(seed, specs.len() as u64),
            });
        }
    }
    Ok(specs)
}

// Mirror index without repeating the edge sample: ... c b | a b c d | c b ...
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Convolves every band with `kernel`, same-size output, reflect padding.
pub fn blur_per_band(cube: &HsiCube, kernel: &PsfKernel) -> Result<HsiCube> {
    let (h, w, c) = (cube.height(), cube.width(), cube.bands());
    let k = kernel.size();
    if k > 2 * h || k > 2 * w {
        return Err(Error::dim(format!(
            "kernel size {k} exceeds twice the image size {h}x{w}"
        )));
    }
    let rad = kernel.radius() as isize;
    // col_src[j * k + b] = source column for output column j and kernel column b
    let col_src: Vec<usize> = (0..w)
        .flat_map(|j| (0..k).map(move |b| reflect(j as isize + rad - b as isize, w)))
        .collect();

    let mut out = vec![0.0f32; h * w * c];
    par::for_each_chunk_mut(&mut out, (w * c).max(1), |i, row_out| {
        let mut acc = vec![0.0f64; w * c];
        for a in 0..k {
            let si = reflect(i as isize + rad - a as isize, h);
            for j in 0..w {
                let dst = &mut acc[j * c..(j + 1) * c];
                for b in 0..k {
                    let wgt = kernel.get(a, b);
                    if wgt == 0.0 {
                        continue;
                    }
                    let src = cube.pixel(si, col_src[j * k + b]);
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += wgt * f64::from(s);
                    }
                }
            }
        }
        for (o, a) in row_out.iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    });
    Ok(HsiCube::from_parts_unchecked(h, w, c, out))
}

/// Strided decimation: `out[i, j, :] = cube[i·r, j·r, :]`.
pub fn downsample(cube: &HsiCube, r: usize) -> Result<HsiCube> {
    if r == 0 {
        return Err(Error::param("downsampling factor must be >= 1"));
    }
    let (h, w, c) = (cube.height(), cube.width(), cube.bands());
    if h % r != 0 || w % r != 0 {
        return Err(Error::dim(format!(
            "{h}x{w} is not divisible by r = {r}; crop first"
        )));
    }
    let (oh, ow) = (h / r, w / r);
    let mut data = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            data.extend_from_slice(cube.pixel(i * r, j * r));
        }
    }
    Ok(HsiCube::from_parts_unchecked(oh, ow, c, data))
}

/// Adds i.i.d. zero-mean Gaussian noise at `snr_db` relative to the mean
/// signal power of `cube`. `f64::INFINITY` returns the input unchanged.
///
/// Each image row draws from its own ChaCha stream, so the result does not
/// depend on how rows are scheduled across threads.
pub fn add_awgn(cube: &HsiCube, snr_db: f64, seed: u64) -> Result<HsiCube> {
    if snr_db == f64::INFINITY {
        return Ok(cube.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::param(format!(
            "SNR must be finite or +inf, got {snr_db}"
        )));
    }
    let n = cube.data().len();
    let power = cube
        .data()
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        / n.max(1) as f64;
    if power <= 0.0 {
        return Err(Error::Degenerate(
            "signal power is zero; SNR is undefined".into(),
        ));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let row_len = cube.width() * cube.bands();
    let mut out = cube.data().to_vec();
    par::for_each_chunk_mut(&mut out, row_len.max(1), |row, chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        for v in chunk.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (f64::from(*v) + sigma * z) as f32;
        }
    });
    Ok(HsiCube::from_parts_unchecked(
        cube.height(),
        cube.width(),
        cube.bands(),
        out,
    ))
}

/// Noise for a multispectral image, same model as [`add_awgn`].
pub fn add_awgn_msi(msi: &MsiImage, snr_db: f64, seed: u64) -> Result<MsiImage> {
    add_awgn(msi.as_cube(), snr_db, seed).map(MsiImage::from_cube)
}

/// Produces the `(lr_hsi, hr_msi)` pair for `gt` under `spec`.
pub fn wald_degrade(gt: &HsiCube, spec: &DegradationSpec) -> Result<(HsiCube, MsiImage)> {
    let (lo, hi) = gt.min_max();
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::param(format!(
            "ground truth must be normalized to [0, 1], found [{lo}, {hi}]"
        )));
    }
    let kernel = make_psf(spec.psf, spec.kernel_size)?;
    let blurred = blur_per_band(gt, &kernel)?;
    let lr = downsample(&blurred, spec.r)?;
    let lr_hsi = add_awgn(&lr, spec.hsi_snr_db, derive_seed(spec.seed, 1))?;

    let msi = spectral_project(gt, &spec.srf)?;
    let hr_msi = add_awgn_msi(&msi, spec.msi_snr_db, derive_seed(spec.seed, 2))?;
    Ok((lr_hsi, hr_msi))
}
