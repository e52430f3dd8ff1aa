//! Image containers and sensor operators shared by every stage.
//!
//! Images are stored row-major as `(row, col, band)` so that each pixel's
//! spectrum is a contiguous slice.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Read access to the per-pixel spectra of an image.
///
/// Training and inference consume images only through this trait, which
/// keeps them independent of the concrete container.
pub trait PixelSpectra {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn bands(&self) -> usize;
    /// Spectrum of pixel `p` in row-major pixel order.
    fn spectrum(&self, p: usize) -> &[f32];

    fn num_pixels(&self) -> usize {
        self.height() * self.width()
    }
}

/// An `height × width × bands` reflectance cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| Error::dim(format!("{height}x{width}x{bands} overflows")))?;
        if data.len() != expected {
            return Err(Error::dim(format!(
                "data length {} does not match {height}x{width}x{bands} = {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        Self {
            height,
            width,
            bands,
            data: vec![0.0; height * width * bands],
        }
    }

    /// Builds a cube by evaluating `f(row, col, band)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * bands);
        for i in 0..height {
            for j in 0..width {
                for k in 0..bands {
                    data.push(f(i, j, k) as f32);
                }
            }
        }
        Self::new(height, width, bands, data)
    }

    // Internal constructor for operations that cannot introduce non-finite values.
    pub(crate) fn from_parts_unchecked(
        height: usize,
        width: usize,
        bands: usize,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * bands);
        Self {
            height,
            width,
            bands,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        (row * self.width + col) * self.bands + band
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[self.index(row, col, band)]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    /// Values of one band in row-major pixel order, widened to f64.
    pub fn band(&self, band: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(band)
            .step_by(self.bands)
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn same_shape(&self, other: &HsiCube) -> bool {
        self.height == other.height && self.width == other.width && self.bands == other.bands
    }

    /// Rectangular spatial crop.
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<Self> {
        if row0 + height > self.height || col0 + width > self.width {
            return Err(Error::dim(format!(
                "crop {height}x{width} at ({row0},{col0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.bands);
        for i in row0..row0 + height {
            let start = self.index(i, col0, 0);
            data.extend_from_slice(&self.data[start..start + width * self.bands]);
        }
        Ok(Self::from_parts_unchecked(height, width, self.bands, data))
    }

    /// Copy with every sample clamped to `[0, 1]`.
    pub fn clipped_unit(&self) -> Self {
        let data = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::from_parts_unchecked(self.height, self.width, self.bands, data)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl PixelSpectra for HsiCube {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn bands(&self) -> usize {
        self.bands
    }

    fn spectrum(&self, p: usize) -> &[f32] {
        &self.data[p * self.bands..(p + 1) * self.bands]
    }
}

/// A multispectral image: same layout as [`HsiCube`], fewer bands than the
/// hyperspectral cube it is paired with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsiImage(HsiCube);

impl MsiImage {
    pub fn from_cube(cube: HsiCube) -> Self {
        Self(cube)
    }

    pub fn as_cube(&self) -> &HsiCube {
        &self.0
    }

    pub fn into_cube(self) -> HsiCube {
        self.0
    }
}

impl Deref for MsiImage {
    type Target = HsiCube;

    fn deref(&self) -> &HsiCube {
        &self.0
    }
}

impl PixelSpectra for MsiImage {
    fn height(&self) -> usize {
        self.0.height
    }

    fn width(&self) -> usize {
        self.0.width
    }

    fn bands(&self) -> usize {
        self.0.bands
    }

    fn spectrum(&self, p: usize) -> &[f32] {
        self.0.spectrum(p)
    }
}

/// Spectral response operator `R` with `rows` hyperspectral bands and `cols`
/// multispectral bands. Columns are normalized to unit sum on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrfMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SrfMatrix {
    /// `data` is row-major, `rows × cols`.
    pub fn new(rows: usize, cols: usize, mut data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("SRF must have at least one row and column"));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "SRF data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::param(format!(
                "SRF entries must be finite and >= 0, got {v}"
            )));
        }
        for m in 0..cols {
            let sum: f64 = (0..rows).map(|n| data[n * cols + m]).sum();
            if sum <= 0.0 {
                return Err(Error::param(format!("SRF column {m} has zero sum")));
            }
            for n in 0..rows {
                data[n * cols + m] /= sum;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(n, n, data)
    }

    /// Number of hyperspectral bands.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of multispectral bands.
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|n| self.get(n, col)).collect()
    }

    /// Projects one spectrum; `out` must have `cols` entries.
    pub fn project_spectrum(&self, spectrum: &[f32], out: &mut [f32]) {
        for (m, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (n, &x) in spectrum.iter().enumerate() {
                acc += f64::from(x) * self.data[n * self.cols + m];
            }
            *o = acc as f32;
        }
    }
}

/// Square, odd-sized, nonnegative, unit-sum blur kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsfKernel {
    size: usize,
    weights: Vec<f64>,
}

impl PsfKernel {
    /// Validates and sum-normalizes row-major `size × size` weights.
    pub fn from_weights(size: usize, mut weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::param(format!(
                "kernel size must be odd and >= 1, got {size}"
            )));
        }
        if weights.len() != size * size {
            return Err(Error::dim(format!(
                "kernel has {} weights, expected {}",
                weights.len(),
                size * size
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param(
                "kernel weights must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Degenerate("kernel weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { size, weights })
    }

    pub fn delta(size: usize) -> Result<Self> {
        let mut w = vec![0.0; size * size];
        if size % 2 == 1 {
            w[(size / 2) * size + size / 2] = 1.0;
        }
        Self::from_weights(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Mode-3 product `out[i,j,m] = Σ_n cube[i,j,n] · R[n,m]`.
pub fn spectral_project(cube: &HsiCube, srf: &SrfMatrix) -> Result<MsiImage> {
    if cube.bands() != srf.rows() {
        return Err(Error::dim(format!(
            "cube has {} bands but SRF expects {}",
            cube.bands(),
            srf.rows()
        )));
    }
    let c = srf.cols();
    let mut out = vec![0.0f32; cube.num_pixels() * c];
    let row_len = cube.width() * c;
    par::for_each_chunk_mut(&mut out, row_len.max(1), |row, chunk| {
        for (j, o) in chunk.chunks_mut(c).enumerate() {
            srf.project_spectrum(cube.pixel(row, j), o);
        }
    });
    Ok(MsiImage(HsiCube::from_parts_unchecked(
        cube.height(),
        cube.width(),
        c,
        out,
    )))
}

/// Affine rescale of the whole cube to `[0, 1]`.
pub fn normalize_cube(cube: &HsiCube) -> Result<HsiCube> {
    let (lo, hi) = cube.min_max();
    if hi <= lo {
        return Err(Error::Degenerate(format!(
            "cannot normalize a constant cube (value {lo})"
        )));
    }
    let lo = f64::from(lo);
    let span = f64::from(hi) - lo;
    let data = cube
        .data()
        .iter()
        .map(|&v| ((f64::from(v) - lo) / span) as f32)
        .collect();
    Ok(HsiCube::from_parts_unchecked(
        cube.height(),
        cube.width(),
        cube.bands(),
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(rng: &mut ChaCha8Rng, h: usize, w: usize, b: usize) -> HsiCube {
        HsiCube::from_fn(h, w, b, |_, _, _| rng.gen::<f64>()).unwrap()
    }

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(matches!(
            HsiCube::new(2, 2, 2, vec![0.0; 7]),
            Err(Error::Dimension(_))
        ));
        let mut d = vec![0.0; 8];
        d[3] = f32::NAN;
        assert!(matches!(HsiCube::new(2, 2, 2, d), Err(Error::Numeric(_))));
    }

    #[test]
    fn projects_single_pixel_average() {
        let cube = HsiCube::new(1, 1, 3, vec![0.2, 0.4, 0.6]).unwrap();
        let srf = SrfMatrix::new(3, 1, vec![1.0 / 3.0; 3]).unwrap();
        let msi = spectral_project(&cube, &srf).unwrap();
        assert_eq!(msi.bands(), 1);
        assert!((msi.get(0, 0, 0) - 0.4).abs() < 1e-7);
    }

    #[test]
    fn identity_projection_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cube = random_cube(&mut rng, 3, 4, 6);
        let msi = spectral_project(&cube, &SrfMatrix::identity(6).unwrap()).unwrap();
        assert_eq!(msi.as_cube(), &cube);
    }

    #[test]
    fn projection_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cube = random_cube(&mut rng, 4, 5, 8);
        let raw: Vec<f64> = (0..24).map(|_| rng.gen::<f64>()).collect();
        let srf = SrfMatrix::new(8, 3, raw).unwrap();
        let msi = spectral_project(&cube, &srf).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                for m in 0..3 {
                    let mut acc = 0.0;
                    for n in 0..8 {
                        acc += f64::from(cube.get(i, j, n)) * srf.get(n, m);
                    }
                    assert!((f64::from(msi.get(i, j, m)) - acc).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn band_mismatch_is_dimension_error() {
        let cube = HsiCube::zeros(2, 2, 4);
        let srf = SrfMatrix::identity(3).unwrap();
        assert!(matches!(
            spectral_project(&cube, &srf),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn srf_rejects_negative_and_zero_columns() {
        assert!(SrfMatrix::new(2, 1, vec![1.0, -0.5]).is_err());
        assert!(SrfMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).is_err());
        let srf = SrfMatrix::new(2, 2, vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        for m in 0..2 {
            assert!((srf.column(m).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rescales_and_rejects_constants() {
        let cube = HsiCube::new(1, 3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(normalize_cube(&cube).unwrap().data(), &[0.0, 0.5, 1.0]);

        let unit = HsiCube::new(1, 3, 1, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(normalize_cube(&unit).unwrap(), unit);

        let flat = HsiCube::new(2, 2, 1, vec![0.3; 4]).unwrap();
        assert!(matches!(normalize_cube(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn crop_extracts_expected_window() {
        let cube = HsiCube::from_fn(4, 6, 2, |i, j, k| (i * 100 + j * 10 + k) as f64).unwrap();
        let c = cube.crop(1, 2, 2, 3).unwrap();
        assert_eq!(c.get(0, 0, 0), 120.0);
        assert_eq!(c.get(1, 2, 1), 241.0);
        assert!(cube.crop(3, 0, 2, 1).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_cube(&mut rng, 3, 3, 5);
            let y = random_cube(&mut rng, 3, 3, 5);
            let raw: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() + 0.01).collect();
            let srf = SrfMatrix::new(5, 2, raw).unwrap();
            let combo = HsiCube::new(3, 3, 5, x.data().iter().zip(y.data())
                .map(|(&p, &q)| (a * f64::from(p) + b * f64::from(q)) as f32).collect()).unwrap();
            let lhs = spectral_project(&combo, &srf).unwrap();
            let px = spectral_project(&x, &srf).unwrap();
            let py = spectral_project(&y, &srf).unwrap();
            for idx in 0..lhs.data().len() {
                let rhs = a * f64::from(px.data()[idx]) + b * f64::from(py.data()[idx]);
                prop_assert!((f64::from(lhs.data()[idx]) - rhs).abs() < 1e-6);
            }
        }

        #[test]
        fn normalized_srf_preserves_flat_spectra(seed in any::<u64>(), v in 0.0f32..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..21).map(|_| rng.gen::<f64>() + 0.01).collect();
            let srf = SrfMatrix::new(7, 3, raw).unwrap();
            let cube = HsiCube::new(1, 1, 7, vec![v; 7]).unwrap();
            let msi = spectral_project(&cube, &srf).unwrap();
            for &m in msi.data() {
                prop_assert!((m - v).abs() < 1e-6);
            }
        }
    }
}
