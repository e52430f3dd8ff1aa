use crate::cube::{HsiCube, PixelSpectra};
use crate::error::{Error, Result};
use crate::sin::{predict, SinParams};

fn check_bands<S: PixelSpectra + ?Sized>(params: &SinParams, hr_msi: &S) -> Result<()> {
    if hr_msi.bands() != params.in_bands {
        return Err(Error::dim(format!(
            "MSI has {} bands but the network expects {}",
            hr_msi.bands(),
            params.in_bands
        )));
    }
    Ok(())
}

fn run(params: &SinParams, inputs: Vec<f64>, h: usize, w: usize) -> Result<HsiCube> {
    let out = predict(params, &inputs)?;
    HsiCube::new(
        h,
        w,
        params.out_bands,
        out.into_iter().map(|v| v as f32).collect(),
    )
}

/// Applies the network to every pixel of the high-resolution MSI.
///
/// Values are not clipped; use [`HsiCube::clipped_unit`] before saving.
pub fn infer<S: PixelSpectra + ?Sized>(params: &SinParams, hr_msi: &S) -> Result<HsiCube> {
    check_bands(params, hr_msi)?;
    let inputs: Vec<f64> = (0..hr_msi.num_pixels())
        .flat_map(|p| hr_msi.spectrum(p).iter().map(|&v| f64::from(v)))
        .collect();
    run(params, inputs, hr_msi.height(), hr_msi.width())
}

/// Inference on a rectangular window of the MSI.
pub fn infer_window<S: PixelSpectra + ?Sized>(
    params: &SinParams,
    hr_msi: &S,
    row: usize,
    col: usize,
    height: usize,
    width: usize,
) -> Result<HsiCube> {
    check_bands(params, hr_msi)?;
    if row + height > hr_msi.height() || col + width > hr_msi.width() {
        return Err(Error::dim("inference window exceeds the image"));
    }
    let stride = hr_msi.width();
    let inputs: Vec<f64> = (row..row + height)
        .flat_map(|i| (col..col + width).map(move |j| i * stride + j))
        .flat_map(|p| hr_msi.spectrum(p).iter().map(|&v| f64::from(v)))
        .collect();
    run(params, inputs, height, width)
}

/// Inference tile by tile (`tile_h × tile_w`, edge tiles may be smaller),
/// stitched into one cube.
pub fn infer_tiled<S: PixelSpectra + ?Sized>(
    params: &SinParams,
    hr_msi: &S,
    tile_h: usize,
    tile_w: usize,
) -> Result<HsiCube> {
    if tile_h == 0 || tile_w == 0 {
        return Err(Error::param("tile dimensions must be >= 1"));
    }
    let (h, w, c) = (hr_msi.height(), hr_msi.width(), params.out_bands);
    let mut data = vec![0.0f32; h * w * c];
    for r0 in (0..h).step_by(tile_h) {
        for c0 in (0..w).step_by(tile_w) {
            let th = tile_h.min(h - r0);
            let tw = tile_w.min(w - c0);
            let tile = infer_window(params, hr_msi, r0, c0, th, tw)?;
            for i in 0..th {
                let dst = ((r0 + i) * w + c0) * c;
                data[dst..dst + tw * c].copy_from_slice(&tile.data()[i * tw * c..(i + 1) * tw * c]);
            }
        }
    }
    HsiCube::new(h, w, c, data)
}
