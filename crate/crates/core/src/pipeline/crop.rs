use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Train/test split of a scene along its width. The test strip sits at the
/// right edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropPolicy {
    pub test_fraction: f64,
    /// Both crops must have dimensions that are multiples of this.
    pub multiple: usize,
}

impl Default for CropPolicy {
    fn default() -> Self {
        Self::BENCHMARK
    }
}

impl CropPolicy {
    /// 25% test strip, dimensions multiples of 32.
    pub const BENCHMARK: CropPolicy = CropPolicy {
        test_fraction: 0.25,
        multiple: 32,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRegion {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRegion {
    pub fn full(cube: &HsiCube) -> Self {
        Self {
            row: 0,
            col: 0,
            height: cube.height(),
            width: cube.width(),
        }
    }

    pub fn extract(&self, cube: &HsiCube) -> Result<HsiCube> {
        cube.crop(self.row, self.col, self.height, self.width)
    }
}

/// Splits a `height × width` scene into `(train, test)` regions.
pub fn split_regions(
    height: usize,
    width: usize,
    policy: CropPolicy,
) -> Result<(CropRegion, CropRegion)> {
    let m = policy.multiple;
    if m == 0 || !(policy.test_fraction > 0.0 && policy.test_fraction < 1.0) {
        return Err(Error::param(format!("invalid crop policy {policy:?}")));
    }
    if height == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) || width < 2 * m {
        return Err(Error::dim(format!(
            "{height}x{width} scene cannot be split into crops that are multiples of {m}"
        )));
    }
    let units = width / m;
    let test_units = ((policy.test_fraction * units as f64).round() as usize).clamp(1, units - 1);
    let test_w = test_units * m;
    let train_w = width - test_w;
    Ok((
        CropRegion {
            row: 0,
            col: 0,
            height,
            width: train_w,
        },
        CropRegion {
            row: 0,
            col: train_w,
            height,
            width: test_w,
        },
    ))
}

pub fn crop_split(gt: &HsiCube, policy: CropPolicy) -> Result<(CropRegion, CropRegion)> {
    split_regions(gt.height(), gt.width(), policy)
}
