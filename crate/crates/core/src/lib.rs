//! Per-pixel spectral inversion for hyperspectral/multispectral fusion.
//!
//! A small residual MLP learns the inverse of a multispectral sensor's
//! spectral response from the low-resolution hyperspectral cube alone, then
//! lifts every high-resolution multispectral pixel to a full spectrum.
//!
//! ```
//! use specinv::{degrade, HsiCube};
//!
//! let gt = HsiCube::from_fn(8, 8, 6, |i, j, k| ((i + j + k) % 5) as f64 / 5.0).unwrap();
//! let srf = degrade::make_gaussian_srf(6, 3, 1.0).unwrap();
//! let msi = specinv::spectral_project(&gt, &srf).unwrap();
//! assert_eq!(msi.bands(), 3);
//! ```

pub mod cube;
pub mod degrade;
pub mod error;
pub mod metrics;
pub mod optim;
mod par;
pub mod pipeline;
pub mod seed;
pub mod sin;

pub use cube::{
    normalize_cube, spectral_project, HsiCube, MsiImage, PixelSpectra, PsfKernel, SrfMatrix,
};
pub use error::{Error, Result};
pub use metrics::{evaluate, MetricReport};
pub use optim::{train, TrainConfig, TrainLog};
pub use par::is_parallel;
pub use seed::derive_seed;
pub use sin::{forward, init_params, SinArch, SinParams};
