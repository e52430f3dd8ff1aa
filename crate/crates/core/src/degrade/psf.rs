//! Analytic point-spread-function families.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cube::PsfKernel;
use crate::error::{Error, Result};

/// Default kernel side length used by the benchmark grid.
pub const DEFAULT_KERNEL_SIZE: usize = 15;

/// The ten blur families of the benchmark grid with their shape parameters.
///
/// Widths are in pixels and measured from the kernel center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsfKind {
    Gaussian { sigma: f64 },
    Kolmogorov { alpha: f64 },
    Airy { scale: f64 },
    Moffat { alpha: f64, beta: f64 },
    Sinc { scale: f64 },
    LorentzianSquared { gamma: f64 },
    Hermite { sigma: f64 },
    Parabolic { radius: f64 },
    Gabor { sigma: f64, wavelength: f64 },
    Delta,
}

impl PsfKind {
    pub const GAUSSIAN: PsfKind = PsfKind::Gaussian { sigma: 2.5 };
    pub const KOLMOGOROV: PsfKind = PsfKind::Kolmogorov { alpha: 3.0 };
    pub const AIRY: PsfKind = PsfKind::Airy { scale: 3.0 };
    pub const MOFFAT: PsfKind = PsfKind::Moffat {
        alpha: 3.0,
        beta: 2.5,
    };
    pub const SINC: PsfKind = PsfKind::Sinc { scale: 2.5 };
    pub const LORENTZIAN_SQUARED: PsfKind = PsfKind::LorentzianSquared { gamma: 2.5 };
    pub const HERMITE: PsfKind = PsfKind::Hermite { sigma: 2.5 };
    pub const PARABOLIC: PsfKind = PsfKind::Parabolic { radius: 7.0 };
    pub const GABOR: PsfKind = PsfKind::Gabor {
        sigma: 3.0,
        wavelength: 6.0,
    };

    /// All ten families with their default parameters, in grid order.
    pub fn benchmark_set() -> [PsfKind; 10] {
        [
            Self::GAUSSIAN,
            Self::KOLMOGOROV,
            Self::AIRY,
            Self::MOFFAT,
            Self::SINC,
            Self::LORENTZIAN_SQUARED,
            Self::HERMITE,
            Self::PARABOLIC,
            Self::GABOR,
            PsfKind::Delta,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            PsfKind::Gaussian { .. } => "gaussian",
            PsfKind::Kolmogorov { .. } => "kolmogorov",
            PsfKind::Airy { .. } => "airy",
            PsfKind::Moffat { .. } => "moffat",
            PsfKind::Sinc { .. } => "sinc",
            PsfKind::LorentzianSquared { .. } => "lorentzian_squared",
            PsfKind::Hermite { .. } => "hermite",
            PsfKind::Parabolic { .. } => "parabolic",
            PsfKind::Gabor { .. } => "gabor",
            PsfKind::Delta => "delta",
        }
    }

    /// Looks up a family by name, using its default parameters.
    pub fn from_name(name: &str) -> Option<PsfKind> {
        Self::benchmark_set()
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }

    /// Families whose profile depends only on the radius.
    pub fn is_radial(&self) -> bool {
        !matches!(self, PsfKind::Hermite { .. } | PsfKind::Gabor { .. })
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!(
                    "{} PSF: {name} must be positive, got {v}",
                    self.name()
                )))
            }
        };
        match *self {
            PsfKind::Gaussian { sigma } | PsfKind::Hermite { sigma } => positive("sigma", sigma),
            PsfKind::Kolmogorov { alpha } => positive("alpha", alpha),
            PsfKind::Airy { scale } | PsfKind::Sinc { scale } => positive("scale", scale),
            PsfKind::Moffat { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            PsfKind::LorentzianSquared { gamma } => positive("gamma", gamma),
            PsfKind::Parabolic { radius } => positive("radius", radius),
            PsfKind::Gabor { sigma, wavelength } => {
                positive("sigma", sigma)?;
                positive("wavelength", wavelength)
            }
            PsfKind::Delta => Ok(()),
        }
    }

    /// Unnormalized profile at offset `(x, y)` from the center.
    fn profile(&self, x: f64, y: f64) -> f64 {
        let rho2 = x * x + y * y;
        let rho = rho2.sqrt();
        match *self {
            PsfKind::Gaussian { sigma } => (-rho2 / (2.0 * sigma * sigma)).exp(),
            PsfKind::Kolmogorov { alpha } => (-(rho / alpha).powf(5.0 / 3.0)).exp(),
            PsfKind::Airy { scale } => {
                let u = PI * rho / scale;
                if u == 0.0 {
                    1.0
                } else {
                    let a = 2.0 * libm::j1(u) / u;
                    a * a
                }
            }
            PsfKind::Moffat { alpha, beta } => (1.0 + rho2 / (alpha * alpha)).powf(-beta),
            PsfKind::Sinc { scale } => {
                let u = PI * rho / scale;
                if u == 0.0 {
                    1.0
                } else {
                    let s = u.sin() / u;
                    s * s
                }
            }
            PsfKind::LorentzianSquared { gamma } => {
                let l = 1.0 + rho2 / (gamma * gamma);
                1.0 / (l * l)
            }
            PsfKind::Hermite { sigma } => {
                let h2 = |t: f64| 4.0 * t * t - 2.0;
                let envelope = (-rho2 / (2.0 * sigma * sigma)).exp();
                (h2(x / sigma) * h2(y / sigma)).abs() * envelope
            }
            PsfKind::Parabolic { radius } => 1.0 - rho2 / (radius * radius),
            PsfKind::Gabor { sigma, wavelength } => {
                let envelope = (-rho2 / (2.0 * sigma * sigma)).exp();
                envelope * (2.0 * PI * x / wavelength).cos().abs()
            }
            PsfKind::Delta => {
                if rho2 == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for PsfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Samples `kind` on a `size × size` grid, rectifies negatives to zero and
/// normalizes to unit sum.
pub fn make_psf(kind: PsfKind, size: usize) -> Result<PsfKernel> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::param(format!(
            "PSF size must be odd and >= 1, got {size}"
        )));
    }
    kind.validate()?;
    let half = (size / 2) as f64;
    let mut weights = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let y = i as f64 - half;
            let x = j as f64 - half;
            weights.push(kind.profile(x, y).max(0.0));
        }
    }
    PsfKernel::from_weights(size, weights)
}
