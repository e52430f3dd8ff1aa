use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::crop::CropPolicy;
use crate::degrade::{
    benchmark_grid, load_srf_csv, make_gaussian_srf, snr_db, DegradationSpec, PsfKind,
    DEFAULT_FWHM_SCALE, DEFAULT_KERNEL_SIZE, DEFAULT_MSI_SNR_DB,
};
use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::seed::derive_seed;
use crate::sin::SinArch;

/// A degradation with the SRF given by its band count rather than by value,
/// so the same template works for any ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecTemplate {
    pub psf: PsfKind,
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    pub r: usize,
    #[serde(with = "snr_db")]
    pub hsi_snr_db: f64,
    pub msi_bands: usize,
    #[serde(with = "snr_db", default = "default_msi_snr")]
    pub msi_snr_db: f64,
    #[serde(default = "default_fwhm")]
    pub fwhm_scale: f64,
}

fn default_kernel_size() -> usize {
    DEFAULT_KERNEL_SIZE
}

fn default_msi_snr() -> f64 {
    DEFAULT_MSI_SNR_DB
}

fn default_fwhm() -> f64 {
    DEFAULT_FWHM_SCALE
}

/// Which degradations to run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// The built-in 80-configuration grid.
    #[default]
    Benchmark,
    Custom {
        specs: Vec<SpecTemplate>,
    },
}

/// One entry of a resolved grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridEntry {
    pub config_id: String,
    pub msi_bands: usize,
    pub spec: DegradationSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: String,
    pub gt_path: Option<PathBuf>,
    /// Scale the ground truth to [0, 1] before degrading.
    pub normalize_gt: bool,
    pub grid: GridSpec,
    /// Replaces the generated Gaussian SRFs when set. Headerless CSV, one row
    /// per HSI band.
    pub srf_path: Option<PathBuf>,
    pub arch: SinArch,
    pub train: TrainConfig,
    pub crop: CropPolicy,
    pub max_value: f64,
    pub seed: u64,
    /// Concurrent configurations; 0 uses every available core.
    pub workers: usize,
    pub strict: bool,
    pub out_dir: PathBuf,
    /// Edge length of the tiles used by the per-run seam check.
    pub check_tile: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: "scene".into(),
            gt_path: None,
            normalize_gt: false,
            grid: GridSpec::Benchmark,
            srf_path: None,
            arch: SinArch::default(),
            train: TrainConfig::default(),
            crop: CropPolicy::BENCHMARK,
            max_value: 1.0,
            seed: 0,
            workers: 0,
            strict: false,
            out_dir: PathBuf::from("out"),
            check_tile: 32,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.max_value > 0.0 && self.max_value.is_finite()) {
            return Err(Error::param("max_value must be positive and finite"));
        }
        if self.check_tile == 0 {
            return Err(Error::param("check_tile must be >= 1"));
        }
        if matches!(self.grid, GridSpec::Benchmark) && !self.crop.multiple.is_multiple_of(32) {
            return Err(Error::param(
                "the benchmark grid requires crop multiples of 32",
            ));
        }
        if let GridSpec::Custom { specs } = &self.grid {
            if specs.is_empty() {
                return Err(Error::param("custom grid has no specs"));
            }
        }
        Ok(())
    }

    /// Training settings for one configuration: the experiment seed and
    /// strict flag override the nested ones.
    pub fn train_config_for(&self, entry_seed: u64) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(entry_seed, 3),
            strict: self.strict || self.train.strict,
            ..self.train.clone()
        }
    }

    /// Expands the grid for a ground truth with `bands` bands.
    pub fn resolve(&self, bands: usize) -> Result<Vec<GridEntry>> {
        let custom_srf = match &self.srf_path {
            Some(p) => {
                let srf = load_srf_csv(p)?;
                if srf.rows() != bands {
                    return Err(Error::dim(format!(
                        "SRF file has {} rows but the scene has {bands} bands",
                        srf.rows()
                    )));
                }
                Some(srf)
            }
            None => None,
        };
        let mut specs = match &self.grid {
            GridSpec::Benchmark => benchmark_grid(bands, self.seed)?,
            GridSpec::Custom { specs } => specs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Ok(DegradationSpec {
                        psf: t.psf,
                        kernel_size: t.kernel_size,
                        r: t.r,
                        hsi_snr_db: t.hsi_snr_db,
                        srf: make_gaussian_srf(bands, t.msi_bands, t.fwhm_scale)?,
                        msi_snr_db: t.msi_snr_db,
                        seed: derive_seed(self.seed, i as u64),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if let Some(srf) = custom_srf {
            for s in &mut specs {
                s.srf = srf.clone();
            }
        }
        Ok(specs
            .into_iter()
            .enumerate()
            .map(|(i, spec)| {
                let b = spec.srf.cols();
                GridEntry {
                    config_id: format!("{i:03}-{}-r{}-b{b}", spec.psf.name(), spec.r),
                    msi_bands: b,
                    spec,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_all_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.train.epochs, 500);
        assert_eq!(cfg.crop, CropPolicy::BENCHMARK);
    }

    #[test]
    fn benchmark_resolves_to_80_unique_ids() {
        let entries = ExperimentConfig::default().resolve(31).unwrap();
        assert_eq!(entries.len(), 80);
        let mut ids: Vec<_> = entries.iter().map(|e| e.config_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 80);
        assert_eq!(entries[0].config_id, "000-gaussian-r4-b4");
    }

    #[test]
    fn custom_grid_parses() {
        let text = r#"{
            "grid": {"kind": "custom", "specs": [
                {"psf": {"kind": "gaussian", "sigma": 2.5}, "r": 4, "hsi_snr_db": 35, "msi_bands": 4},
                {"psf": {"kind": "delta"}, "r": 1, "hsi_snr_db": null, "msi_bands": 8, "msi_snr_db": null}
            ]},
            "crop": {"multiple": 16},
            "train": {"epochs": 3}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 1024);
        assert_eq!(cfg.crop.test_fraction, 0.25);
        let entries = cfg.resolve(8).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(entries[1].spec.hsi_snr_db.is_infinite());
        assert_eq!(entries[1].msi_bands, 8);
    }

    #[test]
    fn benchmark_rejects_non_32_crop() {
        let mut cfg = ExperimentConfig::default();
        cfg.crop.multiple = 16;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn strict_flag_propagates() {
        let cfg = ExperimentConfig {
            strict: true,
            ..Default::default()
        };
        let a = cfg.train_config_for(1);
        assert!(a.strict);
        assert_ne!(a.seed, cfg.train_config_for(2).seed);
    }
}
