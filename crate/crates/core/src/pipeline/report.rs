use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::crop::CropRegion;
use crate::error::Result;
use crate::metrics::MetricReport;

/// One configuration's outcome. Flat so it maps to a CSV row.
///
/// Contains nothing time-dependent: two strict runs of the same config
/// produce identical rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_id: String,
    pub scene: String,
    pub method: String,
    pub variant: String,
    pub psf: String,
    pub r: usize,
    pub b: usize,
    pub hsi_snr_db: Option<f64>,
    pub msi_snr_db: Option<f64>,
    pub seed: u64,
    pub params: usize,
    pub test_row: usize,
    pub test_col: usize,
    pub test_height: usize,
    pub test_width: usize,
    pub final_train_loss: Option<f64>,
    pub rmse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub uiqi: Option<f64>,
    pub ergas: Option<f64>,
    pub sam_deg: Option<f64>,
    pub status: String,
    pub error: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn snr(v: f64) -> Option<f64> {
    finite(v)
}

/// Inputs describing a configuration, shared by successful and failed rows.
#[derive(Clone, Debug)]
pub struct RowKey {
    pub config_id: String,
    pub scene: String,
    pub variant: String,
    pub psf: String,
    pub r: usize,
    pub b: usize,
    pub hsi_snr_db: f64,
    pub msi_snr_db: f64,
    pub seed: u64,
    pub params: usize,
    pub test_region: Option<CropRegion>,
}

impl ResultRow {
    fn base(key: RowKey) -> Self {
        let t = key.test_region.unwrap_or(CropRegion {
            row: 0,
            col: 0,
            height: 0,
            width: 0,
        });
        Self {
            config_id: key.config_id,
            scene: key.scene,
            method: "sin".into(),
            variant: key.variant,
            psf: key.psf,
            r: key.r,
            b: key.b,
            hsi_snr_db: snr(key.hsi_snr_db),
            msi_snr_db: snr(key.msi_snr_db),
            seed: key.seed,
            params: key.params,
            test_row: t.row,
            test_col: t.col,
            test_height: t.height,
            test_width: t.width,
            final_train_loss: None,
            rmse: None,
            psnr_db: None,
            ssim: None,
            uiqi: None,
            ergas: None,
            sam_deg: None,
            status: String::new(),
            error: String::new(),
        }
    }

    pub fn success(key: RowKey, report: &MetricReport, final_loss: Option<f64>) -> Self {
        Self {
            final_train_loss: final_loss,
            rmse: Some(report.rmse),
            // An exact reconstruction has infinite PSNR; stored as empty.
            psnr_db: finite(report.psnr_db),
            ssim: Some(report.ssim),
            uiqi: Some(report.uiqi),
            ergas: Some(report.ergas),
            sam_deg: Some(report.sam_deg),
            status: "ok".into(),
            ..Self::base(key)
        }
    }

    pub fn failure(key: RowKey, error: impl ToString) -> Self {
        Self {
            status: "failed".into(),
            error: error.to_string(),
            ..Self::base(key)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Arithmetic means over the successful rows of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub variant: String,
    pub configs: usize,
    pub failed: usize,
    /// Mean parameter count in millions over the variant's configurations.
    pub params_m: f64,
    pub rmse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub uiqi: Option<f64>,
    pub ergas: Option<f64>,
    pub sam_deg: Option<f64>,
}

fn mean_of(rows: &[&ResultRow], f: impl Fn(&ResultRow) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

impl MeanRow {
    pub fn from_rows(variant: &str, rows: &[&ResultRow]) -> Self {
        let ok: Vec<&ResultRow> = rows.iter().copied().filter(|r| r.is_ok()).collect();
        let params_m = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.params as f64).sum::<f64>() / rows.len() as f64 / 1e6
        };
        Self {
            variant: variant.to_string(),
            configs: rows.len(),
            failed: rows.len() - ok.len(),
            params_m,
            rmse: mean_of(&ok, |r| r.rmse),
            psnr_db: mean_of(&ok, |r| r.psnr_db),
            ssim: mean_of(&ok, |r| r.ssim),
            uiqi: mean_of(&ok, |r| r.uiqi),
            ergas: mean_of(&ok, |r| r.ergas),
            sam_deg: mean_of(&ok, |r| r.sam_deg),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub means: Vec<MeanRow>,
}

impl ResultTable {
    /// Builds the table, sorting rows by `(variant order, config_id)` and
    /// computing one mean row per variant in first-seen order.
    pub fn assemble(mut rows: Vec<ResultRow>) -> Self {
        let mut variants: Vec<String> = Vec::new();
        for r in &rows {
            if !variants.contains(&r.variant) {
                variants.push(r.variant.clone());
            }
        }
        rows.sort_by(|a, b| {
            let va = variants.iter().position(|v| *v == a.variant);
            let vb = variants.iter().position(|v| *v == b.variant);
            va.cmp(&vb).then_with(|| a.config_id.cmp(&b.config_id))
        });
        let means = variants
            .iter()
            .map(|v| {
                let subset: Vec<&ResultRow> = rows.iter().filter(|r| &r.variant == v).collect();
                MeanRow::from_rows(v, &subset)
            })
            .collect();
        Self { rows, means }
    }

    pub fn mean_for(&self, variant: &str) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.variant == variant)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        Ok(String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())
    }

    pub fn means_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.means {
            w.serialize(m)?;
        }
        Ok(String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Markdown summary of the mean rows.
    pub fn summary_markdown(&self) -> String {
        let fmt = |v: Option<f64>, p: usize| v.map_or("n/a".to_string(), |x| format!("{x:.p$}"));
        let mut s = String::from(
            "| variant | configs | failed | params (M) | RMSE | PSNR (dB) | SSIM | UIQI | ERGAS | SAM (deg) |\n\
             |---|---|---|---|---|---|---|---|---|---|\n",
        );
        for m in &self.means {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} | {} | {} | {} | {} | {} | {} |",
                m.variant,
                m.configs,
                m.failed,
                m.params_m,
                fmt(m.rmse, 5),
                fmt(m.psnr_db, 2),
                fmt(m.ssim, 4),
                fmt(m.uiqi, 4),
                fmt(m.ergas, 3),
                fmt(m.sam_deg, 3),
            );
        }
        s
    }

    /// Writes `results.csv`, `means.csv`, `results.json` and `summary.md`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.rows_csv()?)?;
        fs::write(dir.join("means.csv"), self.means_csv()?)?;
        fs::write(dir.join("results.json"), self.to_json()?)?;
        fs::write(dir.join("summary.md"), self.summary_markdown())?;
        Ok(())
    }

    pub const FILES: [&'static str; 4] = ["results.csv", "means.csv", "results.json", "summary.md"];
}

/// Provenance written beside every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parallel: bool,
    pub seed: u64,
    /// Per-configuration seeds, in config order.
    pub seeds: Vec<(String, u64)>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: "specinv".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            parallel: crate::par::is_parallel(),
            seed,
            seeds: Vec::new(),
            config: serde_json::to_value(config)?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(id: &str, variant: &str) -> RowKey {
        RowKey {
            config_id: id.into(),
            scene: "s".into(),
            variant: variant.into(),
            psf: "gaussian".into(),
            r: 4,
            b: 4,
            hsi_snr_db: 35.0,
            msi_snr_db: f64::INFINITY,
            seed: 1,
            params: 1000,
            test_region: None,
        }
    }

    fn report(rmse: f64, psnr: f64) -> MetricReport {
        MetricReport {
            rmse,
            psnr_db: psnr,
            ssim: 0.9,
            uiqi: 0.8,
            ergas: 1.0,
            sam_deg: 2.0,
            r_ratio: 4.0,
            max_value: 1.0,
            ssim_c1: 1e-4,
            ssim_c2: 9e-4,
            sam_eps: 1e-8,
            sam_delta: 1e-9,
            support: Default::default(),
            uiqi_skipped_bands: vec![],
            ergas_skipped_bands: vec![],
        }
    }

    #[test]
    fn means_are_arithmetic_and_skip_failures() {
        let rows = vec![
            ResultRow::success(key("b", "base"), &report(0.2, 20.0), None),
            ResultRow::failure(key("c", "base"), "boom"),
            ResultRow::success(key("a", "base"), &report(0.1, 30.0), Some(0.5)),
        ];
        let t = ResultTable::assemble(rows);
        assert_eq!(t.rows[0].config_id, "a");
        let m = t.mean_for("base").unwrap();
        assert_eq!((m.configs, m.failed), (3, 1));
        assert!((m.rmse.unwrap() - 0.15).abs() < 1e-15);
        assert!((m.psnr_db.unwrap() - 25.0).abs() < 1e-12);
        assert!((m.params_m - 0.001).abs() < 1e-15);
        assert_eq!(t.failures(), 1);
    }

    #[test]
    fn assembly_is_order_independent() {
        let mk = |ids: &[&str]| {
            ResultTable::assemble(
                ids.iter()
                    .map(|id| ResultRow::success(key(id, "v"), &report(0.1, 20.0), None))
                    .collect(),
            )
        };
        assert_eq!(mk(&["x", "y", "z"]), mk(&["z", "x", "y"]));
    }

    #[test]
    fn serializations_round_trip() {
        let t = ResultTable::assemble(vec![
            ResultRow::success(key("a", "v"), &report(0.0, f64::INFINITY), None),
            ResultRow::failure(key("b", "v"), "bad, \"quoted\""),
        ]);
        assert_eq!(ResultTable::from_json(&t.to_json().unwrap()).unwrap(), t);
        let csv = t.rows_csv().unwrap();
        assert!(csv.starts_with("config_id,scene,method,variant"));
        assert_eq!(csv.lines().count(), 3);
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        let back: Vec<ResultRow> = rd
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(back, t.rows);
        assert!(t.summary_markdown().contains("| v | 2 | 1 |"));
    }
}
