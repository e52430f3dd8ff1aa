use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GridEntry};
use super::crop::{crop_split, CropRegion};
use super::infer::{infer, infer_window};
use super::report::{Manifest, ResultRow, ResultTable, RowKey};
use crate::cube::{normalize_cube, HsiCube};
use crate::degrade::{wald_degrade, PsfKind};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::optim::{train, ScheduleKind, TrainConfig};
use crate::sin::{Activation, LossKind, SinArch};

/// Outcome of one degrade → train → infer → evaluate run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reconstruction: HsiCube,
    pub test_region: CropRegion,
    pub row: ResultRow,
}

/// Compares whole-image inference with window inference across the tile
/// corner nearest the image center.
fn check_seam(
    params: &crate::sin::SinParams,
    msi: &crate::cube::MsiImage,
    whole: &HsiCube,
    tile: usize,
) -> Result<()> {
    let (h, w) = (msi.height(), msi.width());
    let r0 = ((h / 2) / tile * tile).max(1).min(h) - 1;
    let c0 = ((w / 2) / tile * tile).max(1).min(w) - 1;
    let (th, tw) = (2.min(h - r0), 2.min(w - c0));
    let window = infer_window(params, msi, r0, c0, th, tw)?;
    if window != whole.crop(r0, c0, th, tw)? {
        return Err(Error::Numeric(format!(
            "tiled inference differs from whole-image inference at ({r0}, {c0})"
        )));
    }
    Ok(())
}

fn row_key(
    cfg: &ExperimentConfig,
    entry: &GridEntry,
    variant: &str,
    arch: SinArch,
    bands: usize,
) -> RowKey {
    RowKey {
        config_id: entry.config_id.clone(),
        scene: cfg.scene.clone(),
        variant: variant.to_string(),
        psf: entry.spec.psf.name().to_string(),
        r: entry.spec.r,
        b: entry.msi_bands,
        hsi_snr_db: entry.spec.hsi_snr_db,
        msi_snr_db: entry.spec.msi_snr_db,
        seed: entry.spec.seed,
        params: arch.param_count(entry.msi_bands, bands),
        test_region: None,
    }
}

/// Runs one configuration. Training sees only the LR-HSI; inference sees
/// only the HR-MSI.
pub fn run_entry(
    cfg: &ExperimentConfig,
    gt: &HsiCube,
    entry: &GridEntry,
    variant: &str,
    arch: SinArch,
    train_cfg: &TrainConfig,
) -> Result<RunOutput> {
    let (_, test) = crop_split(gt, cfg.crop)?;
    let (lr_hsi, hr_msi) = wald_degrade(gt, &entry.spec)?;
    let (params, log) = train(&lr_hsi, &entry.spec.srf, arch, train_cfg)?;
    let recon = infer(&params, &hr_msi)?;
    check_seam(&params, &hr_msi, &recon, cfg.check_tile)?;
    let recon = recon.clipped_unit();
    let report = evaluate(
        &test.extract(gt)?,
        &test.extract(&recon)?,
        entry.spec.r as f64,
        cfg.max_value,
    )?;
    let mut key = row_key(cfg, entry, variant, arch, gt.bands());
    key.test_region = Some(test);
    Ok(RunOutput {
        reconstruction: recon,
        test_region: test,
        row: ResultRow::success(key, &report, log.final_loss()),
    })
}

/// Loads and, if requested, normalizes the configured ground truth.
pub fn load_ground_truth(cfg: &ExperimentConfig) -> Result<HsiCube> {
    let path = cfg
        .gt_path
        .as_ref()
        .ok_or_else(|| Error::param("config has no gt_path"))?;
    let gt = super::cubefile::load_cube(path)?;
    if cfg.normalize_gt {
        normalize_cube(&gt)
    } else {
        Ok(gt)
    }
}

struct Job {
    entry: GridEntry,
    variant: String,
    arch: SinArch,
    train: TrainConfig,
}

fn run_jobs(cfg: &ExperimentConfig, gt: &HsiCube, jobs: &[Job]) -> Result<Vec<ResultRow>> {
    let run = |i: usize| {
        let job = &jobs[i];
        log::info!(
            "[{}/{}] {} {}",
            i + 1,
            jobs.len(),
            job.variant,
            job.entry.config_id
        );
        match run_entry(cfg, gt, &job.entry, &job.variant, job.arch, &job.train) {
            Ok(out) => out.row,
            Err(e) => {
                log::warn!("{} {} failed: {e}", job.variant, job.entry.config_id);
                let mut key = row_key(cfg, &job.entry, &job.variant, job.arch, gt.bands());
                key.test_region = crop_split(gt, cfg.crop).ok().map(|(_, t)| t);
                ResultRow::failure(key, e)
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::param(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(|| crate::par::map_indexed(jobs.len(), run)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok((0..jobs.len()).map(run).collect())
    }
}

fn check_scene(cfg: &ExperimentConfig, gt: &HsiCube) -> Result<()> {
    cfg.validate()?;
    crop_split(gt, cfg.crop).map(|_| ())
}

/// Runs every configuration of the grid on `gt`. Failures become rows with
/// `status = "failed"`; the grid always completes.
pub fn run_grid(cfg: &ExperimentConfig, gt: &HsiCube) -> Result<ResultTable> {
    check_scene(cfg, gt)?;
    let jobs: Vec<Job> = cfg
        .resolve(gt.bands())?
        .into_iter()
        .map(|entry| Job {
            train: cfg.train_config_for(entry.spec.seed),
            entry,
            variant: "baseline".into(),
            arch: cfg.arch,
        })
        .collect();
    Ok(ResultTable::assemble(run_jobs(cfg, gt, &jobs)?))
}

/// A named change to the baseline architecture or training setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub arch: SinArch,
    pub loss: LossKind,
    /// `false` trains at the schedule's peak rate throughout.
    pub scheduler: bool,
}

/// The fourteen ablation variants, baseline first.
pub fn ablation_variants(base: SinArch) -> Vec<AblationVariant> {
    let v = |name: &str, arch: SinArch, loss: LossKind, scheduler: bool| AblationVariant {
        name: name.into(),
        arch,
        loss,
        scheduler,
    };
    let with = |f: &dyn Fn(&mut SinArch)| {
        let mut a = base;
        f(&mut a);
        a
    };
    vec![
        v("baseline", base, LossKind::L1, true),
        v("no_skip", with(&|a| a.skip = false), LossKind::L1, true),
        v("no_scheduler", base, LossKind::L1, false),
        v("mse_loss", base, LossKind::Mse, true),
        v("cosine_loss", base, LossKind::CosineSimilarity, true),
        v(
            "relu",
            with(&|a| a.activation = Activation::Relu),
            LossKind::L1,
            true,
        ),
        v(
            "gelu",
            with(&|a| a.activation = Activation::Gelu),
            LossKind::L1,
            true,
        ),
        v(
            "hidden_8",
            with(&|a| a.hidden_layers = 8),
            LossKind::L1,
            true,
        ),
        v(
            "hidden_4",
            with(&|a| a.hidden_layers = 4),
            LossKind::L1,
            true,
        ),
        v(
            "hidden_2",
            with(&|a| a.hidden_layers = 2),
            LossKind::L1,
            true,
        ),
        v(
            "hidden_1",
            with(&|a| a.hidden_layers = 1),
            LossKind::L1,
            true,
        ),
        v("width_32", with(&|a| a.width = 32), LossKind::L1, true),
        v("width_128", with(&|a| a.width = 128), LossKind::L1, true),
        v("linear_map", SinArch::linear(), LossKind::L1, true),
    ]
}

fn max_lr(schedule: &ScheduleKind) -> f64 {
    match *schedule {
        ScheduleKind::OneCycle { max_lr, .. } | ScheduleKind::CosineRestarts { max_lr, .. } => {
            max_lr
        }
        ScheduleKind::Constant { lr } => lr,
    }
}

/// Runs all ablation variants over the Gaussian-PSF configurations of the
/// grid. Each variant's mean row carries its mean parameter count.
pub fn run_ablation(cfg: &ExperimentConfig, gt: &HsiCube) -> Result<ResultTable> {
    check_scene(cfg, gt)?;
    let entries: Vec<GridEntry> = cfg
        .resolve(gt.bands())?
        .into_iter()
        .filter(|e| matches!(e.spec.psf, PsfKind::Gaussian { .. }))
        .collect();
    if entries.is_empty() {
        return Err(Error::param(
            "ablation needs at least one Gaussian-PSF configuration",
        ));
    }
    let mut jobs = Vec::new();
    for variant in ablation_variants(cfg.arch) {
        for entry in &entries {
            let mut train = cfg.train_config_for(entry.spec.seed);
            train.loss = variant.loss;
            if !variant.scheduler {
                train.schedule = ScheduleKind::Constant {
                    lr: max_lr(&train.schedule),
                };
            }
            jobs.push(Job {
                entry: entry.clone(),
                variant: variant.name.clone(),
                arch: variant.arch,
                train,
            });
        }
    }
    Ok(ResultTable::assemble(run_jobs(cfg, gt, &jobs)?))
}

/// Manifest for a grid or ablation run, listing each configuration's seed.
pub fn grid_manifest(command: &str, cfg: &ExperimentConfig, bands: usize) -> Result<Manifest> {
    let mut m = Manifest::new(command, cfg.seed, cfg)?;
    m.seeds = cfg
        .resolve(bands)?
        .into_iter()
        .map(|e| (e.config_id, e.spec.seed))
        .collect();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::{GridSpec, SpecTemplate};
    use crate::pipeline::crop::CropPolicy;

    fn smooth_gt(h: usize, w: usize, c: usize) -> HsiCube {
        HsiCube::from_fn(h, w, c, |i, j, k| {
            let a = (i as f64 / h as f64 + j as f64 / w as f64) / 2.0;
            0.2 + 0.6 * (a * (1.0 + k as f64 / c as f64)).fract()
        })
        .unwrap()
    }

    fn tiny_cfg(specs: Vec<SpecTemplate>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            grid: GridSpec::Custom { specs },
            crop: CropPolicy {
                test_fraction: 0.25,
                multiple: 8,
            },
            strict: true,
            workers: 2,
            check_tile: 8,
            ..Default::default()
        };
        cfg.arch.width = 8;
        cfg.arch.hidden_layers = 2;
        cfg.train.epochs = 2;
        cfg.train.batch_size = 16;
        cfg
    }

    fn template(psf: PsfKind, r: usize) -> SpecTemplate {
        SpecTemplate {
            psf,
            kernel_size: 5,
            r,
            hsi_snr_db: 30.0,
            msi_bands: 3,
            msi_snr_db: 40.0,
            fwhm_scale: 1.0,
        }
    }

    #[test]
    fn failures_are_recorded_and_grid_continues() {
        // r = 5 does not divide 32.
        let cfg = tiny_cfg(vec![
            template(PsfKind::GAUSSIAN, 4),
            template(PsfKind::GAUSSIAN, 5),
        ]);
        let t = run_grid(&cfg, &smooth_gt(32, 32, 6)).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows[0].is_ok(), "{}", t.rows[0].error);
        assert!(!t.rows[1].is_ok());
        assert!(!t.rows[1].error.is_empty());
        assert_eq!((t.rows[0].test_col, t.rows[0].test_width), (24, 8));
    }

    #[test]
    fn strict_runs_are_identical() {
        let cfg = tiny_cfg(vec![
            template(PsfKind::GAUSSIAN, 4),
            template(PsfKind::AIRY, 2),
        ]);
        let gt = smooth_gt(32, 32, 6);
        let a = run_grid(&cfg, &gt).unwrap();
        let b = run_grid(&cfg, &gt).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn ablation_has_fourteen_variants() {
        let variants = ablation_variants(SinArch::default());
        assert_eq!(variants.len(), 14);
        let mut names: Vec<_> = variants.iter().map(|v| v.name.clone()).collect();
        names.dedup();
        assert_eq!(names.len(), 14);
        let cfg = tiny_cfg(vec![
            template(PsfKind::GAUSSIAN, 4),
            template(PsfKind::AIRY, 4),
        ]);
        let t = run_ablation(&cfg, &smooth_gt(32, 32, 6)).unwrap();
        assert_eq!(t.means.len(), 14);
        assert_eq!(t.rows.len(), 14);
        let linear = t.mean_for("linear_map").unwrap();
        assert!((linear.params_m * 1e6 - (3.0 * 6.0 + 6.0)).abs() < 1e-9);
    }

    #[test]
    fn ablation_without_gaussian_fails() {
        let cfg = tiny_cfg(vec![template(PsfKind::AIRY, 4)]);
        assert!(run_ablation(&cfg, &smooth_gt(32, 32, 6)).is_err());
    }
}
