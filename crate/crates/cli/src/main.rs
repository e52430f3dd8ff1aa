use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use specinv::degrade::{self, DegradationSpec, PsfKind};
use specinv::metrics::{evaluate_with, MetricReport, StatSupport};
use specinv::pipeline::{self, crop_split, ExperimentConfig, Manifest, ResultTable};
use specinv::sin;
use specinv::{HsiCube, MsiImage, SrfMatrix};

#[derive(Parser)]
#[command(
    name = "specinv",
    version,
    about = "Self-supervised spectral inversion for HSI/MSI fusion"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON); missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent grid configurations (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Bit-reproducible gradient reduction.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an LR-HSI / HR-MSI pair from a ground-truth cube.
    Degrade(DegradeArgs),
    /// Train a network on an LR-HSI and its SRF.
    Train {
        #[arg(long)]
        lr_hsi: PathBuf,
        #[arg(long)]
        srf: PathBuf,
    },
    /// Reconstruct an HR-HSI from an HR-MSI.
    Infer {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        msi: PathBuf,
        /// Process in square tiles of this size.
        #[arg(long)]
        tile: Option<usize>,
    },
    /// Compare a reconstruction against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        /// Spatial ratio used by ERGAS.
        #[arg(long, default_value_t = 4)]
        r: usize,
        /// Evaluate the whole image instead of the test crop.
        #[arg(long)]
        full: bool,
        /// Windowed SSIM/UIQI with this window size.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Run the configured degradation grid.
    Grid {
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Run the ablation variants over the Gaussian-PSF configurations.
    Ablate {
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Summarize a results.json file.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
    /// Convert a flat raw array with a JSON sidecar into a cube file.
    Import {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "gaussian")]
    psf: String,
    #[arg(long, default_value_t = degrade::DEFAULT_KERNEL_SIZE)]
    kernel_size: usize,
    #[arg(long, default_value_t = 4)]
    r: usize,
    /// HSI SNR in dB; defaults to the value paired with `r`, "none" disables noise.
    #[arg(long)]
    hsi_snr: Option<String>,
    #[arg(long, default_value = "40")]
    msi_snr: String,
    #[arg(long, default_value_t = 4)]
    msi_bands: usize,
    /// SRF CSV overriding the generated Gaussian response.
    #[arg(long)]
    srf: Option<PathBuf>,
}

fn parse_snr(s: &str) -> Result<f64> {
    if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("inf") {
        Ok(f64::INFINITY)
    } else {
        s.parse().with_context(|| format!("invalid SNR {s:?}"))
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if g.strict {
        cfg.strict = true;
        cfg.train.strict = true;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn manifest(command: &str, cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<Manifest> {
    let mut m = Manifest::new(command, cfg.seed, cfg)?;
    if let serde_json::Value::Object(map) = &mut m.config {
        map.insert("invocation".into(), extra);
    }
    Ok(m)
}

fn cmd_degrade(cfg: &ExperimentConfig, a: &DegradeArgs) -> Result<()> {
    let mut gt = pipeline::load_cube(&a.gt)?;
    if cfg.normalize_gt {
        gt = specinv::normalize_cube(&gt)?;
    }
    let psf = PsfKind::from_name(&a.psf).with_context(|| format!("unknown PSF {:?}", a.psf))?;
    let hsi_snr_db = match &a.hsi_snr {
        Some(s) => parse_snr(s)?,
        None => degrade::paired_hsi_snr(a.r).unwrap_or(f64::INFINITY),
    };
    let srf = match &a.srf {
        Some(p) => degrade::load_srf_csv(p)?,
        None => degrade::make_gaussian_srf(gt.bands(), a.msi_bands, degrade::DEFAULT_FWHM_SCALE)?,
    };
    let spec = DegradationSpec {
        psf,
        kernel_size: a.kernel_size,
        r: a.r,
        hsi_snr_db,
        srf,
        msi_snr_db: parse_snr(&a.msi_snr)?,
        seed: cfg.seed,
    };
    let (lr, msi) = degrade::wald_degrade(&gt, &spec)?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    pipeline::save_cube(&lr, out.join("lr_hsi.slc"))?;
    pipeline::save_cube(msi.as_cube(), out.join("hr_msi.slc"))?;
    degrade::write_srf_csv(&spec.srf, fs::File::create(out.join("srf.csv"))?)?;
    let mut m = manifest("degrade", cfg, serde_json::to_value(&spec)?)?;
    m.seeds.push(("degrade".into(), spec.seed));
    m.write(out)?;
    println!(
        "lr_hsi {}x{}x{}, hr_msi {}x{}x{} -> {}",
        lr.height(),
        lr.width(),
        lr.bands(),
        msi.height(),
        msi.width(),
        msi.bands(),
        out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, lr_hsi: &Path, srf_path: &Path) -> Result<()> {
    let lr = pipeline::load_cube(lr_hsi)?;
    let srf: SrfMatrix = degrade::load_srf_csv(srf_path)?;
    let (params, log) = specinv::train(&lr, &srf, cfg.arch, &cfg.train)?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    sin::save_params(&params, out.join("params.sinp"))?;
    log.write_csv(fs::File::create(out.join("train_log.csv"))?)?;
    let mut m = manifest(
        "train",
        cfg,
        serde_json::json!({"lr_hsi": lr_hsi, "srf": srf_path}),
    )?;
    m.seeds.push(("train".into(), cfg.train.seed));
    m.write(out)?;
    println!(
        "{} parameters, final loss {:.6e} after {} epochs",
        params.param_count(),
        log.final_loss().unwrap_or(f64::NAN),
        log.records.len()
    );
    Ok(())
}

fn cmd_infer(cfg: &ExperimentConfig, params: &Path, msi: &Path, tile: Option<usize>) -> Result<()> {
    let params = sin::load_params(params)?;
    let msi = MsiImage::from_cube(pipeline::load_cube(msi)?);
    let recon = match tile {
        Some(t) => pipeline::infer_tiled(&params, &msi, t, t)?,
        None => pipeline::infer(&params, &msi)?,
    };
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    pipeline::save_cube(&recon.clipped_unit(), out.join("recon.slc"))?;
    manifest("infer", cfg, serde_json::json!({"tile": tile}))?.write(out)?;
    println!(
        "reconstruction {}x{}x{}",
        recon.height(),
        recon.width(),
        recon.bands()
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    region: pipeline::CropRegion,
    report: MetricReport,
}

fn cmd_evaluate(
    cfg: &ExperimentConfig,
    gt: &Path,
    recon: &Path,
    r: usize,
    full: bool,
    window: Option<usize>,
) -> Result<()> {
    let gt: HsiCube = pipeline::load_cube(gt)?;
    let recon = pipeline::load_cube(recon)?;
    let region = if full {
        pipeline::CropRegion::full(&gt)
    } else {
        crop_split(&gt, cfg.crop)?.1
    };
    let support = window.map_or(StatSupport::Global, |size| StatSupport::Windowed { size });
    let report = evaluate_with(
        &region.extract(&gt)?,
        &region.extract(&recon)?,
        r as f64,
        cfg.max_value,
        support,
    )?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("metrics.json"),
        &Evaluation {
            region,
            report: report.clone(),
        },
    )?;
    manifest("evaluate", cfg, serde_json::json!({"r": r, "full": full}))?.write(out)?;
    println!(
        "RMSE {:.5}  PSNR {:.2} dB  SSIM {:.4}  UIQI {:.4}  ERGAS {:.3}  SAM {:.3} deg",
        report.rmse, report.psnr_db, report.ssim, report.uiqi, report.ergas, report.sam_deg
    );
    Ok(())
}

fn cmd_table(cfg: &mut ExperimentConfig, gt: Option<PathBuf>, ablate: bool) -> Result<()> {
    if gt.is_some() {
        cfg.gt_path = gt;
    }
    let scene = pipeline::load_ground_truth(cfg)?;
    let command = if ablate { "ablate" } else { "grid" };
    let table = if ablate {
        pipeline::run_ablation(cfg, &scene)?
    } else {
        pipeline::run_grid(cfg, &scene)?
    };
    table.write_all(&cfg.out_dir)?;
    pipeline::grid_manifest(command, cfg, scene.bands())?.write(&cfg.out_dir)?;
    print!("{}", table.summary_markdown());
    if table.failures() > 0 {
        eprintln!(
            "{} configuration(s) failed; see results.csv",
            table.failures()
        );
    }
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig, input: &Path) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let table = ResultTable::from_json(&text)?;
    // Recompute means from the rows so edited tables stay consistent.
    let table = ResultTable::assemble(table.rows);
    table.write_all(&cfg.out_dir)?;
    manifest("report", cfg, serde_json::json!({"input": input}))?.write(&cfg.out_dir)?;
    print!("{}", table.summary_markdown());
    Ok(())
}

fn cmd_import(cfg: &ExperimentConfig, raw: &Path, sidecar: Option<&Path>) -> Result<()> {
    let cube = pipeline::import_raw(raw, sidecar)?;
    let (lo, hi) = cube.min_max();
    fs::create_dir_all(&cfg.out_dir)?;
    let dest = cfg.out_dir.join("gt.slc");
    pipeline::save_cube(&cube, &dest)?;
    manifest("import", cfg, serde_json::json!({"raw": raw}))?.write(&cfg.out_dir)?;
    println!(
        "{}x{}x{} cube, range [{lo}, {hi}] -> {}",
        cube.height(),
        cube.width(),
        cube.bands(),
        dest.display()
    );
    if lo < 0.0 || hi > 1.0 {
        println!("values lie outside [0, 1]; set normalize_gt in the config before degrading");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Degrade(a) => cmd_degrade(&cfg, &a),
        Command::Train { lr_hsi, srf } => cmd_train(&cfg, &lr_hsi, &srf),
        Command::Infer { params, msi, tile } => cmd_infer(&cfg, &params, &msi, tile),
        Command::Evaluate {
            gt,
            recon,
            r,
            full,
            window,
        } => cmd_evaluate(&cfg, &gt, &recon, r, full, window),
        Command::Grid { gt } => cmd_table(&mut cfg, gt, false),
        Command::Ablate { gt } => cmd_table(&mut cfg, gt, true),
        Command::Report { input } => cmd_report(&cfg, &input),
        Command::Import { raw, sidecar } => {
            if raw.extension().is_some_and(|e| e == "slc") {
                bail!("{} is already a cube file", raw.display());
            }
            cmd_import(&cfg, &raw, sidecar.as_deref())
        }
    }
}
