//! Adam, learning-rate schedules and the self-supervised training loop.

mod adam;
mod schedule;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{PixelSpectra, SrfMatrix};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::sin::{self, init_params, BandReduction, LossKind, SinArch, SinParams};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use schedule::{cosine_interp, ScheduleKind, DEFAULT_PEAK_FRACTION};

const INIT_STREAM: u64 = 0x1A17;
const SHUFFLE_STREAM: u64 = 0x5_0000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Pixels per mini-batch.
    pub batch_size: usize,
    pub loss: LossKind,
    pub band_reduction: BandReduction,
    pub schedule: ScheduleKind,
    pub seed: u64,
    /// Stop after this many epochs without a new best mean loss.
    pub early_stop_patience: Option<usize>,
    /// Sum gradient shards in a fixed order for bit-reproducible runs.
    pub strict: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 1024,
            loss: LossKind::L1,
            band_reduction: BandReduction::Sum,
            schedule: ScheduleKind::default(),
            seed: 0,
            early_stop_patience: None,
            strict: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be >= 1"));
        }
        self.schedule.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate at the epoch's last step.
    pub lr: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub total_steps: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.mean_loss)
    }

    /// CSV with columns `epoch,mean_loss,lr,wall_ms`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for r in &self.records {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Training pairs built from the low-resolution cube: inputs are its pixels
/// projected through the SRF, targets are its pixels.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub in_bands: usize,
    pub out_bands: usize,
}

impl TrainingSet {
    pub fn from_low_res<S: PixelSpectra + ?Sized>(lr_hsi: &S, srf: &SrfMatrix) -> Result<Self> {
        if lr_hsi.bands() != srf.rows() {
            return Err(Error::dim(format!(
                "LR-HSI has {} bands but SRF expects {}",
                lr_hsi.bands(),
                srf.rows()
            )));
        }
        let n = lr_hsi.num_pixels();
        let (c, cc) = (srf.cols(), srf.rows());
        let mut inputs = Vec::with_capacity(n * c);
        let mut targets = Vec::with_capacity(n * cc);
        let mut z = vec![0.0f32; c];
        for p in 0..n {
            let y = lr_hsi.spectrum(p);
            srf.project_spectrum(y, &mut z);
            inputs.extend(z.iter().map(|&v| f64::from(v)));
            targets.extend(y.iter().map(|&v| f64::from(v)));
        }
        Ok(Self {
            inputs,
            targets,
            in_bands: c,
            out_bands: cc,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len() / self.out_bands
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Mean loss of `params` over a whole training set.
pub fn dataset_loss(
    params: &SinParams,
    set: &TrainingSet,
    kind: LossKind,
    reduction: BandReduction,
) -> Result<f64> {
    let pred = sin::predict(params, &set.inputs)?;
    Ok(sin::loss(
        kind,
        reduction,
        &pred,
        &set.targets,
        set.out_bands,
    ))
}

/// Self-supervised training on the low-resolution cube alone.
///
/// Only the LR-HSI and the SRF are inputs: the high-resolution image and
/// the blur kernel are never seen here.
pub fn train<S: PixelSpectra + ?Sized>(
    lr_hsi: &S,
    srf: &SrfMatrix,
    arch: SinArch,
    cfg: &TrainConfig,
) -> Result<(SinParams, TrainLog)> {
    let set = TrainingSet::from_low_res(lr_hsi, srf)?;
    train_on_set(&set, arch, cfg)
}

pub fn train_on_set(
    set: &TrainingSet,
    arch: SinArch,
    cfg: &TrainConfig,
) -> Result<(SinParams, TrainLog)> {
    cfg.validate()?;
    let n = set.len();
    if n == 0 {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    let (c, cc) = (set.in_bands, set.out_bands);
    let mut params = init_params(c, cc, arch, derive_seed(cfg.seed, INIT_STREAM))?;
    let mut state = AdamState::new(&params);

    let batch = cfg.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total = cfg.epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = Vec::with_capacity(batch * c);
    let mut tb = Vec::with_capacity(batch * cc);
    let mut log = TrainLog {
        total_steps: total,
        ..TrainLog::default()
    };
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut step = 0usize;
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM + epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for idx in order.chunks(batch) {
            xb.clear();
            tb.clear();
            for &p in idx {
                xb.extend_from_slice(&set.inputs[p * c..(p + 1) * c]);
                tb.extend_from_slice(&set.targets[p * cc..(p + 1) * cc]);
            }
            let (l, grads) = sin::loss_and_gradients(
                &params,
                &xb,
                &tb,
                cfg.loss,
                cfg.band_reduction,
                cfg.strict,
            )?;
            if !l.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became {l} at epoch {epoch}, step {step} (lr {lr:e})"
                )));
            }
            lr = cfg.schedule.lr_at(step, total);
            adam_step(&mut params, &grads, &mut state, lr)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, step {step}: {e}")))?;
            epoch_loss += l * idx.len() as f64;
            step += 1;
        }
        let mean_loss = epoch_loss / n as f64;
        log.records.push(EpochRecord {
            epoch,
            mean_loss,
            lr,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("epoch {epoch}: loss {mean_loss:.6e} lr {lr:.3e}");

        if let Some(patience) = cfg.early_stop_patience {
            if mean_loss < best {
                best = mean_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok((params, log))
}
