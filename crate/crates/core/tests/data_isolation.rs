//! Training may only read the low-resolution cube and inference may only
//! read the high-resolution image. A recording wrapper logs every pixel
//! access to check this.

use std::sync::Mutex;

use specinv::optim::{train, TrainConfig};
use specinv::pipeline::infer;
use specinv::sin::SinArch;
use specinv::{degrade, HsiCube, PixelSpectra};

struct Recorder<'a> {
    tag: char,
    inner: &'a HsiCube,
    log: &'a Mutex<Vec<char>>,
}

impl PixelSpectra for Recorder<'_> {
    fn height(&self) -> usize {
        self.inner.height()
    }
    fn width(&self) -> usize {
        self.inner.width()
    }
    fn bands(&self) -> usize {
        self.inner.bands()
    }
    fn spectrum(&self, p: usize) -> &[f32] {
        self.log.lock().unwrap().push(self.tag);
        let w = self.inner.width();
        self.inner.pixel(p / w, p % w)
    }
}

#[test]
fn train_reads_only_lr_and_infer_reads_only_msi() {
    let gt = HsiCube::from_fn(16, 16, 6, |i, j, k| {
        0.1 + 0.8 * ((i * 3 + j * 5 + k) % 7) as f64 / 7.0
    })
    .unwrap();
    let spec = degrade::DegradationSpec {
        psf: degrade::PsfKind::GAUSSIAN,
        kernel_size: 5,
        r: 2,
        hsi_snr_db: 30.0,
        srf: degrade::make_gaussian_srf(6, 3, 1.0).unwrap(),
        msi_snr_db: 40.0,
        seed: 9,
    };
    let (lr, msi) = degrade::wald_degrade(&gt, &spec).unwrap();
    let log = Mutex::new(Vec::new());
    let lr_view = Recorder {
        tag: 'A',
        inner: &lr,
        log: &log,
    };
    let msi_view = Recorder {
        tag: 'B',
        inner: msi.as_cube(),
        log: &log,
    };

    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let arch = SinArch {
        width: 8,
        ..SinArch::default()
    };
    let (params, _) = train(&lr_view, &spec.srf, arch, &cfg).unwrap();
    let after_train = log.lock().unwrap().len();
    let recon = infer(&params, &msi_view).unwrap();
    assert_eq!(recon.height(), 16);

    let events = log.into_inner().unwrap();
    let first_b = events.iter().position(|&t| t == 'B').unwrap();
    assert_eq!(
        first_b, after_train,
        "inference started before training finished"
    );
    assert!(events[..first_b].iter().all(|&t| t == 'A'));
    assert!(events[first_b..].iter().all(|&t| t == 'B'));
    assert_eq!(
        events.iter().filter(|&&t| t == 'A').count(),
        lr.num_pixels()
    );
    assert_eq!(
        events.iter().filter(|&&t| t == 'B').count(),
        msi.num_pixels()
    );
}
