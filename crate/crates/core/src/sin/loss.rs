use serde::{Deserialize, Serialize};

/// Stabilizer in the cosine-similarity denominator.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over pixels of the ℓ1 norm of the spectral residual.
    #[default]
    L1,
    /// Mean squared residual over all samples.
    Mse,
    /// Mean over pixels of `1 − cos(pred, target)`.
    CosineSimilarity,
}

/// How the ℓ1 loss reduces over bands within a pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandReduction {
    #[default]
    Sum,
    Mean,
}

/// Loss of `pred` against `target`, both `n × bands`.
pub fn loss(
    kind: LossKind,
    reduction: BandReduction,
    pred: &[f64],
    target: &[f64],
    bands: usize,
) -> f64 {
    loss_impl(kind, reduction, pred, target, bands, None)
}

/// Loss and its gradient with respect to `pred`. The ℓ1 subgradient at a
/// zero residual is 0.
pub fn loss_with_grad(
    kind: LossKind,
    reduction: BandReduction,
    pred: &[f64],
    target: &[f64],
    bands: usize,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; pred.len()];
    let l = loss_impl(kind, reduction, pred, target, bands, Some(&mut grad));
    (l, grad)
}

fn loss_impl(
    kind: LossKind,
    reduction: BandReduction,
    pred: &[f64],
    target: &[f64],
    bands: usize,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    assert_eq!(pred.len(), target.len(), "prediction/target shape mismatch");
    let n = pred.len() / bands;
    if n == 0 {
        return 0.0;
    }
    let inv_n = 1.0 / n as f64;
    match kind {
        LossKind::L1 => {
            let scale = match reduction {
                BandReduction::Sum => inv_n,
                BandReduction::Mean => inv_n / bands as f64,
            };
            let mut total = 0.0;
            for (k, (p, t)) in pred.iter().zip(target).enumerate() {
                let r = p - t;
                total += r.abs();
                if let Some(g) = grad.as_deref_mut() {
                    g[k] = if r > 0.0 {
                        scale
                    } else if r < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                }
            }
            total * scale
        }
        LossKind::Mse => {
            let scale = 1.0 / pred.len() as f64;
            let mut total = 0.0;
            for (k, (p, t)) in pred.iter().zip(target).enumerate() {
                let r = p - t;
                total += r * r;
                if let Some(g) = grad.as_deref_mut() {
                    g[k] = 2.0 * r * scale;
                }
            }
            total * scale
        }
        LossKind::CosineSimilarity => {
            let mut total = 0.0;
            for (px, (p, t)) in pred
                .chunks_exact(bands)
                .zip(target.chunks_exact(bands))
                .enumerate()
            {
                let dot: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
                let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nt = t.iter().map(|a| a * a).sum::<f64>().sqrt();
                let denom = np * nt + COSINE_EPS;
                total += 1.0 - dot / denom;
                if let Some(g) = grad.as_deref_mut() {
                    // d(dot/denom)/dp = t/denom − dot·nt·p/(np·denom²)
                    let radial = if np > 0.0 {
                        dot * nt / (np * denom * denom)
                    } else {
                        0.0
                    };
                    for k in 0..bands {
                        g[px * bands + k] = -inv_n * (t[k] / denom - radial * p[k]);
                    }
                }
            }
            total * inv_n
        }
    }
}
