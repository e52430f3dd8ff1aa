//! Spectral inversion network: a per-pixel residual MLP mapping `c`-band
//! multispectral spectra to `C`-band hyperspectral spectra.
//!
//! With `L` hidden layers `φ1..φL` of equal width the forward pass is
//!
//! ```text
//! x0 = m
//! x1 = φ1(x0)
//! x2 = φ2(x1) + x1
//! x3 = φ3(x2)
//! x4 = φ4(x3) + x2
//! ...            (every even layer adds the previous even output)
//! x̂  = g(xL)
//! ```
//!
//! where each `φi` is a dense layer followed by the activation and `g` is a
//! dense layer with no activation. With skips disabled the network is a plain
//! chain; with zero hidden layers it is a single affine map.
//!
//! Batches are row-major `n × bands` slices of `f64`.

mod io;
mod loss;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub use io::{load_params, read_params, save_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use loss::{loss, loss_with_grad, BandReduction, LossKind, COSINE_EPS};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Pixels per work unit when a batch is split across threads.
pub const PIXEL_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    LeakyRelu,
    Relu,
    /// tanh approximation
    Gelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Gelu => {
                let t = (GELU_K * (z + GELU_C * z * z * z)).tanh();
                0.5 * z * (1.0 + t)
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let t = (GELU_K * (z + GELU_C * z * z * z)).tanh();
                0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * z * z)
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
            Activation::Relu => 1,
            Activation::Gelu => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::LeakyRelu),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Gelu),
            _ => None,
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

/// Network shape, independent of the band counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct SinArch {
    /// Number of hidden layers; 0 gives a single affine map.
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub skip: bool,
}

impl Default for SinArch {
    fn default() -> Self {
        Self {
            hidden_layers: 6,
            width: 64,
            activation: Activation::LeakyRelu,
            skip: true,
        }
    }
}

impl SinArch {
    /// Single dense layer, no activation.
    pub fn linear() -> Self {
        Self {
            hidden_layers: 0,
            ..Self::default()
        }
    }

    /// Closed-form parameter count for `c` inputs and `C` outputs.
    pub fn param_count(&self, in_bands: usize, out_bands: usize) -> usize {
        if self.hidden_layers == 0 {
            return in_bands * out_bands + out_bands;
        }
        let h = self.width;
        (in_bands * h + h) + (self.hidden_layers - 1) * (h * h + h) + (h * out_bands + out_bands)
    }

    /// Residual source for hidden layer `i` (1-based), if it has one.
    #[inline]
    fn residual_source(&self, i: usize) -> Option<usize> {
        if !self.skip || i % 2 == 1 {
            None
        } else if i == 2 {
            Some(1)
        } else {
            Some(i - 2)
        }
    }
}

/// Fully connected layer, `weights` row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    // out[p, o] = b[o] + Σ_i W[o, i] · x[p, i]
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (xp, op) in x
            .chunks_exact(self.inputs)
            .zip(out.chunks_exact_mut(self.outputs))
        {
            for ((o, row), b) in op
                .iter_mut()
                .zip(self.weights.chunks_exact(self.inputs))
                .zip(&self.bias)
            {
                *o = row.iter().zip(xp).fold(*b, |acc, (w, v)| acc + w * v);
            }
        }
    }
}

/// All weights and biases of the network: hidden layers in order, then the
/// output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinParams {
    pub arch: SinArch,
    pub in_bands: usize,
    pub out_bands: usize,
    pub layers: Vec<Dense>,
}

/// Gradients with the same layout as [`SinParams::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct SinGrads {
    pub layers: Vec<Dense>,
}

impl SinGrads {
    pub fn zeros_like(params: &SinParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &SinGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl SinParams {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn hidden(&self) -> &[Dense] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output(&self) -> &Dense {
        self.layers.last().expect("network has an output layer")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Parameters in serialization order: per layer, weights then bias.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// He-initialized network (`std = sqrt(2 / fan_in)`, zero biases).
pub fn init_params(
    in_bands: usize,
    out_bands: usize,
    arch: SinArch,
    seed: u64,
) -> Result<SinParams> {
    if in_bands == 0 || out_bands == 0 {
        return Err(Error::param(
            "network needs at least one input and output band",
        ));
    }
    if arch.hidden_layers > 0 && arch.width == 0 {
        return Err(Error::param("hidden width must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Vec::with_capacity(arch.hidden_layers + 1);
    let mut fan_in = in_bands;
    for _ in 0..arch.hidden_layers {
        dims.push((fan_in, arch.width));
        fan_in = arch.width;
    }
    dims.push((fan_in, out_bands));

    let layers = dims
        .into_iter()
        .map(|(inputs, outputs)| {
            let std = (2.0 / inputs as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut layer = Dense::zeros(inputs, outputs);
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = normal.sample(&mut rng));
            layer
        })
        .collect();
    Ok(SinParams {
        arch,
        in_bands,
        out_bands,
        layers,
    })
}

/// Intermediate values of a forward pass, needed by [`backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    n: usize,
    /// `xs[0]` is the input, `xs[i]` the output of hidden layer `i`.
    xs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layer `i` at index `i - 1`.
    zs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn pixels(&self) -> usize {
        self.n
    }
}

fn check_batch(params: &SinParams, batch: &[f64]) -> Result<usize> {
    if !batch.len().is_multiple_of(params.in_bands) {
        return Err(Error::dim(format!(
            "batch length {} is not a multiple of {} input bands",
            batch.len(),
            params.in_bands
        )));
    }
    if let Some(i) = batch.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite network input at index {i}"
        )));
    }
    Ok(batch.len() / params.in_bands)
}

fn forward_unchecked(
    params: &SinParams,
    batch: &[f64],
    n: usize,
    keep: bool,
) -> (Vec<f64>, Option<Trace>) {
    let arch = params.arch;
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(arch.hidden_layers + 1);
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(arch.hidden_layers);
    xs.push(batch.to_vec());
    for (idx, layer) in params.hidden().iter().enumerate() {
        let i = idx + 1;
        let mut z = vec![0.0; n * layer.outputs];
        layer.affine(&xs[i - 1], &mut z);
        let mut x: Vec<f64> = z.iter().map(|&v| arch.activation.apply(v)).collect();
        if let Some(src) = arch.residual_source(i) {
            x.iter_mut().zip(&xs[src]).for_each(|(a, b)| *a += b);
        }
        zs.push(z);
        xs.push(x);
    }
    let out_layer = params.output();
    let mut out = vec![0.0; n * out_layer.outputs];
    out_layer.affine(xs.last().expect("input present"), &mut out);
    let trace = keep.then_some(Trace { n, xs, zs });
    (out, trace)
}

/// Evaluates the network on `batch` (`n × in_bands`), returning `n × out_bands`
/// predictions and, if `keep_trace`, the intermediates for [`backward`].
pub fn forward(
    params: &SinParams,
    batch: &[f64],
    keep_trace: bool,
) -> Result<(Vec<f64>, Option<Trace>)> {
    let n = check_batch(params, batch)?;
    Ok(forward_unchecked(params, batch, n, keep_trace))
}

/// Forward pass over a large batch, split into pixel chunks that run in
/// parallel. Output is bit-identical to [`forward`].
pub fn predict(params: &SinParams, batch: &[f64]) -> Result<Vec<f64>> {
    let n = check_batch(params, batch)?;
    let (cin, cout) = (params.in_bands, params.out_bands);
    let mut out = vec![0.0; n * cout];
    par::for_each_chunk_mut(&mut out, PIXEL_CHUNK * cout, |chunk, dst| {
        let start = chunk * PIXEL_CHUNK;
        let m = dst.len() / cout;
        let (y, _) = forward_unchecked(params, &batch[start * cin..(start + m) * cin], m, false);
        dst.copy_from_slice(&y);
    });
    Ok(out)
}

/// Reverse-mode gradients given the trace of a forward pass and the gradient
/// of the loss with respect to the predictions (`n × out_bands`).
pub fn backward(params: &SinParams, trace: &Trace, dpred: &[f64]) -> Result<SinGrads> {
    let n = trace.n;
    if dpred.len() != n * params.out_bands {
        return Err(Error::dim(format!(
            "prediction gradient has {} entries, expected {}",
            dpred.len(),
            n * params.out_bands
        )));
    }
    let arch = params.arch;
    let hidden = arch.hidden_layers;
    let mut grads = SinGrads::zeros_like(params);
    // g[i] = ∂loss/∂x_i
    let mut g: Vec<Vec<f64>> = trace.xs.iter().map(|x| vec![0.0; x.len()]).collect();

    dense_backward(
        params.output(),
        &trace.xs[hidden],
        dpred,
        n,
        &mut grads.layers[hidden],
        &mut g[hidden],
    );

    for i in (1..=hidden).rev() {
        let gx = std::mem::take(&mut g[i]);
        if let Some(src) = arch.residual_source(i) {
            g[src].iter_mut().zip(&gx).for_each(|(a, b)| *a += b);
        }
        let dz: Vec<f64> = gx
            .iter()
            .zip(&trace.zs[i - 1])
            .map(|(gv, &z)| gv * arch.activation.derivative(z))
            .collect();
        dense_backward(
            &params.layers[i - 1],
            &trace.xs[i - 1],
            &dz,
            n,
            &mut grads.layers[i - 1],
            &mut g[i - 1],
        );
    }
    Ok(grads)
}

// Accumulates parameter gradients of `layer` and adds the input gradient to `dx`.
fn dense_backward(
    layer: &Dense,
    x: &[f64],
    dy: &[f64],
    n: usize,
    grad: &mut Dense,
    dx: &mut [f64],
) {
    let (nin, nout) = (layer.inputs, layer.outputs);
    for p in 0..n {
        let xp = &x[p * nin..(p + 1) * nin];
        let dyp = &dy[p * nout..(p + 1) * nout];
        let dxp = &mut dx[p * nin..(p + 1) * nin];
        for (o, &d) in dyp.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let gw = &mut grad.weights[o * nin..(o + 1) * nin];
            let w = &layer.weights[o * nin..(o + 1) * nin];
            for i in 0..nin {
                gw[i] += d * xp[i];
                dxp[i] += d * w[i];
            }
        }
    }
}

/// Loss and parameter gradients over a batch.
///
/// The batch is split into [`PIXEL_CHUNK`]-pixel shards evaluated in
/// parallel. With `strict` the shard gradients are summed in shard order, so
/// the result is bit-reproducible regardless of thread count.
pub fn loss_and_gradients(
    params: &SinParams,
    batch: &[f64],
    targets: &[f64],
    kind: LossKind,
    reduction: BandReduction,
    strict: bool,
) -> Result<(f64, SinGrads)> {
    let n = check_batch(params, batch)?;
    if targets.len() != n * params.out_bands {
        return Err(Error::dim(format!(
            "targets have {} entries, expected {}",
            targets.len(),
            n * params.out_bands
        )));
    }
    let (cin, cout) = (params.in_bands, params.out_bands);
    let shards = n.div_ceil(PIXEL_CHUNK);
    let shard = |s: usize| -> (f64, SinGrads) {
        let start = s * PIXEL_CHUNK;
        let m = PIXEL_CHUNK.min(n - start);
        let x = &batch[start * cin..(start + m) * cin];
        let t = &targets[start * cout..(start + m) * cout];
        let (pred, trace) = forward_unchecked(params, x, m, true);
        let (l, mut dpred) = loss_with_grad(kind, reduction, &pred, t, cout);
        // shard means -> batch mean
        let w = m as f64 / n as f64;
        dpred.iter_mut().for_each(|d| *d *= w);
        let grads = backward(params, &trace.expect("trace kept"), &dpred).expect("shapes checked");
        (l * w, grads)
    };

    #[cfg(feature = "parallel")]
    if !strict {
        use rayon::prelude::*;
        let zero = || (0.0, SinGrads::zeros_like(params));
        return Ok((0..shards)
            .into_par_iter()
            .map(shard)
            .reduce(zero, |mut a, b| {
                a.0 += b.0;
                a.1.add_assign(&b.1);
                a
            }));
    }
    let _ = strict;

    let parts = par::map_indexed(shards, shard);
    let mut total = 0.0;
    let mut grads = SinGrads::zeros_like(params);
    for (l, g) in &parts {
        total += l;
        grads.add_assign(g);
    }
    Ok((total, grads))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // oracles index explicitly
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(seed: u64, n: usize, bands: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * bands).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    // Scalar-by-scalar evaluation, written independently of the batched path.
    fn scalar_reference(params: &SinParams, m: &[f64]) -> Vec<f64> {
        let act = |z: f64| match params.arch.activation {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    0.01 * z
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                0.5 * z
                    * (1.0
                        + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh())
            }
        };
        let dense = |l: &Dense, x: &[f64]| -> Vec<f64> {
            (0..l.outputs)
                .map(|o| {
                    let mut s = l.bias[o];
                    for i in 0..l.inputs {
                        s += l.weights[o * l.inputs + i] * x[i];
                    }
                    s
                })
                .collect()
        };
        let phi = |k: usize, x: &[f64]| -> Vec<f64> {
            dense(&params.layers[k], x).into_iter().map(act).collect()
        };
        let add =
            |a: Vec<f64>, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
        let x1 = phi(0, m);
        let x2 = add(phi(1, &x1), &x1);
        let x3 = phi(2, &x2);
        let x4 = add(phi(3, &x3), &x2);
        let x5 = phi(4, &x4);
        let x6 = add(phi(5, &x5), &x4);
        dense(&params.layers[6], &x6)
    }

    #[test]
    fn parameter_count_matches_enumeration() {
        let archs = [
            SinArch::default(),
            SinArch {
                skip: false,
                ..SinArch::default()
            },
            SinArch {
                activation: Activation::Gelu,
                ..SinArch::default()
            },
            SinArch {
                hidden_layers: 8,
                ..SinArch::default()
            },
            SinArch {
                hidden_layers: 4,
                ..SinArch::default()
            },
            SinArch {
                hidden_layers: 2,
                ..SinArch::default()
            },
            SinArch {
                hidden_layers: 1,
                ..SinArch::default()
            },
            SinArch {
                width: 32,
                ..SinArch::default()
            },
            SinArch {
                width: 128,
                ..SinArch::default()
            },
            SinArch::linear(),
        ];
        for arch in archs {
            let p = init_params(4, 191, arch, 1).unwrap();
            assert_eq!(p.param_count(), arch.param_count(4, 191));
            assert_eq!(p.flat().len(), p.param_count());
        }
        assert_eq!(
            SinArch::default().param_count(4, 191),
            320 + 5 * 4160 + 12415
        );
        assert_eq!(SinArch::linear().param_count(4, 191), 955);
    }

    #[test]
    fn init_is_deterministic_and_he_scaled() {
        let a = init_params(4, 191, SinArch::default(), 9).unwrap();
        let b = init_params(4, 191, SinArch::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(4, 191, SinArch::default(), 10).unwrap());
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let w = &a.layers[1].weights;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 64.0).abs() < 0.005, "variance {var}");
        assert!(init_params(
            4,
            8,
            SinArch {
                width: 0,
                ..SinArch::default()
            },
            1
        )
        .is_err());
        assert!(init_params(0, 8, SinArch::default(), 1).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = init_params(3, 5, SinArch::default(), 1).unwrap();
        for l in &mut p.layers {
            l.weights.fill(0.0);
        }
        let (y, _) = forward(&p, &random_batch(2, 4, 3), false).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_scalar_reference() {
        for activation in [Activation::LeakyRelu, Activation::Relu, Activation::Gelu] {
            let arch = SinArch {
                width: 3,
                activation,
                ..SinArch::default()
            };
            let mut p = init_params(2, 2, arch, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for l in &mut p.layers {
                l.bias
                    .iter_mut()
                    .for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            let batch = random_batch(6, 5, 2);
            let (y, _) = forward(&p, &batch, false).unwrap();
            for (px, m) in batch.chunks(2).enumerate() {
                let r = scalar_reference(&p, m);
                for k in 0..2 {
                    assert!((y[px * 2 + k] - r[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_skip_is_a_plain_chain() {
        let arch = SinArch {
            skip: false,
            width: 4,
            ..SinArch::default()
        };
        let p = init_params(2, 3, arch, 8).unwrap();
        let m = [0.3, -0.7];
        let mut x = m.to_vec();
        for l in p.hidden() {
            let mut z = vec![0.0; l.outputs];
            l.affine(&x, &mut z);
            x = z
                .into_iter()
                .map(|v| Activation::LeakyRelu.apply(v))
                .collect();
        }
        let mut y = vec![0.0; 3];
        p.output().affine(&x, &mut y);
        assert_eq!(forward(&p, &m, false).unwrap().0, y);
    }

    #[test]
    fn batch_equals_per_pixel_concatenation() {
        let p = init_params(4, 9, SinArch::default(), 3).unwrap();
        let batch = random_batch(1, 200, 4);
        let (whole, _) = forward(&p, &batch, false).unwrap();
        let mut pieces = Vec::new();
        for px in batch.chunks(4) {
            pieces.extend(forward(&p, px, false).unwrap().0);
        }
        assert_eq!(whole, pieces);
        assert_eq!(predict(&p, &batch).unwrap(), whole);
    }

    #[test]
    fn rejects_non_finite_and_ragged_input() {
        let p = init_params(2, 3, SinArch::default(), 3).unwrap();
        assert!(matches!(
            forward(&p, &[0.1, f64::NAN], false),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            forward(&p, &[0.1, 0.2, 0.3], false),
            Err(Error::Dimension(_))
        ));
    }

    fn numeric_gradient_check(arch: SinArch, kind: LossKind) -> f64 {
        let (c, cc, n) = (3, 5, 16);
        let mut p = init_params(c, cc, arch, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for l in &mut p.layers {
            l.bias
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
        let x = random_batch(23, n, c);
        let t = random_batch(24, n, cc);
        let (_, g) = loss_and_gradients(&p, &x, &t, kind, BandReduction::Sum, true).unwrap();
        let eval = |q: &SinParams| {
            let (y, _) = forward(q, &x, false).unwrap();
            loss(kind, BandReduction::Sum, &y, &t, cc)
        };
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for li in 0..p.layers.len() {
            for which in 0..2 {
                let len = if which == 0 {
                    p.layers[li].weights.len()
                } else {
                    p.layers[li].bias.len()
                };
                for k in 0..len {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    if which == 0 {
                        plus.layers[li].weights[k] += eps;
                        minus.layers[li].weights[k] -= eps;
                    } else {
                        plus.layers[li].bias[k] += eps;
                        minus.layers[li].bias[k] -= eps;
                    }
                    let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                    let an = if which == 0 {
                        g.layers[li].weights[k]
                    } else {
                        g.layers[li].bias[k]
                    };
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let gelu = SinArch {
            width: 8,
            activation: Activation::Gelu,
            ..SinArch::default()
        };
        assert!(numeric_gradient_check(gelu, LossKind::Mse) < 1e-4);
        assert!(numeric_gradient_check(gelu, LossKind::CosineSimilarity) < 1e-4);
        let noskip = SinArch {
            skip: false,
            ..gelu
        };
        assert!(numeric_gradient_check(noskip, LossKind::Mse) < 1e-4);
        let lin = SinArch::linear();
        assert!(numeric_gradient_check(lin, LossKind::Mse) < 1e-4);
    }

    #[test]
    fn zero_residual_gives_zero_l1_gradient() {
        let p = init_params(3, 4, SinArch::default(), 2).unwrap();
        let x = random_batch(3, 10, 3);
        let (y, _) = forward(&p, &x, false).unwrap();
        let (l, g) =
            loss_and_gradients(&p, &x, &y, LossKind::L1, BandReduction::Sum, true).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn skips_keep_first_layer_gradient_alive() {
        let base = SinArch {
            width: 6,
            ..SinArch::default()
        };
        let x = random_batch(30, 32, 3);
        let t = random_batch(31, 32, 4);
        let grad_first = |skip: bool| {
            let mut p = init_params(3, 4, SinArch { skip, ..base }, 5).unwrap();
            p.layers[1].weights.fill(0.0);
            p.layers[1].bias.fill(0.0);
            let (_, g) =
                loss_and_gradients(&p, &x, &t, LossKind::Mse, BandReduction::Sum, true).unwrap();
            g.layers[0].weights.iter().map(|v| v.abs()).sum::<f64>()
        };
        assert!(grad_first(true) > 1e-6);
        // A zeroed φ2 blocks the chain when there is no skip around it.
        assert_eq!(grad_first(false), 0.0);
    }

    #[test]
    fn strict_and_relaxed_reductions_agree() {
        let p = init_params(4, 12, SinArch::default(), 2).unwrap();
        let x = random_batch(3, 300, 4);
        let t = random_batch(4, 300, 12);
        let (la, ga) =
            loss_and_gradients(&p, &x, &t, LossKind::L1, BandReduction::Sum, true).unwrap();
        let (lb, gb) =
            loss_and_gradients(&p, &x, &t, LossKind::L1, BandReduction::Sum, false).unwrap();
        assert!((la - lb).abs() < 1e-12);
        for (a, b) in ga.layers.iter().zip(&gb.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let (lc, gc) =
            loss_and_gradients(&p, &x, &t, LossKind::L1, BandReduction::Sum, true).unwrap();
        assert_eq!(la, lc);
        assert_eq!(ga, gc);
    }
}
