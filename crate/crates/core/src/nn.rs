//! The five layer types the point-cloud networks use, with explicit
//! forward and backward passes.
//!
//! A "1D convolution" over points with kernel size 1 is a shared per-point
//! linear map, represented here as [`Layer::PointwiseLinear`]. Activations
//! are stored in f32; parameter-gradient and statistics reductions
//! accumulate in f64.

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct LinearParams {
    /// `[out_features, in_features]`, row-major.
    pub weight: Tensor,
    /// `[out_features]`
    pub bias: Tensor,
}

impl LinearParams {
    pub fn out_features(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn in_features(&self) -> usize {
        self.weight.dim(1)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormParams {
    /// Affine scale, `[features]`.
    pub gamma: Tensor,
    /// Affine shift, `[features]`.
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f32,
    pub epsilon: f32,
}

pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPSILON: f32 = 1e-5;

impl BatchNormParams {
    pub fn new(features: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.dim(0)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    /// Shared per-point linear map: `[B, Cin, N] -> [B, Cout, N]`.
    PointwiseLinear(LinearParams),
    /// Fully connected: `[B, Fin] -> [B, Fout]`.
    Dense(LinearParams),
    /// Per-channel normalization over the batch (and point) axes.
    BatchNorm(BatchNormParams),
    Relu,
    /// Global max over the point axis: `[B, C, N] -> [B, C]`.
    MaxPoolPoints,
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::PointwiseLinear(_) => "pointwise_linear",
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::MaxPoolPoints => "max_pool_points",
        }
    }
}

// ---------------------------------------------------------------------------
// Initialization

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Fan-in-scaled normal, for layers feeding a ReLU.
    HeNormal,
    /// Uniform Xavier, for un-activated output layers.
    XavierUniform,
}

pub fn init_linear<R: Rng>(out_features: usize, in_features: usize, init: Init, rng: &mut R) -> LinearParams {
    let mut weight = Tensor::zeros(&[out_features, in_features]);
    match init {
        Init::HeNormal => {
            let std = (2.0 / in_features as f64).sqrt();
            for w in weight.data_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *w = (z * std) as f32;
            }
        }
        Init::XavierUniform => {
            let limit = (6.0 / (in_features + out_features) as f64).sqrt();
            let dist = Uniform::new(-limit, limit).expect("valid uniform bounds");
            for w in weight.data_mut() {
                *w = rng.sample(dist) as f32;
            }
        }
    }
    LinearParams {
        weight,
        bias: Tensor::zeros(&[out_features]),
    }
}

// ---------------------------------------------------------------------------
// Forward kernels

/// `out[b, :, n] = W · x[b, :, n] + bias`, independently per point.
pub fn pointwise_linear_forward(x: &Tensor, p: &LinearParams) -> Result<Tensor> {
    if x.rank() != 3 || x.dim(1) != p.in_features() {
        return Err(Error::ShapeMismatch(format!(
            "pointwise linear expects [B, {}, N], got {:?}",
            p.in_features(),
            x.shape()
        )));
    }
    let (b, cin, n) = (x.dim(0), x.dim(1), x.dim(2));
    let cout = p.out_features();
    let mut out = Tensor::zeros(&[b, cout, n]);
    let w = p.weight.data();
    let bias = p.bias.data();
    for bi in 0..b {
        for o in 0..cout {
            let row = out.row3_mut(bi, o);
            row.fill(bias[o]);
            for i in 0..cin {
                let wv = w[o * cin + i];
                let xr = x.row3(bi, i);
                for (r, xv) in row.iter_mut().zip(xr) {
                    *r += wv * xv;
                }
            }
        }
    }
    Ok(out)
}

pub fn dense_forward(x: &Tensor, p: &LinearParams) -> Result<Tensor> {
    if x.rank() != 2 || x.dim(1) != p.in_features() {
        return Err(Error::ShapeMismatch(format!(
            "dense expects [B, {}], got {:?}",
            p.in_features(),
            x.shape()
        )));
    }
    let (b, fin) = (x.dim(0), x.dim(1));
    let fout = p.out_features();
    let mut out = Tensor::zeros(&[b, fout]);
    let w = p.weight.data();
    let bias = p.bias.data();
    for bi in 0..b {
        let xr = x.row2(bi);
        let or = out.row2_mut(bi);
        for o in 0..fout {
            let wr = &w[o * fin..(o + 1) * fin];
            let mut acc = bias[o];
            for (wv, xv) in wr.iter().zip(xr) {
                acc += wv * xv;
            }
            or[o] = acc;
        }
    }
    Ok(out)
}

/// Max over the point axis with argmax for the backward pass.
/// Ties break to the lowest index.
pub fn max_pool_points(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "max pool expects [B, C, N], got {:?}",
            x.shape()
        )));
    }
    let (b, c, n) = (x.dim(0), x.dim(1), x.dim(2));
    if n == 0 {
        return Err(Error::EmptyCloud("max pool over zero points".into()));
    }
    let mut pooled = Tensor::zeros(&[b, c]);
    let mut argmax = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            let row = x.row3(bi, ci);
            let mut best = row[0];
            let mut arg = 0u32;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    arg = k as u32;
                }
            }
            pooled.row2_mut(bi)[ci] = best;
            argmax.push(arg);
        }
    }
    Ok((pooled, argmax))
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    /// True when normalized with batch statistics (train mode).
    batch_stats: bool,
}

/// Iterates channel values of a `[B, C]` or `[B, C, N]` tensor.
fn for_each_channel<F: FnMut(usize, f32)>(x: &Tensor, ci: usize, mut f: F) {
    match x.rank() {
        2 => {
            let (b, c) = (x.dim(0), x.dim(1));
            for bi in 0..b {
                f(bi * c + ci, x.data()[bi * c + ci]);
            }
        }
        3 => {
            let (b, c, n) = (x.dim(0), x.dim(1), x.dim(2));
            for bi in 0..b {
                let base = (bi * c + ci) * n;
                for k in 0..n {
                    f(base + k, x.data()[base + k]);
                }
            }
        }
        _ => unreachable!("validated by caller"),
    }
}

fn bn_check_shape(p: &BatchNormParams, x: &Tensor) -> Result<usize> {
    let c = p.features();
    if !(x.rank() == 2 || x.rank() == 3) || x.dim(1) != c {
        return Err(Error::ShapeMismatch(format!(
            "batchnorm over {} features expects [B, {c}] or [B, {c}, N], got {:?}",
            c,
            x.shape()
        )));
    }
    Ok(x.len() / c)
}

/// Train mode normalizes with two-pass batch statistics over the
/// (batch, point) axes and updates the running estimates; eval mode uses
/// the running estimates. The affine scale/shift is applied in both.
pub fn batchnorm_forward(p: &mut BatchNormParams, x: &Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
    let m = bn_check_shape(p, x)?;
    let c = p.features();
    let eps = p.epsilon as f64;
    let mut mean = vec![0.0f64; c];
    let mut inv_std = vec![0.0f64; c];

    match mode {
        Mode::Train => {
            if m < 2 {
                return Err(Error::Degenerate(format!(
                    "batchnorm in train mode needs at least 2 values per channel, got {m}"
                )));
            }
            let mom = p.momentum as f64;
            for ci in 0..c {
                let mut sum = 0.0f64;
                for_each_channel(x, ci, |_, v| sum += v as f64);
                let mu = sum / m as f64;
                let mut sq = 0.0f64;
                for_each_channel(x, ci, |_, v| {
                    let d = v as f64 - mu;
                    sq += d * d;
                });
                let var = sq / m as f64;
                mean[ci] = mu;
                inv_std[ci] = 1.0 / (var + eps).sqrt();
                // Running variance keeps the unbiased estimate.
                let unbiased = sq / (m - 1) as f64;
                let rm = p.running_mean.data()[ci] as f64;
                let rv = p.running_var.data()[ci] as f64;
                p.running_mean.data_mut()[ci] = ((1.0 - mom) * rm + mom * mu) as f32;
                p.running_var.data_mut()[ci] = ((1.0 - mom) * rv + mom * unbiased) as f32;
            }
        }
        Mode::Eval => {
            for ci in 0..c {
                mean[ci] = p.running_mean.data()[ci] as f64;
                inv_std[ci] = 1.0 / (p.running_var.data()[ci] as f64 + eps).sqrt();
            }
        }
    }

    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for ci in 0..c {
        let (mu, istd) = (mean[ci], inv_std[ci]);
        let (g, be) = (p.gamma.data()[ci] as f64, p.beta.data()[ci] as f64);
        for_each_channel(x, ci, |idx, v| {
            let xh = (v as f64 - mu) * istd;
            xhat.data_mut()[idx] = xh as f32;
            y.data_mut()[idx] = (g * xh + be) as f32;
        });
    }
    Ok((
        y,
        BnCache {
            xhat,
            inv_std,
            batch_stats: matches!(mode, Mode::Train),
        },
    ))
}

/// Eval-mode batchnorm without touching running statistics.
pub fn batchnorm_eval(p: &BatchNormParams, x: &Tensor) -> Result<Tensor> {
    let _ = bn_check_shape(p, x)?;
    let c = p.features();
    let eps = p.epsilon as f64;
    let mut y = Tensor::zeros(x.shape());
    for ci in 0..c {
        let mu = p.running_mean.data()[ci] as f64;
        let istd = 1.0 / (p.running_var.data()[ci] as f64 + eps).sqrt();
        let (g, be) = (p.gamma.data()[ci] as f64, p.beta.data()[ci] as f64);
        for_each_channel(x, ci, |idx, v| {
            y.data_mut()[idx] = (g * ((v as f64 - mu) * istd) + be) as f32;
        });
    }
    Ok(y)
}

pub fn relu_forward(x: &Tensor) -> (Tensor, Vec<bool>) {
    let mut y = x.clone();
    let mut mask = Vec::with_capacity(x.len());
    for v in y.data_mut() {
        let on = *v > 0.0;
        mask.push(on);
        if !on {
            *v = 0.0;
        }
    }
    (y, mask)
}

// ---------------------------------------------------------------------------
// Backward kernels

pub fn pointwise_linear_backward(
    p: &LinearParams,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, cin, n) = (input.dim(0), input.dim(1), input.dim(2));
    let cout = p.out_features();
    if grad_out.shape() != [b, cout, n] {
        return Err(Error::Protocol(format!(
            "pointwise linear backward: gradient shape {:?} does not match cached forward [{}, {}, {}]",
            grad_out.shape(),
            b,
            cout,
            n
        )));
    }
    let w = p.weight.data();
    let mut dw64 = vec![0.0f64; cout * cin];
    let mut db64 = vec![0.0f64; cout];
    let mut dx = Tensor::zeros(&[b, cin, n]);
    for bi in 0..b {
        for o in 0..cout {
            let gr = grad_out.row3(bi, o);
            let mut gsum = 0.0f64;
            for &g in gr {
                gsum += g as f64;
            }
            db64[o] += gsum;
            for i in 0..cin {
                let xr = input.row3(bi, i);
                let mut dot = 0.0f64;
                for (g, xv) in gr.iter().zip(xr) {
                    dot += *g as f64 * *xv as f64;
                }
                dw64[o * cin + i] += dot;
                let wv = w[o * cin + i];
                let dxr = dx.row3_mut(bi, i);
                for (d, g) in dxr.iter_mut().zip(gr) {
                    *d += wv * g;
                }
            }
        }
    }
    let dw = Tensor::from_vec(&[cout, cin], dw64.iter().map(|v| *v as f32).collect())?;
    let db = Tensor::from_vec(&[cout], db64.iter().map(|v| *v as f32).collect())?;
    Ok((dx, dw, db))
}

pub fn dense_backward(p: &LinearParams, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, fin) = (input.dim(0), input.dim(1));
    let fout = p.out_features();
    if grad_out.shape() != [b, fout] {
        return Err(Error::Protocol(format!(
            "dense backward: gradient shape {:?} does not match cached forward [{}, {}]",
            grad_out.shape(),
            b,
            fout
        )));
    }
    let w = p.weight.data();
    let mut dw64 = vec![0.0f64; fout * fin];
    let mut db64 = vec![0.0f64; fout];
    let mut dx = Tensor::zeros(&[b, fin]);
    for bi in 0..b {
        let xr = input.row2(bi);
        let gr = grad_out.row2(bi);
        let dxr = dx.row2_mut(bi);
        for o in 0..fout {
            let g = gr[o];
            db64[o] += g as f64;
            let g64 = g as f64;
            let dwr = &mut dw64[o * fin..(o + 1) * fin];
            for (dwv, xv) in dwr.iter_mut().zip(xr) {
                *dwv += g64 * *xv as f64;
            }
            let wr = &w[o * fin..(o + 1) * fin];
            for (d, wv) in dxr.iter_mut().zip(wr) {
                *d += g * wv;
            }
        }
    }
    let dw = Tensor::from_vec(&[fout, fin], dw64.iter().map(|v| *v as f32).collect())?;
    let db = Tensor::from_vec(&[fout], db64.iter().map(|v| *v as f32).collect())?;
    Ok((dx, dw, db))
}

pub fn batchnorm_backward(
    p: &BatchNormParams,
    cache: &BnCache,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Protocol(format!(
            "batchnorm backward: gradient shape {:?} does not match cached forward {:?}",
            grad_out.shape(),
            cache.xhat.shape()
        )));
    }
    let c = p.features();
    let m = grad_out.len() / c;
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for ci in 0..c {
        let mut dg = 0.0f64;
        let mut db = 0.0f64;
        for_each_channel(grad_out, ci, |idx, g| {
            dg += g as f64 * cache.xhat.data()[idx] as f64;
            db += g as f64;
        });
        dgamma[ci] = dg;
        dbeta[ci] = db;
    }
    let mut dx = Tensor::zeros(grad_out.shape());
    for ci in 0..c {
        let g = p.gamma.data()[ci] as f64;
        let istd = cache.inv_std[ci];
        if cache.batch_stats {
            let mf = m as f64;
            let (sg, sb) = (dgamma[ci], dbeta[ci]);
            for_each_channel(grad_out, ci, |idx, gy| {
                let xh = cache.xhat.data()[idx] as f64;
                let v = g * istd / mf * (mf * gy as f64 - sb - xh * sg);
                dx.data_mut()[idx] = v as f32;
            });
        } else {
            for_each_channel(grad_out, ci, |idx, gy| {
                dx.data_mut()[idx] = (g * istd * gy as f64) as f32;
            });
        }
    }
    let dgamma = Tensor::from_vec(&[c], dgamma.iter().map(|v| *v as f32).collect())?;
    let dbeta = Tensor::from_vec(&[c], dbeta.iter().map(|v| *v as f32).collect())?;
    Ok((dx, dgamma, dbeta))
}

pub fn relu_backward(mask: &[bool], grad_out: &Tensor) -> Result<Tensor> {
    if mask.len() != grad_out.len() {
        return Err(Error::Protocol(
            "relu backward: gradient length does not match cached forward".into(),
        ));
    }
    let mut dx = grad_out.clone();
    for (d, &on) in dx.data_mut().iter_mut().zip(mask) {
        if !on {
            *d = 0.0;
        }
    }
    Ok(dx)
}

pub fn max_pool_backward(input_shape: [usize; 3], argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    let [b, c, _n] = input_shape;
    if grad_out.shape() != [b, c] || argmax.len() != b * c {
        return Err(Error::Protocol(format!(
            "max pool backward: gradient shape {:?} does not match cached forward [{}, {}]",
            grad_out.shape(),
            b,
            c
        )));
    }
    let mut dx = Tensor::zeros(&input_shape);
    for bi in 0..b {
        for ci in 0..c {
            let arg = argmax[bi * c + ci] as usize;
            dx.set3(bi, ci, arg, grad_out.at2(bi, ci));
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// Layer-level dispatch and sequences

#[derive(Debug, Clone)]
pub enum LayerCache {
    Linear { input: Tensor },
    BatchNorm(BnCache),
    Relu { mask: Vec<bool> },
    MaxPool { input_shape: [usize; 3], argmax: Vec<u32> },
}

/// Per-layer parameter gradients; slots mirror the layer's own parameters
/// (BN gradients land in `weight` = gamma, `bias` = beta).
#[derive(Debug, Clone, Default)]
pub struct LayerGrads {
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub fn forward_layer(layer: &mut Layer, x: &Tensor, mode: Mode) -> Result<(Tensor, LayerCache)> {
    match layer {
        Layer::PointwiseLinear(p) => {
            let y = pointwise_linear_forward(x, p)?;
            Ok((y, LayerCache::Linear { input: x.clone() }))
        }
        Layer::Dense(p) => {
            let y = dense_forward(x, p)?;
            Ok((y, LayerCache::Linear { input: x.clone() }))
        }
        Layer::BatchNorm(p) => {
            let (y, cache) = batchnorm_forward(p, x, mode)?;
            Ok((y, LayerCache::BatchNorm(cache)))
        }
        Layer::Relu => {
            let (y, mask) = relu_forward(x);
            Ok((y, LayerCache::Relu { mask }))
        }
        Layer::MaxPoolPoints => {
            let (y, argmax) = max_pool_points(x)?;
            Ok((
                y,
                LayerCache::MaxPool {
                    input_shape: [x.dim(0), x.dim(1), x.dim(2)],
                    argmax,
                },
            ))
        }
    }
}

/// Inference-only forward; never mutates running statistics.
pub fn forward_layer_eval(layer: &Layer, x: &Tensor) -> Result<Tensor> {
    match layer {
        Layer::PointwiseLinear(p) => pointwise_linear_forward(x, p),
        Layer::Dense(p) => dense_forward(x, p),
        Layer::BatchNorm(p) => batchnorm_eval(p, x),
        Layer::Relu => Ok(relu_forward(x).0),
        Layer::MaxPoolPoints => Ok(max_pool_points(x)?.0),
    }
}

pub fn backward_layer(layer: &Layer, cache: &LayerCache, grad_out: &Tensor) -> Result<(Tensor, LayerGrads)> {
    match (layer, cache) {
        (Layer::PointwiseLinear(p), LayerCache::Linear { input }) => {
            let (dx, dw, db) = pointwise_linear_backward(p, input, grad_out)?;
            Ok((
                dx,
                LayerGrads {
                    weight: Some(dw),
                    bias: Some(db),
                },
            ))
        }
        (Layer::Dense(p), LayerCache::Linear { input }) => {
            let (dx, dw, db) = dense_backward(p, input, grad_out)?;
            Ok((
                dx,
                LayerGrads {
                    weight: Some(dw),
                    bias: Some(db),
                },
            ))
        }
        (Layer::BatchNorm(p), LayerCache::BatchNorm(c)) => {
            let (dx, dg, db) = batchnorm_backward(p, c, grad_out)?;
            Ok((
                dx,
                LayerGrads {
                    weight: Some(dg),
                    bias: Some(db),
                },
            ))
        }
        (Layer::Relu, LayerCache::Relu { mask }) => Ok((relu_backward(mask, grad_out)?, LayerGrads::default())),
        (Layer::MaxPoolPoints, LayerCache::MaxPool { input_shape, argmax }) => Ok((
            max_pool_backward(*input_shape, argmax, grad_out)?,
            LayerGrads::default(),
        )),
        (layer, _) => Err(Error::Protocol(format!(
            "backward on {} layer called with a cache from a different forward pass",
            layer.kind_name()
        ))),
    }
}

/// A cached forward pass through a layer sequence.
#[derive(Debug, Clone)]
pub struct SeqPass {
    pub caches: Vec<LayerCache>,
    pub output: Tensor,
}

pub fn seq_forward(layers: &mut [Layer], x: &Tensor, mode: Mode) -> Result<SeqPass> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers.iter_mut() {
        let (y, cache) = forward_layer(layer, &cur, mode)?;
        caches.push(cache);
        cur = y;
    }
    cur.check_finite("forward pass output")?;
    Ok(SeqPass { caches, output: cur })
}

pub fn seq_forward_eval(layers: &[Layer], x: &Tensor) -> Result<Tensor> {
    let mut cur = x.clone();
    for layer in layers {
        cur = forward_layer_eval(layer, &cur)?;
    }
    cur.check_finite("forward pass output")?;
    Ok(cur)
}

/// Backpropagates `grad_out` through the sequence, returning per-layer
/// parameter gradients and the gradient with respect to the input.
pub fn seq_backward(layers: &[Layer], caches: &[LayerCache], grad_out: &Tensor) -> Result<(Vec<LayerGrads>, Tensor)> {
    if layers.len() != caches.len() {
        return Err(Error::Protocol(
            "backward called without a matching cached forward pass".into(),
        ));
    }
    let mut grads = vec![LayerGrads::default(); layers.len()];
    let mut g = grad_out.clone();
    for i in (0..layers.len()).rev() {
        let (gin, lg) = backward_layer(&layers[i], &caches[i], &g)?;
        grads[i] = lg;
        g = gin;
    }
    g.check_finite("backward pass input gradient")?;
    Ok((grads, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn pointwise_identity_passes_input_through() {
        let p = LinearParams {
            weight: Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(),
            bias: Tensor::zeros(&[3]),
        };
        let x = random_tensor(&[2, 3, 5], &mut rng(1));
        let y = pointwise_linear_forward(&x, &p).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn pointwise_scaling_doubles_a_point() {
        let p = LinearParams {
            weight: Tensor::from_vec(&[3, 3], vec![2., 0., 0., 0., 2., 0., 0., 0., 2.]).unwrap(),
            bias: Tensor::zeros(&[3]),
        };
        let x = Tensor::from_vec(&[1, 3, 1], vec![1., 2., 3.]).unwrap();
        let y = pointwise_linear_forward(&x, &p).unwrap();
        assert_eq!(y.data(), &[2., 4., 6.]);
    }

    #[test]
    fn pointwise_matches_naive_matvec_oracle() {
        let mut r = rng(7);
        let p = LinearParams {
            weight: random_tensor(&[4, 3], &mut r),
            bias: random_tensor(&[4], &mut r),
        };
        let x = random_tensor(&[1, 3, 1], &mut r);
        let y = pointwise_linear_forward(&x, &p).unwrap();
        // Independent naive loop, same accumulation order.
        for o in 0..4 {
            let mut acc = p.bias.data()[o];
            for i in 0..3 {
                acc += p.weight.at2(o, i) * x.at3(0, i, 0);
            }
            assert!((y.at3(0, o, 0) - acc).abs() <= 1e-6);
        }
    }

    #[test]
    fn pointwise_equals_dense_per_point() {
        let mut r = rng(3);
        let p = LinearParams {
            weight: random_tensor(&[5, 3], &mut r),
            bias: random_tensor(&[5], &mut r),
        };
        let x = random_tensor(&[2, 3, 7], &mut r);
        let y = pointwise_linear_forward(&x, &p).unwrap();
        for bi in 0..2 {
            for n in 0..7 {
                let col = Tensor::from_vec(&[1, 3], (0..3).map(|c| x.at3(bi, c, n)).collect()).unwrap();
                let d = dense_forward(&col, &p).unwrap();
                for o in 0..5 {
                    assert!((y.at3(bi, o, n) - d.at2(0, o)).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn max_pool_takes_channel_max() {
        let x = Tensor::from_vec(&[1, 1, 3], vec![1., 5., 3.]).unwrap();
        let (pooled, argmax) = max_pool_points(&x).unwrap();
        assert_eq!(pooled.data(), &[5.0]);
        assert_eq!(argmax, vec![1]);
    }

    #[test]
    fn max_pool_ties_break_to_lowest_index() {
        let x = Tensor::from_vec(&[1, 1, 3], vec![2., 2., 2.]).unwrap();
        let (pooled, argmax) = max_pool_points(&x).unwrap();
        assert_eq!(pooled.data(), &[2.0]);
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn max_pool_is_permutation_invariant() {
        // Oracle: pooling a sorted copy gives the same values.
        let mut r = rng(11);
        let x = random_tensor(&[2, 4, 9], &mut r);
        let (pooled, _) = max_pool_points(&x).unwrap();
        for bi in 0..2 {
            for ci in 0..4 {
                let mut sorted: Vec<f32> = x.row3(bi, ci).to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let flipped = Tensor::from_vec(&[1, 1, 9], sorted).unwrap();
                let (p2, _) = max_pool_points(&flipped).unwrap();
                assert_eq!(pooled.at2(bi, ci), p2.data()[0]);
            }
        }
    }

    #[test]
    fn batchnorm_eval_with_unit_stats_is_identity() {
        let mut p = BatchNormParams::new(3);
        let x = random_tensor(&[2, 3, 4], &mut rng(5));
        let (y, _) = batchnorm_forward(&mut p, &x, Mode::Eval).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn batchnorm_train_on_constant_input_outputs_zeros() {
        let mut p = BatchNormParams::new(2);
        let x = Tensor::filled(&[3, 2, 4], 7.5);
        let (y, _) = batchnorm_forward(&mut p, &x, Mode::Train).unwrap();
        for v in y.data() {
            assert!(v.abs() < 1e-6, "constant input should normalize to zero, got {v}");
        }
    }

    #[test]
    fn batchnorm_train_rejects_single_sample() {
        let mut p = BatchNormParams::new(2);
        let x = Tensor::filled(&[1, 2, 1], 1.0);
        assert!(matches!(
            batchnorm_forward(&mut p, &x, Mode::Train),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn batchnorm_train_stats_match_two_pass_oracle() {
        let mut p = BatchNormParams::new(3);
        let x = random_tensor(&[4, 3, 6], &mut rng(13));
        let (_, _) = batchnorm_forward(&mut p, &x, Mode::Train).unwrap();
        // Independent two-pass mean/variance, then the same momentum update.
        for ci in 0..3 {
            let mut vals = Vec::new();
            for bi in 0..4 {
                vals.extend(x.row3(bi, ci).iter().map(|v| *v as f64));
            }
            let m = vals.len() as f64;
            let mean: f64 = vals.iter().sum::<f64>() / m;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
            let exp_rm = 0.9 * 0.0 + 0.1 * mean;
            let exp_rv = 0.9 * 1.0 + 0.1 * var;
            let got_rm = p.running_mean.data()[ci] as f64;
            let got_rv = p.running_var.data()[ci] as f64;
            assert!((got_rm - exp_rm).abs() / exp_rm.abs().max(1e-9) < 1e-5);
            assert!((got_rv - exp_rv).abs() / exp_rv.abs().max(1e-9) < 1e-5);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let mut r = rng(17);
        let mut layers = vec![
            Layer::Dense(init_linear(4, 3, Init::HeNormal, &mut r)),
            Layer::Relu,
            Layer::Dense(init_linear(2, 4, Init::XavierUniform, &mut r)),
        ];
        let x = random_tensor(&[5, 3], &mut r);
        let pass = seq_forward(&mut layers, &x, Mode::Train).unwrap();
        let zero = Tensor::zeros(&[5, 2]);
        let (grads, dx) = seq_backward(&layers, &pass.caches, &zero).unwrap();
        for g in &grads {
            if let Some(w) = &g.weight {
                assert!(w.data().iter().all(|v| *v == 0.0));
            }
            if let Some(b) = &g.bias {
                assert!(b.data().iter().all(|v| *v == 0.0));
            }
        }
        assert!(dx.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dense_gradient_matches_least_squares_closed_form() {
        // loss = ||Wx - y||^2 => dW = 2 (Wx - y) x^T
        let mut r = rng(19);
        let p = init_linear(3, 4, Init::XavierUniform, &mut r);
        let x = random_tensor(&[1, 4], &mut r);
        let target = random_tensor(&[1, 3], &mut r);
        let out = dense_forward(&x, &p).unwrap();
        let resid: Vec<f32> = out.data().iter().zip(target.data()).map(|(o, t)| o - t).collect();
        let upstream = Tensor::from_vec(&[1, 3], resid.iter().map(|v| 2.0 * v).collect()).unwrap();
        let (_, dw, _) = dense_backward(&p, &x, &upstream).unwrap();
        for o in 0..3 {
            for i in 0..4 {
                let expect = 2.0 * resid[o] as f64 * x.data()[i] as f64;
                assert!(
                    (dw.at2(o, i) as f64 - expect).abs() < 1e-4,
                    "dW[{o},{i}] = {} vs closed form {expect}",
                    dw.at2(o, i)
                );
            }
        }
    }

    #[test]
    fn backward_with_foreign_cache_is_a_protocol_error() {
        let mut r = rng(23);
        let mut layers = vec![Layer::Dense(init_linear(4, 3, Init::HeNormal, &mut r))];
        let x = random_tensor(&[2, 3], &mut r);
        let pass = seq_forward(&mut layers, &x, Mode::Train).unwrap();
        // Gradient shaped for a different batch size.
        let bad = Tensor::zeros(&[3, 4]);
        assert!(matches!(
            seq_backward(&layers, &pass.caches, &bad),
            Err(Error::Protocol(_))
        ));
        // Missing caches entirely.
        assert!(matches!(
            seq_backward(&layers, &[], &Tensor::zeros(&[2, 4])),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut r = rng(29);
        let mut layers = vec![
            Layer::PointwiseLinear(init_linear(8, 3, Init::HeNormal, &mut r)),
            Layer::BatchNorm(BatchNormParams::new(8)),
            Layer::Relu,
            Layer::MaxPoolPoints,
        ];
        let x = random_tensor(&[2, 3, 16], &mut r);
        let a = seq_forward(&mut layers.clone(), &x, Mode::Train).unwrap();
        let b = seq_forward(&mut layers, &x, Mode::Train).unwrap();
        assert_eq!(a.output.data(), b.output.data());
    }
}
