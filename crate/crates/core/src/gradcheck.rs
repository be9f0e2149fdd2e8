//! Central finite-difference oracle for gradient checks.
//!
//! The difference stencil is deliberately independent of the analytic
//! backward path: the only thing shared with the implementation under test
//! is the loss evaluation the caller supplies. The comparison helpers at
//! the bottom package the oracle against layer sequences and whole models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{Model, ParamKind};
use crate::error::Result;
use crate::loss::batch_multihead_chamfer;
use crate::metrics::PointCloud;
use crate::nn::{seq_backward, seq_forward, Layer, Mode};
use crate::tensor::Tensor;

/// Central difference of `loss` with respect to every element of `theta`.
///
/// The closure receives the perturbed tensor and must evaluate the loss from
/// scratch; `theta` is restored before returning.
pub fn central_diff<F>(theta: &mut Tensor, h: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&Tensor) -> f64,
{
    let n = theta.len();
    let mut grads = Vec::with_capacity(n);
    for i in 0..n {
        grads.push(central_diff_at(theta, i, h, &mut loss));
    }
    grads
}

/// Central difference for a subset of elements, for parameter tensors too
/// large to probe exhaustively.
pub fn central_diff_subset<F>(theta: &mut Tensor, indices: &[usize], h: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&Tensor) -> f64,
{
    indices
        .iter()
        .map(|&i| central_diff_at(theta, i, h, &mut loss))
        .collect()
}

fn central_diff_at<F>(theta: &mut Tensor, i: usize, h: f64, loss: &mut F) -> f64
where
    F: FnMut(&Tensor) -> f64,
{
    let orig = theta.data()[i];
    theta.data_mut()[i] = (orig as f64 + h) as f32;
    let lp = loss(theta);
    theta.data_mut()[i] = (orig as f64 - h) as f32;
    let lm = loss(theta);
    theta.data_mut()[i] = orig;
    (lp - lm) / (2.0 * h)
}

/// Global relative error between two gradient vectors:
/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, floor)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient vectors must have equal length");
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    diff.sqrt() / na.sqrt().max(nb.sqrt()).max(1e-12)
}

fn layer_param_tensors(layer: &Layer) -> Vec<&Tensor> {
    match layer {
        Layer::PointwiseLinear(p) | Layer::Dense(p) => vec![&p.weight, &p.bias],
        Layer::BatchNorm(p) => vec![&p.gamma, &p.beta],
        Layer::Relu | Layer::MaxPoolPoints => vec![],
    }
}

fn layer_param_tensor_mut(layer: &mut Layer, slot: usize) -> &mut Tensor {
    match (layer, slot) {
        (Layer::PointwiseLinear(p) | Layer::Dense(p), 0) => &mut p.weight,
        (Layer::PointwiseLinear(p) | Layer::Dense(p), 1) => &mut p.bias,
        (Layer::BatchNorm(p), 0) => &mut p.gamma,
        (Layer::BatchNorm(p), 1) => &mut p.beta,
        _ => panic!("no parameter slot {slot} on this layer"),
    }
}

/// Compares analytic sequence gradients against the finite-difference
/// oracle under a fixed random linear functional of the output. Returns the
/// global relative error over all parameter gradients and the input
/// gradient.
pub fn sequence_gradient_error(layers: &[Layer], x: &Tensor, mode: Mode, h: f64) -> Result<f64> {
    let out_shape = {
        let mut probe = layers.to_vec();
        seq_forward(&mut probe, x, mode)?.output.shape().to_vec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let len: usize = out_shape.iter().product();
    let coeffs = Tensor::from_vec(&out_shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let loss_of = |layers: &[Layer], x: &Tensor| -> f64 {
        let mut work = layers.to_vec();
        let out = seq_forward(&mut work, x, mode).expect("forward inside difference stencil");
        out.output
            .data()
            .iter()
            .zip(coeffs.data())
            .map(|(y, c)| *y as f64 * *c as f64)
            .sum()
    };

    let mut work = layers.to_vec();
    let pass = seq_forward(&mut work, x, mode)?;
    let (grads, dx) = seq_backward(&work, &pass.caches, &coeffs)?;

    let mut analytic: Vec<f64> = dx.data().iter().map(|v| *v as f64).collect();
    let mut fd = {
        let mut xt = x.clone();
        central_diff(&mut xt, h, |t| loss_of(layers, t))
    };

    for li in 0..layers.len() {
        let slots = layer_param_tensors(&layers[li]).len();
        for si in 0..slots {
            let mut theta = layer_param_tensors(&layers[li])[si].clone();
            fd.extend(central_diff(&mut theta, h, |t| {
                let mut perturbed = layers.to_vec();
                *layer_param_tensor_mut(&mut perturbed[li], si) = t.clone();
                loss_of(&perturbed, x)
            }));
            let g = &grads[li];
            let tensor = match si {
                0 => g.weight.as_ref(),
                _ => g.bias.as_ref(),
            }
            .expect("parameterized layer returns gradients");
            analytic.extend(tensor.data().iter().map(|v| *v as f64));
        }
    }
    Ok(relative_error(&fd, &analytic))
}

/// Smallest margin before a piecewise decision inside the sequence flips:
/// `|pre-activation|` at each ReLU and the top-two gap at each max pool.
/// Finite-difference probes need this to exceed the stencil width.
pub fn min_stencil_margin(layers: &[Layer], x: &Tensor, mode: Mode) -> Result<f64> {
    let mut margin = f64::INFINITY;
    let mut cur = x.clone();
    let mut work = layers.to_vec();
    for layer in work.iter_mut() {
        match layer {
            Layer::Relu => {
                for v in cur.data() {
                    margin = margin.min(v.abs() as f64);
                }
            }
            Layer::MaxPoolPoints => {
                let (b, c, n) = (cur.dim(0), cur.dim(1), cur.dim(2));
                for bi in 0..b {
                    for ci in 0..c {
                        let row = cur.row3(bi, ci);
                        let mut best = f32::NEG_INFINITY;
                        let mut second = f32::NEG_INFINITY;
                        for &v in row {
                            if v > best {
                                second = best;
                                best = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                        if n > 1 {
                            margin = margin.min((best - second) as f64);
                        }
                    }
                }
            }
            _ => {}
        }
        cur = crate::nn::forward_layer(layer, &cur, mode)?.0;
    }
    Ok(margin)
}

fn fnv1a(hash: &mut u64, bytes: &[u8]) {
    for b in bytes {
        *hash ^= *b as u64;
        *hash = hash.wrapping_mul(0x100_0000_01b3);
    }
}

/// Training loss plus a hash of every branch decision taken on the way:
/// ReLU masks, max-pool argmax indices, and the loss's nearest-neighbor
/// winners. Two evaluations with equal signatures lie on the same smooth
/// piece of the loss.
fn loss_and_branch_signature(model: &Model, x: &Tensor, gt: &[PointCloud]) -> Result<(f64, u64)> {
    use crate::nn::LayerCache;
    let mut m = model.clone();
    let pass = m.forward_cached(x, Mode::Train)?;
    let mut sig = 0xcbf2_9ce4_8422_2325u64;
    for cache in pass.encoder.caches.iter().chain(pass.heads.iter().flat_map(|h| h.caches.iter())) {
        match cache {
            LayerCache::Relu { mask } => {
                for bit in mask {
                    fnv1a(&mut sig, &[*bit as u8]);
                }
            }
            LayerCache::MaxPool { argmax, .. } => {
                for a in argmax {
                    fnv1a(&mut sig, &a.to_le_bytes());
                }
            }
            _ => {}
        }
    }
    for (b, gt_cloud) in gt.iter().enumerate() {
        let idx_gt = crate::metrics::NnIndex::build(gt_cloud, crate::metrics::BackendKind::BruteForce);
        for head in &pass.heads {
            let cloud = PointCloud::from_flat(head.output.row2(b))?;
            let idx_head = crate::metrics::NnIndex::build(&cloud, crate::metrics::BackendKind::BruteForce);
            for &p in gt_cloud.points() {
                fnv1a(&mut sig, &(idx_head.nearest(p).0 as u64).to_le_bytes());
            }
            for &q in cloud.points() {
                fnv1a(&mut sig, &(idx_gt.nearest(q).0 as u64).to_le_bytes());
            }
        }
    }
    let head_refs: Vec<&Tensor> = pass.heads.iter().map(|h| &h.output).collect();
    let (loss, _) = batch_multihead_chamfer(gt, &head_refs)?;
    Ok((loss, sig))
}

/// Compares analytic model gradients of the multi-head training loss
/// against finite differences, probing random elements of every trainable
/// tensor. Probes whose ±h evaluations land on a different smooth piece of
/// the loss (a flipped ReLU, argmax, or NN correspondence) are discarded;
/// the stencil is only a derivative estimate where the function is smooth.
/// Returns the global relative error over the safe probes.
pub fn model_gradient_error(
    model: &Model,
    x: &Tensor,
    gt: &[PointCloud],
    h: f64,
    probes_per_tensor: usize,
    seed: u64,
) -> Result<f64> {
    let (_, sig_base) = loss_and_branch_signature(model, x, gt)?;

    let mut work = model.clone();
    let pass = work.forward_cached(x, Mode::Train)?;
    let head_refs: Vec<&Tensor> = pass.heads.iter().map(|h| &h.output).collect();
    let (_, head_grads) = batch_multihead_chamfer(gt, &head_refs)?;
    let grads = crate::loss::backward_into_model(&work, &pass, &head_grads)?;
    let flat = grads.flatten();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    let mut perturbed = model.clone();
    for (ti, grad_tensor) in flat.iter().enumerate() {
        let len = grad_tensor.len();
        // Draw extra candidates so unsafe probes can be discarded.
        let budget = (probes_per_tensor * 4).min(len);
        let picks: Vec<usize> = if len <= budget {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, budget).into_vec()
        };
        let mut taken = 0;
        for e in picks {
            if taken >= probes_per_tensor {
                break;
            }
            let set = |m: &mut Model, value: f32| {
                let mut named = m.named_tensors_mut();
                let slot = named
                    .iter_mut()
                    .filter(|t| t.kind == ParamKind::Trainable)
                    .nth(ti)
                    .expect("trainable tensor index in range");
                slot.tensor.data_mut()[e] = value;
            };
            let orig = {
                let named = perturbed.named_tensors();
                let slot = named.iter().filter(|t| t.kind == ParamKind::Trainable).nth(ti).unwrap();
                slot.tensor.data()[e]
            };
            set(&mut perturbed, (orig as f64 + h) as f32);
            let (lp, sig_p) = loss_and_branch_signature(&perturbed, x, gt)?;
            set(&mut perturbed, (orig as f64 - h) as f32);
            let (lm, sig_m) = loss_and_branch_signature(&perturbed, x, gt)?;
            set(&mut perturbed, orig);
            if sig_p != sig_base || sig_m != sig_base {
                continue;
            }
            fd.push((lp - lm) / (2.0 * h));
            analytic.push(grad_tensor.data()[e] as f64);
            taken += 1;
        }
    }
    if fd.is_empty() {
        return Err(crate::error::Error::Degenerate(
            "no stencil-safe probes found for the gradient check".into(),
        ));
    }
    Ok(relative_error(&fd, &analytic))
}
