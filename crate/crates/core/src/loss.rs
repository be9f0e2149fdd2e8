//! Differentiable multi-head Chamfer loss.
//!
//! The loss of `M` heads against one ground truth is the average symmetric
//! Chamfer term over heads, each side normalized by its own cloud size.
//! With `M = 1` the computation is numerically identical to the plain
//! Chamfer metric (same kernels, same accumulation order). Nearest-neighbor
//! correspondences are treated as locally constant; equidistant neighbors
//! resolve to the lowest index, and the gradient follows the winner.

use crate::arch::{Model, ModelGrads, ModelPass};
use crate::error::{Error, Result};
use crate::metrics::{BackendKind, NnIndex, PointCloud};
use crate::nn::{seq_backward, Mode};
use crate::optim::ModelOptimizer;
use crate::par;
use crate::tensor::Tensor;

/// Brute force wins below a few hundred points; both backends are exact and
/// bit-identical, so this is purely a speed choice.
fn pick_backend(n: usize) -> BackendKind {
    if n <= 512 {
        BackendKind::BruteForce
    } else {
        BackendKind::SpatialIndex
    }
}

/// Loss and per-point gradients for one ground truth against `M` head
/// outputs. Gradients come back per head, one 3-vector per predicted point.
pub fn multihead_chamfer(gt: &PointCloud, heads: &[PointCloud]) -> Result<(f64, Vec<Vec<[f64; 3]>>)> {
    if heads.is_empty() {
        return Err(Error::EmptyCloud("loss needs at least one head output".into()));
    }
    let per_head = heads[0].len();
    if heads.iter().any(|h| h.len() != per_head) {
        return Err(Error::ShapeMismatch("all heads must emit the same number of points".into()));
    }
    let m = heads.len() as f64;
    let n_p = gt.len() as f64;
    let idx_gt = NnIndex::build(gt, pick_backend(gt.len()));

    let mut loss = 0.0f64;
    let mut grads = Vec::with_capacity(heads.len());
    for head in heads {
        let n_q = head.len() as f64;
        let idx_head = NnIndex::build(head, pick_backend(head.len()));
        let mut grad = vec![[0.0f64; 3]; head.len()];

        // Ground truth into this head: cost lands on each point's nearest
        // predicted point.
        let c1 = 2.0 / (m * n_p);
        let mut sum_fwd = 0.0f64;
        for &p in gt.points() {
            let (j, d2) = idx_head.nearest(p);
            sum_fwd += d2;
            let q = head.points()[j];
            for a in 0..3 {
                grad[j][a] += c1 * (q[a] as f64 - p[a] as f64);
            }
        }

        // Head into ground truth: every predicted point carries its own term.
        let c2 = 2.0 / (m * n_q);
        let mut sum_bwd = 0.0f64;
        for (jq, &q) in head.points().iter().enumerate() {
            let (ip, d2) = idx_gt.nearest(q);
            sum_bwd += d2;
            let p = gt.points()[ip];
            for a in 0..3 {
                grad[jq][a] += c2 * (q[a] as f64 - p[a] as f64);
            }
        }

        loss += sum_fwd / n_p + sum_bwd / n_q;
        grads.push(grad);
    }
    Ok((loss / m, grads))
}

/// Batch form over `[B, (K/M)·3]` head outputs: mean loss over batch
/// elements and matching f32 gradient tensors per head.
pub fn batch_multihead_chamfer(gt: &[PointCloud], head_outputs: &[&Tensor]) -> Result<(f64, Vec<Tensor>)> {
    if head_outputs.is_empty() {
        return Err(Error::EmptyCloud("loss needs at least one head output".into()));
    }
    let bsz = gt.len();
    for t in head_outputs {
        if t.rank() != 2 || t.dim(0) != bsz || t.dim(1) % 3 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "head output {:?} does not match batch of {bsz} flat point vectors",
                t.shape()
            )));
        }
    }

    let per_elem: Vec<Result<(f64, Vec<Vec<[f64; 3]>>)>> = par::map_range(bsz, |b| {
        let heads_b = head_outputs
            .iter()
            .map(|t| PointCloud::from_flat(t.row2(b)))
            .collect::<Result<Vec<_>>>()?;
        multihead_chamfer(&gt[b], &heads_b)
    });

    let mut loss = 0.0f64;
    let mut grads: Vec<Tensor> = head_outputs
        .iter()
        .map(|t| Tensor::zeros(&[bsz, t.dim(1)]))
        .collect();
    let inv_b = 1.0 / bsz as f64;
    for (b, elem) in per_elem.into_iter().enumerate() {
        let (l, g) = elem?;
        loss += l;
        for (h, head_grad) in g.into_iter().enumerate() {
            let row = grads[h].row2_mut(b);
            for (j, v) in head_grad.into_iter().enumerate() {
                for a in 0..3 {
                    row[j * 3 + a] = (v[a] * inv_b) as f32;
                }
            }
        }
    }
    Ok((loss * inv_b, grads))
}

/// Chains per-head output gradients through the decoder heads and the
/// encoder. Heads receive only their own slice; the latent gradient is the
/// sum over heads.
pub fn backward_into_model(model: &Model, pass: &ModelPass, head_grads: &[Tensor]) -> Result<ModelGrads> {
    if head_grads.len() != model.heads.len() || pass.heads.len() != model.heads.len() {
        return Err(Error::Protocol(
            "head gradient count does not match the cached forward pass".into(),
        ));
    }
    let mut dlatent = Tensor::zeros(pass.encoder.output.shape());
    let mut heads = Vec::with_capacity(model.heads.len());
    for (i, head) in model.heads.iter().enumerate() {
        let g = &head_grads[i];
        let flat = if g.rank() == 3 {
            g.clone().reshape(&[g.dim(0), g.dim(1) * g.dim(2)])?
        } else {
            g.clone()
        };
        let (layer_grads, dl) = seq_backward(head, &pass.heads[i].caches, &flat)?;
        if dl.shape() != dlatent.shape() {
            return Err(Error::Protocol(
                "latent gradient shape does not match the cached forward pass".into(),
            ));
        }
        for (acc, v) in dlatent.data_mut().iter_mut().zip(dl.data()) {
            *acc += v;
        }
        heads.push(layer_grads);
    }
    let (encoder, _dx) = seq_backward(&model.encoder, &pass.encoder.caches, &dlatent)?;
    Ok(ModelGrads { encoder, heads })
}

/// Smallest gap between best and second-best squared NN distance across all
/// query directions of the loss. Finite-difference gradient probes need
/// this margin to exceed the stencil width, otherwise a correspondence can
/// flip inside the stencil.
pub fn nn_tie_margin(gt: &PointCloud, heads: &[PointCloud]) -> f64 {
    fn margin(from: &PointCloud, to: &PointCloud) -> f64 {
        let mut worst = f64::INFINITY;
        for &q in from.points() {
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            for &p in to.points() {
                let d2 = crate::metrics::dist2(q, p);
                if d2 < best {
                    second = best;
                    best = d2;
                } else if d2 < second {
                    second = d2;
                }
            }
            worst = worst.min(second - best);
        }
        worst
    }
    heads
        .iter()
        .flat_map(|h| [margin(gt, h), margin(h, gt)])
        .fold(f64::INFINITY, f64::min)
}

/// One full training step: cached train-mode forward, batch loss, backward,
/// optimizer update. Returns the batch loss.
pub fn train_step(model: &mut Model, opt: &mut ModelOptimizer, batch: &Tensor, gt: &[PointCloud]) -> Result<f64> {
    let pass = model.forward_cached(batch, Mode::Train)?;
    let head_refs: Vec<&Tensor> = pass.heads.iter().map(|h| &h.output).collect();
    let (loss, head_grads) = batch_multihead_chamfer(gt, &head_refs)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let grads = backward_into_model(model, &pass, &head_grads)?;
    opt.step(model, &grads)?;
    Ok(loss)
}
