//! Declarative construction of the encoder/decoder architectures, exact
//! parameter counting, and forward inference.
//!
//! Two encoders are runnable: a light three-conv encoder with a
//! 128-dimensional latent and a deeper PointNet-style encoder with a
//! 1024-dimensional latent. The decoder is an MLP of depth 1–5 replicated
//! across `M` independent heads; each head emits `K/M` points and the
//! concatenation of all heads is the reconstruction. The transformer
//! backbone's decoder (512-dimensional latent) participates in the
//! parameter arithmetic only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    init_linear, seq_forward, seq_forward_eval, BatchNormParams, Init, Layer, LayerGrads, Mode, SeqPass,
};
use crate::tensor::Tensor;

/// Runnable encoder backbones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    LightAe,
    DeepAe,
}

impl EncoderKind {
    pub fn latent_dim(self) -> usize {
        match self {
            EncoderKind::LightAe => 128,
            EncoderKind::DeepAe => 1024,
        }
    }

    pub fn backbone(self) -> Backbone {
        match self {
            EncoderKind::LightAe => Backbone::LightAe,
            EncoderKind::DeepAe => Backbone::DeepAe,
        }
    }

    /// Per-point conv channel progression, input channels first.
    fn conv_channels(self) -> &'static [usize] {
        match self {
            EncoderKind::LightAe => &[3, 64, 128, 128],
            EncoderKind::DeepAe => &[3, 64, 64, 64, 128, 1024],
        }
    }
}

/// Decoder backbones, including the arithmetic-only transformer variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    LightAe,
    DeepAe,
    Ptv3,
}

impl Backbone {
    pub fn latent_dim(self) -> usize {
        match self {
            Backbone::LightAe => 128,
            Backbone::DeepAe => 1024,
            Backbone::Ptv3 => 512,
        }
    }

    /// The deep autoencoder is the only backbone whose decoder uses
    /// batch normalization (after every hidden layer, never the last).
    pub fn decoder_batchnorm(self) -> bool {
        matches!(self, Backbone::DeepAe)
    }

    /// Hidden widths (excluding the output layer) for each depth.
    pub fn decoder_hidden_widths(self, depth: usize) -> Result<&'static [usize]> {
        const LIGHT: [&[usize]; 5] = [&[], &[256], &[256, 512], &[256, 512, 1024], &[256, 512, 1024, 1024]];
        const DEEP: [&[usize]; 5] = [&[], &[512], &[512, 1024], &[512, 1024, 1024], &[512, 1024, 1024, 1024]];
        const PTV3: [&[usize]; 5] = [&[], &[256], &[256, 512], &[256, 512, 1024], &[256, 512, 1024, 1024]];
        if !(1..=5).contains(&depth) {
            return Err(Error::Config(format!(
                "no decoder configuration for backbone {self:?} at depth {depth}; depths run 1 to 5"
            )));
        }
        Ok(match self {
            Backbone::LightAe => LIGHT[depth - 1],
            Backbone::DeepAe => DEEP[depth - 1],
            Backbone::Ptv3 => PTV3[depth - 1],
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Backbone::LightAe => "light-ae",
            Backbone::DeepAe => "deep-ae",
            Backbone::Ptv3 => "ptv3",
        }
    }
}

/// All layer widths of one decoder head, output layer included
/// (the last entry is `(K/M)·3`).
pub fn decoder_layer_widths(backbone: Backbone, depth: usize, output_points: usize, heads: usize) -> Result<Vec<usize>> {
    if heads == 0 {
        return Err(Error::Config("head count must be at least 1".into()));
    }
    if output_points % heads != 0 {
        return Err(Error::Config(format!(
            "output size {output_points} is not divisible by {heads} heads"
        )));
    }
    let mut widths = backbone.decoder_hidden_widths(depth)?.to_vec();
    widths.push(output_points / heads * 3);
    Ok(widths)
}

/// Exact trainable-scalar count of the full decoder (all heads): linear
/// weights and biases plus batch-norm affine parameters where the backbone
/// uses them. Running statistics are not trainable and are excluded.
pub fn decoder_param_count(backbone: Backbone, depth: usize, output_points: usize, heads: usize) -> Result<u64> {
    let widths = decoder_layer_widths(backbone, depth, output_points, heads)?;
    let bn = backbone.decoder_batchnorm();
    let mut per_head = 0u64;
    let mut fan_in = backbone.latent_dim() as u64;
    for (i, &w) in widths.iter().enumerate() {
        let w = w as u64;
        per_head += fan_in * w + w;
        if bn && i + 1 < widths.len() {
            per_head += 2 * w;
        }
        fan_in = w;
    }
    Ok(per_head * heads as u64)
}

// ---------------------------------------------------------------------------
// Specs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub latent_dim: usize,
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind) -> Self {
        EncoderSpec {
            kind,
            latent_dim: kind.latent_dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub backbone: Backbone,
    /// Layer count, output layer included.
    pub depth: usize,
    pub heads: usize,
    /// Total points across all heads (each head emits `output_points/heads`).
    pub output_points: usize,
    /// Widths of every layer in one head; the last is `(K/M)·3`.
    pub hidden_dims: Vec<usize>,
    pub use_batchnorm: bool,
}

impl DecoderSpec {
    /// Decoder configuration for `(backbone, depth)` from the fixed
    /// width table.
    pub fn table(backbone: Backbone, depth: usize, heads: usize, output_points: usize) -> Result<Self> {
        let hidden_dims = decoder_layer_widths(backbone, depth, output_points, heads)?;
        Ok(DecoderSpec {
            backbone,
            depth,
            heads,
            output_points,
            hidden_dims,
            use_batchnorm: backbone.decoder_batchnorm(),
        })
    }

    pub fn points_per_head(&self) -> usize {
        self.output_points / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let expect = decoder_layer_widths(self.backbone, self.depth, self.output_points, self.heads)?;
        if self.hidden_dims != expect {
            return Err(Error::Config(format!(
                "decoder widths {:?} do not match the {}-depth-{} table row {:?}",
                self.hidden_dims,
                self.backbone.name(),
                self.depth,
                expect
            )));
        }
        if self.use_batchnorm != self.backbone.decoder_batchnorm() {
            return Err(Error::Config(format!(
                "batchnorm flag {} is not valid for backbone {}",
                self.use_batchnorm,
                self.backbone.name()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
}

// ---------------------------------------------------------------------------
// Model

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub encoder: Vec<Layer>,
    pub heads: Vec<Vec<Layer>>,
}

/// Cached forward pass through encoder and all heads.
#[derive(Debug)]
pub struct ModelPass {
    pub encoder: SeqPass,
    pub heads: Vec<SeqPass>,
    pub batch: usize,
}

impl ModelPass {
    /// Head `i` output viewed as `[B, K/M, 3]` points.
    pub fn head_points(&self, i: usize) -> Result<Tensor> {
        let out = &self.heads[i].output;
        let per_head = out.dim(1) / 3;
        out.clone().reshape(&[self.batch, per_head, 3])
    }
}

fn build_encoder(kind: EncoderKind, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let chans = kind.conv_channels();
    let n_conv = chans.len() - 1;
    let mut layers = Vec::new();
    for i in 0..n_conv {
        let last = i + 1 == n_conv;
        let init = if last { Init::XavierUniform } else { Init::HeNormal };
        layers.push(Layer::PointwiseLinear(init_linear(chans[i + 1], chans[i], init, rng)));
        layers.push(Layer::BatchNorm(BatchNormParams::new(chans[i + 1])));
        if !last {
            layers.push(Layer::Relu);
        }
    }
    layers.push(Layer::MaxPoolPoints);
    layers
}

fn build_head(spec: &DecoderSpec, latent_dim: usize, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let mut layers = Vec::new();
    let mut fan_in = latent_dim;
    let n = spec.hidden_dims.len();
    for (i, &w) in spec.hidden_dims.iter().enumerate() {
        let last = i + 1 == n;
        let init = if last { Init::XavierUniform } else { Init::HeNormal };
        layers.push(Layer::Dense(init_linear(w, fan_in, init, rng)));
        if !last {
            if spec.use_batchnorm {
                layers.push(Layer::BatchNorm(BatchNormParams::new(w)));
            }
            layers.push(Layer::Relu);
        }
        fan_in = w;
    }
    layers
}

/// Builds a model with seeded deterministic initialization.
pub fn build_model(encoder: EncoderSpec, decoder: DecoderSpec, seed: u64) -> Result<Model> {
    if decoder.backbone != encoder.kind.backbone() {
        return Err(Error::Config(format!(
            "decoder backbone {} does not match encoder {:?}",
            decoder.backbone.name(),
            encoder.kind
        )));
    }
    if encoder.latent_dim != encoder.kind.latent_dim() {
        return Err(Error::Config(format!(
            "latent dim {} is fixed to {} for {:?}",
            encoder.latent_dim,
            encoder.kind.latent_dim(),
            encoder.kind
        )));
    }
    decoder.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc_layers = build_encoder(encoder.kind, &mut rng);
    let heads = (0..decoder.heads)
        .map(|_| build_head(&decoder, encoder.latent_dim, &mut rng))
        .collect();
    Ok(Model {
        spec: ModelSpec { encoder, decoder },
        encoder: enc_layers,
        heads,
    })
}

/// Identifies what a named tensor is for traversal and checkpointing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    RunningStat,
}

pub struct NamedTensor<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: &'a Tensor,
}

pub struct NamedTensorMut<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: &'a mut Tensor,
}

fn visit_seq<'a>(prefix: &str, layers: &'a [Layer], out: &mut Vec<NamedTensor<'a>>) {
    for (i, layer) in layers.iter().enumerate() {
        match layer {
            Layer::PointwiseLinear(p) | Layer::Dense(p) => {
                out.push(NamedTensor {
                    name: format!("{prefix}.{i}.weight"),
                    kind: ParamKind::Trainable,
                    tensor: &p.weight,
                });
                out.push(NamedTensor {
                    name: format!("{prefix}.{i}.bias"),
                    kind: ParamKind::Trainable,
                    tensor: &p.bias,
                });
            }
            Layer::BatchNorm(p) => {
                out.push(NamedTensor {
                    name: format!("{prefix}.{i}.gamma"),
                    kind: ParamKind::Trainable,
                    tensor: &p.gamma,
                });
                out.push(NamedTensor {
                    name: format!("{prefix}.{i}.beta"),
                    kind: ParamKind::Trainable,
                    tensor: &p.beta,
                });
                out.push(NamedTensor {
                    name: format!("{prefix}.{i}.running_mean"),
                    kind: ParamKind::RunningStat,
                    tensor: &p.running_mean,
                });
                out.push(NamedTensor {
                    name: format!("{prefix}.{i}.running_var"),
                    kind: ParamKind::RunningStat,
                    tensor: &p.running_var,
                });
            }
            Layer::Relu | Layer::MaxPoolPoints => {}
        }
    }
}

fn visit_seq_mut<'a>(prefix: &str, layers: &'a mut [Layer], out: &mut Vec<NamedTensorMut<'a>>) {
    for (i, layer) in layers.iter_mut().enumerate() {
        match layer {
            Layer::PointwiseLinear(p) | Layer::Dense(p) => {
                out.push(NamedTensorMut {
                    name: format!("{prefix}.{i}.weight"),
                    kind: ParamKind::Trainable,
                    tensor: &mut p.weight,
                });
                out.push(NamedTensorMut {
                    name: format!("{prefix}.{i}.bias"),
                    kind: ParamKind::Trainable,
                    tensor: &mut p.bias,
                });
            }
            Layer::BatchNorm(p) => {
                out.push(NamedTensorMut {
                    name: format!("{prefix}.{i}.gamma"),
                    kind: ParamKind::Trainable,
                    tensor: &mut p.gamma,
                });
                out.push(NamedTensorMut {
                    name: format!("{prefix}.{i}.beta"),
                    kind: ParamKind::Trainable,
                    tensor: &mut p.beta,
                });
                out.push(NamedTensorMut {
                    name: format!("{prefix}.{i}.running_mean"),
                    kind: ParamKind::RunningStat,
                    tensor: &mut p.running_mean,
                });
                out.push(NamedTensorMut {
                    name: format!("{prefix}.{i}.running_var"),
                    kind: ParamKind::RunningStat,
                    tensor: &mut p.running_var,
                });
            }
            Layer::Relu | Layer::MaxPoolPoints => {}
        }
    }
}

impl Model {
    /// Every parameter and running-statistic tensor in declaration order.
    pub fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        visit_seq("encoder", &self.encoder, &mut out);
        for (h, head) in self.heads.iter().enumerate() {
            visit_seq(&format!("head{h}"), head, &mut out);
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let mut out = Vec::new();
        visit_seq_mut("encoder", &mut self.encoder, &mut out);
        for (h, head) in self.heads.iter_mut().enumerate() {
            visit_seq_mut(&format!("head{h}"), head, &mut out);
        }
        out
    }

    /// Count of trainable scalars: linear weights/biases plus batch-norm
    /// affine parameters. Running statistics are excluded.
    pub fn count_parameters(&self) -> u64 {
        self.named_tensors()
            .iter()
            .filter(|t| t.kind == ParamKind::Trainable)
            .map(|t| t.tensor.len() as u64)
            .sum()
    }

    /// Trainable scalars in the decoder heads only.
    pub fn count_decoder_parameters(&self) -> u64 {
        let mut out = Vec::new();
        for (h, head) in self.heads.iter().enumerate() {
            visit_seq(&format!("head{h}"), head, &mut out);
        }
        out.iter()
            .filter(|t| t.kind == ParamKind::Trainable)
            .map(|t| t.tensor.len() as u64)
            .sum()
    }

    fn check_cloud_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 3 || x.dim(1) != 3 {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects [B, 3, N], got {:?}",
                x.shape()
            )));
        }
        if x.dim(2) == 0 {
            return Err(Error::EmptyCloud("encoder input has zero points".into()));
        }
        Ok(())
    }

    /// `[B, 3, N] -> [B, latent_dim]` in eval mode. Permutation-invariant
    /// over the point axis.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_cloud_input(x)?;
        seq_forward_eval(&self.encoder, x)
    }

    /// `[B, latent_dim]` -> one `[B, K/M, 3]` tensor per head, eval mode.
    pub fn decode(&self, latent: &Tensor) -> Result<Vec<Tensor>> {
        if latent.rank() != 2 || latent.dim(1) != self.spec.encoder.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "decoder expects [B, {}], got {:?}",
                self.spec.encoder.latent_dim,
                latent.shape()
            )));
        }
        let b = latent.dim(0);
        let per_head = self.spec.decoder.points_per_head();
        self.heads
            .iter()
            .map(|head| seq_forward_eval(head, latent)?.reshape(&[b, per_head, 3]))
            .collect()
    }

    /// Full autoencoding pass: encode, decode, concatenate heads in head
    /// order into `[B, K, 3]`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let latent = self.encode(x)?;
        let parts = self.decode(&latent)?;
        concat_heads(&parts, self.spec.decoder.output_points)
    }

    /// Training-path forward with caches for the backward pass. May update
    /// batch-norm running statistics in `Train` mode.
    pub fn forward_cached(&mut self, x: &Tensor, mode: Mode) -> Result<ModelPass> {
        self.check_cloud_input(x)?;
        let enc = seq_forward(&mut self.encoder, x, mode)?;
        let mut heads = Vec::with_capacity(self.heads.len());
        for head in self.heads.iter_mut() {
            heads.push(seq_forward(head, &enc.output, mode)?);
        }
        Ok(ModelPass {
            encoder: enc,
            heads,
            batch: x.dim(0),
        })
    }
}

/// Concatenates per-head `[B, K/M, 3]` tensors into `[B, K, 3]`,
/// head-index order, no reordering within heads.
pub fn concat_heads(parts: &[Tensor], total_points: usize) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::Protocol("no head outputs to concatenate".into()));
    }
    let b = parts[0].dim(0);
    let per_head = parts[0].dim(1);
    if per_head * parts.len() != total_points {
        return Err(Error::ShapeMismatch(format!(
            "{} heads of {} points cannot form {} total points",
            parts.len(),
            per_head,
            total_points
        )));
    }
    let mut out = Tensor::zeros(&[b, total_points, 3]);
    for (h, part) in parts.iter().enumerate() {
        for bi in 0..b {
            for j in 0..per_head {
                let dst = h * per_head + j;
                for c in 0..3 {
                    out.set3(bi, dst, c, part.at3(bi, j, c));
                }
            }
        }
    }
    Ok(out)
}

/// Per-layer gradients for a whole model, aligned with its layer layout.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: Vec<LayerGrads>,
    pub heads: Vec<Vec<LayerGrads>>,
}

impl ModelGrads {
    /// Gradient tensors flattened in the model's trainable traversal order.
    pub fn flatten(&self) -> Vec<&Tensor> {
        fn push_seq<'a>(grads: &'a [LayerGrads], out: &mut Vec<&'a Tensor>) {
            for g in grads {
                if let Some(w) = &g.weight {
                    out.push(w);
                }
                if let Some(b) = &g.bias {
                    out.push(b);
                }
            }
        }
        let mut out = Vec::new();
        push_seq(&self.encoder, &mut out);
        for head in &self.heads {
            push_seq(head, &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_cloud(b: usize, n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..b * 3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(&[b, 3, n], data).unwrap()
    }

    fn light_model(depth: usize, heads: usize, k: usize, seed: u64) -> Model {
        let enc = EncoderSpec::new(EncoderKind::LightAe);
        let dec = DecoderSpec::table(Backbone::LightAe, depth, heads, k).unwrap();
        build_model(enc, dec, seed).unwrap()
    }

    #[test]
    fn light_depth1_head_is_a_single_wide_layer() {
        let m = light_model(1, 1, 2048, 0);
        assert_eq!(m.heads.len(), 1);
        assert_eq!(m.heads[0].len(), 1);
        match &m.heads[0][0] {
            Layer::Dense(p) => {
                assert_eq!(p.in_features(), 128);
                assert_eq!(p.out_features(), 6144);
            }
            other => panic!("expected dense output layer, got {}", other.kind_name()),
        }
    }

    #[test]
    fn deep_depth3_two_heads_have_batchnorm_and_half_output() {
        let enc = EncoderSpec::new(EncoderKind::DeepAe);
        let dec = DecoderSpec::table(Backbone::DeepAe, 3, 2, 2048).unwrap();
        assert_eq!(dec.hidden_dims, vec![512, 1024, 3072]);
        let m = build_model(enc, dec, 1).unwrap();
        assert_eq!(m.heads.len(), 2);
        let kinds: Vec<&str> = m.heads[0].iter().map(|l| l.kind_name()).collect();
        assert_eq!(
            kinds,
            vec!["dense", "batchnorm", "relu", "dense", "batchnorm", "relu", "dense"]
        );
    }

    #[test]
    fn building_twice_with_same_seed_is_identical() {
        let a = light_model(3, 2, 256, 42);
        let b = light_model(3, 2, 256, 42);
        for (ta, tb) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert_eq!(ta.name, tb.name);
            assert_eq!(ta.tensor.data(), tb.tensor.data());
        }
        let c = light_model(3, 2, 256, 43);
        let differs = a
            .named_tensors()
            .iter()
            .zip(c.named_tensors())
            .any(|(x, y)| x.tensor.data() != y.tensor.data());
        assert!(differs, "different seeds should give different weights");
    }

    #[test]
    fn reference_decoder_counts() {
        assert_eq!(decoder_param_count(Backbone::LightAe, 1, 2048, 1).unwrap(), 792_576);
        assert_eq!(decoder_param_count(Backbone::LightAe, 2, 2048, 2).unwrap(), 1_645_056);
        assert_eq!(decoder_param_count(Backbone::DeepAe, 1, 2048, 1).unwrap(), 6_297_600);
        assert_eq!(decoder_param_count(Backbone::DeepAe, 1, 2048, 2).unwrap(), 6_297_600);
    }

    #[test]
    fn built_models_match_the_arithmetic_count() {
        for (kind, backbone) in [
            (EncoderKind::LightAe, Backbone::LightAe),
            (EncoderKind::DeepAe, Backbone::DeepAe),
        ] {
            for depth in [1, 3] {
                for heads in [1, 2] {
                    let dec = DecoderSpec::table(backbone, depth, heads, 256).unwrap();
                    let m = build_model(EncoderSpec::new(kind), dec, 5).unwrap();
                    assert_eq!(
                        m.count_decoder_parameters(),
                        decoder_param_count(backbone, depth, 256, heads).unwrap(),
                        "{backbone:?} depth {depth} heads {heads}"
                    );
                }
            }
        }
    }

    #[test]
    fn encode_is_permutation_invariant() {
        let m = light_model(1, 1, 64, 9);
        let x = random_cloud(1, 16, 3);
        let mut perm: Vec<usize> = (0..16).collect();
        perm.reverse();
        perm.swap(2, 9);
        let mut shuffled = Tensor::zeros(&[1, 3, 16]);
        for c in 0..3 {
            for (dst, &src) in perm.iter().enumerate() {
                shuffled.set3(0, c, dst, x.at3(0, c, src));
            }
        }
        let a = m.encode(&x).unwrap();
        let b = m.encode(&shuffled).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn single_point_latent_equals_per_point_features() {
        let m = light_model(1, 1, 64, 10);
        let x = random_cloud(1, 1, 4);
        // Everything before the final max pool.
        let pre_pool = &m.encoder[..m.encoder.len() - 1];
        let feats = seq_forward_eval(pre_pool, &x).unwrap();
        let latent = m.encode(&x).unwrap();
        for c in 0..latent.dim(1) {
            assert_eq!(latent.at2(0, c), feats.at3(0, c, 0));
        }
    }

    #[test]
    fn identical_clouds_in_a_batch_get_identical_latents() {
        let m = light_model(1, 1, 64, 11);
        let one = random_cloud(1, 32, 5);
        let mut two = Tensor::zeros(&[2, 3, 32]);
        for c in 0..3 {
            for n in 0..32 {
                two.set3(0, c, n, one.at3(0, c, n));
                two.set3(1, c, n, one.at3(0, c, n));
            }
        }
        let latent = m.encode(&two).unwrap();
        assert_eq!(latent.row2(0), latent.row2(1));
    }

    #[test]
    fn decode_emits_points_per_head() {
        let m = light_model(2, 2, 2048, 12);
        let latent = Tensor::zeros(&[1, 128]);
        let parts = m.decode(&latent).unwrap();
        assert_eq!(parts.len(), 2);
        for p in &parts {
            assert_eq!(p.shape(), &[1, 1024, 3]);
        }
        let single = light_model(2, 1, 2048, 12);
        let parts = single.decode(&latent).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].shape(), &[1, 2048, 3]);
    }

    #[test]
    fn heads_are_independent() {
        let mut m = light_model(2, 2, 64, 13);
        let x = random_cloud(1, 24, 6);
        let before = m.reconstruct(&x).unwrap();
        // Zero out head 1's parameters.
        for layer in m.heads[1].iter_mut() {
            if let Layer::Dense(p) = layer {
                p.weight.data_mut().fill(0.0);
                p.bias.data_mut().fill(0.0);
            }
        }
        let after = m.reconstruct(&x).unwrap();
        let per_head = 32;
        for j in 0..per_head {
            for c in 0..3 {
                assert_eq!(before.at3(0, j, c), after.at3(0, j, c), "head 0 slice must not change");
            }
        }
        for j in per_head..64 {
            for c in 0..3 {
                assert_eq!(after.at3(0, j, c), 0.0, "zeroed head must emit zeros");
            }
        }
    }

    #[test]
    fn reconstruct_matches_encode_decode_for_single_head() {
        let m = light_model(3, 1, 2048, 14);
        let x = random_cloud(2, 50, 7);
        let direct = m.reconstruct(&x).unwrap();
        assert_eq!(direct.shape(), &[2, 2048, 3]);
        direct.check_finite("reconstruction").unwrap();
        let latent = m.encode(&x).unwrap();
        let parts = m.decode(&latent).unwrap();
        assert_eq!(direct.data(), parts[0].data());
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        assert!(DecoderSpec::table(Backbone::LightAe, 0, 1, 2048).is_err());
        assert!(DecoderSpec::table(Backbone::LightAe, 6, 1, 2048).is_err());
        assert!(DecoderSpec::table(Backbone::LightAe, 2, 3, 2048).is_err(), "2048 % 3 != 0");
        let enc = EncoderSpec::new(EncoderKind::LightAe);
        let dec = DecoderSpec::table(Backbone::DeepAe, 2, 1, 2048).unwrap();
        assert!(build_model(enc, dec, 0).is_err(), "backbone mismatch");
    }
}
