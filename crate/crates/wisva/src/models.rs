//! The heatmap prediction models: a three-branch convolutional encoder into
//! a shared variational latent space with a mirrored transposed-conv decoder,
//! plus a deterministic autoencoder baseline of the same topology.
//!
//! Each encoder branch processes one physical channel group (distance plus
//! auxiliary masks, permittivity, AP location) independently; features are
//! concatenated channel-wise and compressed through a trunk into either
//! (mu, logvar) heads (VAE) or a single dense bottleneck (AE). All forward
//! passes are pure; sampling noise enters only through explicit arguments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid2;
use crate::nn::{
    kaiming_uniform, leaky_relu, leaky_relu_backward, leaky_relu_gain, sigmoid, sigmoid_backward,
    Conv2d, Conv2dGrads, ConvTranspose2d, Dense, DenseGrads, NnError, Real, TensorBuffer,
};
use crate::tensors::SampleTensors;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const LOGVAR_CLAMP: f64 = 10.0;
pub const BRANCH_CHANNELS: [usize; 3] = [16, 32, 64];
pub const TRUNK_CHANNELS: usize = 64;
pub const TRUNK_FEATURES: usize = 256;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("model expects {expected} input channels in branch 1, sample has {got}")]
    AuxMismatch { expected: usize, got: usize },
    #[error("model resolution {model} does not match sample resolution {sample}")]
    ResolutionMismatch { model: usize, sample: usize },
    #[error("input resolution {0} must be a positive multiple of 8")]
    BadResolution(usize),
    #[error("checkpoint tensor {0:?} is unknown to this model")]
    UnknownTensor(String),
    #[error("checkpoint tensor {name:?} has dims {got:?}, expected {expected:?}")]
    TensorDims { name: String, got: Vec<usize>, expected: Vec<usize> },
    #[error("checkpoint is missing tensor {0:?}")]
    MissingTensor(String),
}

/// Architecture hyperparameters shared by the VAE and the AE baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_res: usize,
    pub latent_dim: usize,
    pub aux_channels: bool,
    /// Meter-valued input channels are divided by this before entering the
    /// network; raw distances in meters condition poorly.
    pub distance_scale_m: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { input_res: 64, latent_dim: 64, aux_channels: true, distance_scale_m: 100.0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_res == 0 || self.input_res % 8 != 0 {
            return Err(ModelError::BadResolution(self.input_res));
        }
        Ok(())
    }

    /// Channels entering branch 1 (distance, plus LOS and shelf distance
    /// when aux channels are enabled).
    pub fn branch1_channels(&self) -> usize {
        if self.aux_channels {
            3
        } else {
            1
        }
    }

    /// Spatial side length after the three stride-2 branch blocks.
    pub fn bottleneck_res(&self) -> usize {
        self.input_res / 8
    }

    pub fn flat_features(&self) -> usize {
        TRUNK_CHANNELS * self.bottleneck_res() * self.bottleneck_res()
    }
}

/// Batched per-branch inputs, each (N, C, R, R).
pub struct BranchInputs<E = f32> {
    pub b1: TensorBuffer<E>,
    pub b2: TensorBuffer<E>,
    pub b3: TensorBuffer<E>,
}

impl<E: Real> BranchInputs<E> {
    /// Assembles the branch stacks for a batch of samples, applying the
    /// model's fixed input scaling to meter-valued channels.
    pub fn from_samples(cfg: &ModelConfig, samples: &[&SampleTensors]) -> Result<Self, ModelError> {
        cfg.validate()?;
        let n = samples.len();
        let r = cfg.input_res;
        let c1 = cfg.branch1_channels();
        let inv_scale = 1.0 / cfg.distance_scale_m;

        let mut b1 = TensorBuffer::zeros(vec![n, c1, r, r]);
        let mut b2 = TensorBuffer::zeros(vec![n, 1, r, r]);
        let mut b3 = TensorBuffer::zeros(vec![n, 1, r, r]);
        for (k, s) in samples.iter().enumerate() {
            if s.resolution() != r {
                return Err(ModelError::ResolutionMismatch { model: r, sample: s.resolution() });
            }
            let has_aux = s.aux.is_some();
            if cfg.aux_channels != has_aux {
                return Err(ModelError::AuxMismatch {
                    expected: c1,
                    got: if has_aux { 3 } else { 1 },
                });
            }
            let plane = r * r;
            let dst1 = &mut b1.data_mut()[k * c1 * plane..][..c1 * plane];
            for (d, &v) in dst1[..plane].iter_mut().zip(s.distance.values()) {
                *d = E::from_f64(v as f64 * inv_scale);
            }
            if let Some((los, shelf)) = &s.aux {
                for (d, &v) in dst1[plane..2 * plane].iter_mut().zip(los.values()) {
                    *d = E::from_f64(v as f64);
                }
                for (d, &v) in dst1[2 * plane..].iter_mut().zip(shelf.values()) {
                    *d = E::from_f64(v as f64 * inv_scale);
                }
            }
            for (d, &v) in b2.data_mut()[k * plane..][..plane].iter_mut().zip(s.permittivity.values()) {
                *d = E::from_f64(v as f64);
            }
            for (d, &v) in b3.data_mut()[k * plane..][..plane].iter_mut().zip(s.ap_map.values()) {
                *d = E::from_f64(v as f64);
            }
        }
        Ok(Self { b1, b2, b3 })
    }

    pub fn batch_size(&self) -> usize {
        self.b1.dims()[0]
    }
}

/// Batched targets (N, 1, R, R) from normalized heatmaps.
pub fn target_batch<E: Real>(samples: &[&SampleTensors]) -> TensorBuffer<E> {
    let n = samples.len();
    let r = samples[0].target.h();
    let mut t = TensorBuffer::zeros(vec![n, 1, r, r]);
    for (k, s) in samples.iter().enumerate() {
        for (d, &v) in t.data_mut()[k * r * r..][..r * r].iter_mut().zip(s.target.values()) {
            *d = E::from_f64(v as f64);
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Encoder / decoder cores
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCore<E = f32> {
    pub branches: [[Conv2d<E>; 3]; 3],
    pub trunk_conv: Conv2d<E>,
    pub trunk_dense: Dense<E>,
}

pub struct BranchCache<E> {
    input: TensorBuffer<E>,
    pre: Vec<TensorBuffer<E>>,
    act: Vec<TensorBuffer<E>>,
}

pub struct EncCache<E> {
    branches: Vec<BranchCache<E>>,
    concat: TensorBuffer<E>,
    trunk_pre: TensorBuffer<E>,
    trunk_act: TensorBuffer<E>,
    dense_pre: TensorBuffer<E>,
    /// Activated (N, TRUNK_FEATURES) trunk output feeding the heads.
    pub feat: TensorBuffer<E>,
}

pub struct EncGrads<E> {
    pub branches: [[Conv2dGrads<E>; 3]; 3],
    pub trunk_conv: Conv2dGrads<E>,
    pub trunk_dense: DenseGrads<E>,
}

impl<E: Real> EncoderCore<E> {
    fn zeros(cfg: &ModelConfig) -> Self {
        let branch = |in_ch: usize| {
            [
                Conv2d::zeros(BRANCH_CHANNELS[0], in_ch, 3, 2, 1),
                Conv2d::zeros(BRANCH_CHANNELS[1], BRANCH_CHANNELS[0], 3, 2, 1),
                Conv2d::zeros(BRANCH_CHANNELS[2], BRANCH_CHANNELS[1], 3, 2, 1),
            ]
        };
        Self {
            branches: [branch(cfg.branch1_channels()), branch(1), branch(1)],
            trunk_conv: Conv2d::zeros(TRUNK_CHANNELS, 3 * BRANCH_CHANNELS[2], 3, 1, 1),
            trunk_dense: Dense::zeros(cfg.flat_features(), TRUNK_FEATURES),
        }
    }

    pub fn forward(&self, x: &BranchInputs<E>) -> Result<EncCache<E>, NnError> {
        let slope = E::from_f64(LEAKY_SLOPE);
        let inputs = [&x.b1, &x.b2, &x.b3];
        let mut branch_caches = Vec::with_capacity(3);
        for (bi, convs) in self.branches.iter().enumerate() {
            let mut pre = Vec::with_capacity(3);
            let mut act = Vec::with_capacity(3);
            let mut cur = inputs[bi].clone();
            for conv in convs {
                let p = conv.forward(&cur)?;
                let a = leaky_relu(&p, slope);
                pre.push(p);
                cur = a.clone();
                act.push(a);
            }
            branch_caches.push(BranchCache { input: inputs[bi].clone(), pre, act });
        }

        // Channel-wise concat of the three branch outputs.
        let (n, c, h, w) = branch_caches[0].act[2].dims4();
        let mut concat = TensorBuffer::zeros(vec![n, 3 * c, h, w]);
        let plane = c * h * w;
        for bn in 0..n {
            for (bi, bc) in branch_caches.iter().enumerate() {
                let src = &bc.act[2].data()[bn * plane..][..plane];
                concat.data_mut()[(bn * 3 + bi) * plane..][..plane].copy_from_slice(src);
            }
        }

        let trunk_pre = self.trunk_conv.forward(&concat)?;
        let trunk_act = leaky_relu(&trunk_pre, slope);
        let flat = trunk_act.clone().reshaped(vec![n, trunk_act.len() / n]);
        let dense_pre = self.trunk_dense.forward(&flat)?;
        let feat = leaky_relu(&dense_pre, slope);
        Ok(EncCache { branches: branch_caches, concat, trunk_pre, trunk_act, dense_pre, feat })
    }

    /// Backward from the gradient on `feat`. Input gradients are discarded
    /// (inputs are data, not parameters).
    pub fn backward(&self, cache: &EncCache<E>, g_feat: &TensorBuffer<E>) -> Result<EncGrads<E>, NnError> {
        let slope = E::from_f64(LEAKY_SLOPE);
        let g_dense_pre = leaky_relu_backward(&cache.dense_pre, g_feat, slope);
        let n = cache.trunk_act.dims()[0];
        let flat = cache.trunk_act.clone().reshaped(vec![n, cache.trunk_act.len() / n]);
        let (g_flat, g_trunk_dense) = self.trunk_dense.backward(&flat, &g_dense_pre)?;
        let g_trunk_act = g_flat.reshaped(cache.trunk_act.dims().to_vec());
        let g_trunk_pre = leaky_relu_backward(&cache.trunk_pre, &g_trunk_act, slope);
        let (g_concat, g_trunk_conv) = self.trunk_conv.backward(&cache.concat, &g_trunk_pre)?;

        // Split the concat gradient back into per-branch chunks.
        let (_, c3, h, w) = cache.concat.dims4();
        let c = c3 / 3;
        let plane = c * h * w;
        let mut branch_grads: Vec<[Conv2dGrads<E>; 3]> = Vec::with_capacity(3);
        for (bi, bc) in cache.branches.iter().enumerate() {
            let mut g_out = TensorBuffer::zeros(vec![n, c, h, w]);
            for bn in 0..n {
                let src = &g_concat.data()[(bn * 3 + bi) * plane..][..plane];
                g_out.data_mut()[bn * plane..][..plane].copy_from_slice(src);
            }
            let convs = &self.branches[bi];
            let mut g_cur = g_out;
            let mut grads: Vec<Conv2dGrads<E>> = Vec::with_capacity(3);
            for j in (0..3).rev() {
                let g_pre = leaky_relu_backward(&bc.pre[j], &g_cur, slope);
                let input = if j == 0 { &bc.input } else { &bc.act[j - 1] };
                let (g_in, g_conv) = convs[j].backward(input, &g_pre)?;
                grads.push(g_conv);
                g_cur = g_in;
            }
            grads.reverse();
            let [g0, g1, g2] = <[Conv2dGrads<E>; 3]>::try_from(grads).ok().unwrap();
            branch_grads.push([g0, g1, g2]);
        }
        let [b0, b1, b2] = <[[Conv2dGrads<E>; 3]; 3]>::try_from(branch_grads).ok().unwrap();
        Ok(EncGrads { branches: [b0, b1, b2], trunk_conv: g_trunk_conv, trunk_dense: g_trunk_dense })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCore<E = f32> {
    pub fc_latent: Dense<E>,
    pub fc_expand: Dense<E>,
    pub deconvs: [ConvTranspose2d<E>; 3],
}

pub struct DecCache<E> {
    z: TensorBuffer<E>,
    fc1_pre: TensorBuffer<E>,
    fc1_act: TensorBuffer<E>,
    fc2_pre: TensorBuffer<E>,
    fc2_act: TensorBuffer<E>,
    deconv_pre: Vec<TensorBuffer<E>>,
    deconv_act: Vec<TensorBuffer<E>>,
    /// Sigmoid output (N, 1, R, R).
    pub output: TensorBuffer<E>,
}

pub struct DecGrads<E> {
    pub fc_latent: DenseGrads<E>,
    pub fc_expand: DenseGrads<E>,
    pub deconvs: [Conv2dGrads<E>; 3],
}

impl<E: Real> DecoderCore<E> {
    fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            fc_latent: Dense::zeros(cfg.latent_dim, TRUNK_FEATURES),
            fc_expand: Dense::zeros(TRUNK_FEATURES, cfg.flat_features()),
            deconvs: [
                ConvTranspose2d::zeros(TRUNK_CHANNELS, BRANCH_CHANNELS[1], 4, 2, 1),
                ConvTranspose2d::zeros(BRANCH_CHANNELS[1], BRANCH_CHANNELS[0], 4, 2, 1),
                ConvTranspose2d::zeros(BRANCH_CHANNELS[0], 1, 4, 2, 1),
            ],
        }
    }

    pub fn forward(&self, cfg: &ModelConfig, z: &TensorBuffer<E>) -> Result<DecCache<E>, NnError> {
        let slope = E::from_f64(LEAKY_SLOPE);
        let n = z.dims()[0];
        let fc1_pre = self.fc_latent.forward(z)?;
        let fc1_act = leaky_relu(&fc1_pre, slope);
        let fc2_pre = self.fc_expand.forward(&fc1_act)?;
        let fc2_act = leaky_relu(&fc2_pre, slope);
        let r = cfg.bottleneck_res();
        let mut cur = fc2_act.clone().reshaped(vec![n, TRUNK_CHANNELS, r, r]);
        let mut deconv_pre = Vec::with_capacity(3);
        let mut deconv_act = Vec::with_capacity(3);
        for (j, deconv) in self.deconvs.iter().enumerate() {
            let p = deconv.forward(&cur)?;
            if j < 2 {
                let a = leaky_relu(&p, slope);
                cur = a.clone();
                deconv_pre.push(p);
                deconv_act.push(a);
            } else {
                let out = sigmoid(&p);
                deconv_pre.push(p);
                deconv_act.push(out.clone());
                return Ok(DecCache {
                    z: z.clone(),
                    fc1_pre,
                    fc1_act,
                    fc2_pre,
                    fc2_act,
                    deconv_pre,
                    deconv_act,
                    output: out,
                });
            }
        }
        unreachable!("decoder always returns from the final deconv");
    }

    /// Backward from the gradient on the sigmoid output; returns the latent
    /// gradient.
    pub fn backward(
        &self,
        cfg: &ModelConfig,
        cache: &DecCache<E>,
        g_out: &TensorBuffer<E>,
    ) -> Result<(TensorBuffer<E>, DecGrads<E>), NnError> {
        let slope = E::from_f64(LEAKY_SLOPE);
        let mut g_cur = sigmoid_backward(&cache.deconv_act[2], g_out);
        let mut grads: Vec<Conv2dGrads<E>> = Vec::with_capacity(3);
        for j in (0..3).rev() {
            if j < 2 {
                g_cur = leaky_relu_backward(&cache.deconv_pre[j], &g_cur, slope);
            }
            let n = cache.z.dims()[0];
            let r = cfg.bottleneck_res();
            let input_owned;
            let input = if j == 0 {
                input_owned = cache.fc2_act.clone().reshaped(vec![n, TRUNK_CHANNELS, r, r]);
                &input_owned
            } else {
                &cache.deconv_act[j - 1]
            };
            let (g_in, g_conv) = self.deconvs[j].backward(input, &g_cur)?;
            grads.push(g_conv);
            g_cur = g_in;
        }
        grads.reverse();
        let n = cache.z.dims()[0];
        let g_fc2_act = g_cur.reshaped(vec![n, cfg.flat_features()]);
        let g_fc2_pre = leaky_relu_backward(&cache.fc2_pre, &g_fc2_act, slope);
        let (g_fc1_act, g_fc_expand) = self.fc_expand.backward(&cache.fc1_act, &g_fc2_pre)?;
        let g_fc1_pre = leaky_relu_backward(&cache.fc1_pre, &g_fc1_act, slope);
        let (g_z, g_fc_latent) = self.fc_latent.backward(&cache.z, &g_fc1_pre)?;
        let [d0, d1, d2] = <[Conv2dGrads<E>; 3]>::try_from(grads).ok().unwrap();
        Ok((g_z, DecGrads { fc_latent: g_fc_latent, fc_expand: g_fc_expand, deconvs: [d0, d1, d2] }))
    }
}

// ---------------------------------------------------------------------------
// VAE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams<E = f32> {
    pub cfg: ModelConfig,
    pub encoder: EncoderCore<E>,
    pub mu_head: Dense<E>,
    pub logvar_head: Dense<E>,
    pub decoder: DecoderCore<E>,
}

pub struct VaeCache<E> {
    pub enc: EncCache<E>,
    pub logvar_pre: TensorBuffer<E>,
    pub mu: TensorBuffer<E>,
    pub logvar: TensorBuffer<E>,
}

pub struct VaeGrads<E> {
    pub enc: EncGrads<E>,
    pub mu_head: DenseGrads<E>,
    pub logvar_head: DenseGrads<E>,
    pub dec: DecGrads<E>,
}

/// `z = mu + exp(logvar / 2) * noise`, elementwise.
pub fn reparameterize<E: Real>(
    mu: &TensorBuffer<E>,
    logvar: &TensorBuffer<E>,
    noise: &TensorBuffer<E>,
) -> TensorBuffer<E> {
    assert_eq!(mu.dims(), logvar.dims());
    assert_eq!(mu.dims(), noise.dims());
    let half = E::from_f64(0.5);
    let data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(noise.data())
        .map(|((&m, &lv), &n)| m + (lv * half).exp() * n)
        .collect();
    TensorBuffer::from_vec(mu.dims().to_vec(), data)
}

impl<E: Real> VaeParams<E> {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut model = Self {
            cfg,
            encoder: EncoderCore::zeros(&cfg),
            mu_head: Dense::zeros(TRUNK_FEATURES, cfg.latent_dim),
            logvar_head: Dense::zeros(TRUNK_FEATURES, cfg.latent_dim),
            decoder: DecoderCore::zeros(&cfg),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden_gain = leaky_relu_gain(LEAKY_SLOPE);
        for (name, t) in model.named_tensors_mut() {
            if !name.ends_with(".weight") {
                continue;
            }
            let dims = t.dims().to_vec();
            let (fan_in, gain) = match dims.len() {
                4 if name.contains("deconv") => (dims[0] * dims[2] * dims[3], hidden_gain),
                4 => (dims[1] * dims[2] * dims[3], hidden_gain),
                2 => {
                    let linear_out = name.contains("mu") || name.contains("logvar") || name.contains("bottleneck");
                    (dims[0], if linear_out { 1.0 } else { hidden_gain })
                }
                _ => (t.len(), 1.0),
            };
            kaiming_uniform(t, fan_in, gain, &mut rng);
        }
        Ok(model)
    }

    /// Encodes a batch into the posterior parameters (mu, logvar), with
    /// logvar clamped to +-[`LOGVAR_CLAMP`].
    pub fn encode(&self, x: &BranchInputs<E>) -> Result<(TensorBuffer<E>, TensorBuffer<E>), ModelError> {
        let cache = self.encode_cached(x)?;
        Ok((cache.mu, cache.logvar))
    }

    pub fn encode_cached(&self, x: &BranchInputs<E>) -> Result<VaeCache<E>, ModelError> {
        let enc = self.encoder.forward(x)?;
        let mu = self.mu_head.forward(&enc.feat)?;
        let logvar_pre = self.logvar_head.forward(&enc.feat)?;
        let clamp = E::from_f64(LOGVAR_CLAMP);
        let logvar = logvar_pre.map(|v| v.min(clamp).max(-clamp));
        Ok(VaeCache { enc, logvar_pre, mu, logvar })
    }

    /// Decodes a latent batch into heatmaps in [0, 1], dims (N, 1, R, R).
    pub fn decode(&self, z: &TensorBuffer<E>) -> Result<TensorBuffer<E>, ModelError> {
        Ok(self.decoder.forward(&self.cfg, z)?.output)
    }

    pub fn decode_cached(&self, z: &TensorBuffer<E>) -> Result<DecCache<E>, ModelError> {
        Ok(self.decoder.forward(&self.cfg, z)?)
    }

    /// Full backward pass: gradients of a scalar objective given its
    /// gradients on the reconstruction, mu, and logvar.
    pub fn backward(
        &self,
        cache: &VaeCache<E>,
        dec_cache: &DecCache<E>,
        g_recon: &TensorBuffer<E>,
        g_mu_extra: &TensorBuffer<E>,
        g_logvar_extra: &TensorBuffer<E>,
        noise: &TensorBuffer<E>,
    ) -> Result<VaeGrads<E>, ModelError> {
        let (g_z, dec_grads) = self.decoder.backward(&self.cfg, dec_cache, g_recon)?;

        // z = mu + exp(lv/2) * noise.
        let half = E::from_f64(0.5);
        let mut g_mu = g_z.clone();
        for (g, e) in g_mu.data_mut().iter_mut().zip(g_mu_extra.data()) {
            *g += *e;
        }
        let mut g_logvar = TensorBuffer::zeros(cache.logvar.dims().to_vec());
        for (((g, &gz), &lv), &nz) in g_logvar
            .data_mut()
            .iter_mut()
            .zip(g_z.data())
            .zip(cache.logvar.data())
            .zip(noise.data())
        {
            *g = gz * half * (lv * half).exp() * nz;
        }
        for (g, e) in g_logvar.data_mut().iter_mut().zip(g_logvar_extra.data()) {
            *g += *e;
        }
        // Clamp pass-through only strictly inside the range.
        let clamp = E::from_f64(LOGVAR_CLAMP);
        for (g, &pre) in g_logvar.data_mut().iter_mut().zip(cache.logvar_pre.data()) {
            if pre >= clamp || pre <= -clamp {
                *g = E::zero();
            }
        }

        let (g_feat_mu, g_mu_head) = self.mu_head.backward(&cache.enc.feat, &g_mu)?;
        let (g_feat_lv, g_logvar_head) = self.logvar_head.backward(&cache.enc.feat, &g_logvar)?;
        let mut g_feat = g_feat_mu;
        for (g, e) in g_feat.data_mut().iter_mut().zip(g_feat_lv.data()) {
            *g += *e;
        }
        let enc_grads = self.encoder.backward(&cache.enc, &g_feat)?;
        Ok(VaeGrads { enc: enc_grads, mu_head: g_mu_head, logvar_head: g_logvar_head, dec: dec_grads })
    }

    /// Eval-mode prediction (posterior mean, no sampling) for one sample.
    pub fn predict(&self, sample: &SampleTensors) -> Result<Grid2<f32>, ModelError> {
        let x = BranchInputs::from_samples(&self.cfg, &[sample])?;
        let (mu, _) = self.encode(&x)?;
        let out = self.decode(&mu)?;
        let r = self.cfg.input_res;
        Ok(Grid2::from_vec(r, r, out.data().iter().map(|v| v.as_f64() as f32).collect()))
    }

    pub fn named_tensors(&self) -> Vec<(String, &TensorBuffer<E>)> {
        let mut out = named_encoder(&self.encoder);
        out.push(("vae.mu.weight".into(), &self.mu_head.weight));
        out.push(("vae.mu.bias".into(), &self.mu_head.bias));
        out.push(("vae.logvar.weight".into(), &self.logvar_head.weight));
        out.push(("vae.logvar.bias".into(), &self.logvar_head.bias));
        out.extend(named_decoder(&self.decoder));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut TensorBuffer<E>)> {
        let mut out = named_encoder_mut(&mut self.encoder);
        out.push(("vae.mu.weight".into(), &mut self.mu_head.weight));
        out.push(("vae.mu.bias".into(), &mut self.mu_head.bias));
        out.push(("vae.logvar.weight".into(), &mut self.logvar_head.weight));
        out.push(("vae.logvar.bias".into(), &mut self.logvar_head.bias));
        out.extend(named_decoder_mut(&mut self.decoder));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<T: Real>(&self) -> VaeParams<T> {
        let mut dst = VaeParams::<T> {
            cfg: self.cfg,
            encoder: EncoderCore::zeros(&self.cfg),
            mu_head: Dense::zeros(TRUNK_FEATURES, self.cfg.latent_dim),
            logvar_head: Dense::zeros(TRUNK_FEATURES, self.cfg.latent_dim),
            decoder: DecoderCore::zeros(&self.cfg),
        };
        let src = self.named_tensors();
        for ((_, d), (_, s)) in dst.named_tensors_mut().into_iter().zip(src) {
            *d = s.cast();
        }
        dst
    }
}

impl<E: Real> VaeGrads<E> {
    /// Gradient tensors in the same order as `VaeParams::named_tensors`.
    pub fn into_ordered(self) -> Vec<TensorBuffer<E>> {
        let mut out = ordered_encoder(self.enc);
        out.push(self.mu_head.weight);
        out.push(self.mu_head.bias);
        out.push(self.logvar_head.weight);
        out.push(self.logvar_head.bias);
        out.extend(ordered_decoder(self.dec));
        out
    }
}

// ---------------------------------------------------------------------------
// AE baseline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AeParams<E = f32> {
    pub cfg: ModelConfig,
    pub encoder: EncoderCore<E>,
    pub bottleneck: Dense<E>,
    pub decoder: DecoderCore<E>,
}

pub struct AeCache<E> {
    pub enc: EncCache<E>,
    pub z: TensorBuffer<E>,
    pub dec: DecCache<E>,
}

pub struct AeGrads<E> {
    pub enc: EncGrads<E>,
    pub bottleneck: DenseGrads<E>,
    pub dec: DecGrads<E>,
}

impl<E: Real> AeParams<E> {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        // Reuse the VAE init stream so shared layers start identically.
        let vae = VaeParams::init(cfg, seed)?;
        Ok(Self {
            cfg,
            encoder: vae.encoder,
            bottleneck: vae.mu_head,
            decoder: vae.decoder,
        })
    }

    /// Deterministic reconstruction, dims (N, 1, R, R), values in [0, 1].
    pub fn forward(&self, x: &BranchInputs<E>) -> Result<TensorBuffer<E>, ModelError> {
        Ok(self.forward_cached(x)?.dec.output)
    }

    pub fn forward_cached(&self, x: &BranchInputs<E>) -> Result<AeCache<E>, ModelError> {
        let enc = self.encoder.forward(x)?;
        let z = self.bottleneck.forward(&enc.feat)?;
        let dec = self.decoder.forward(&self.cfg, &z)?;
        Ok(AeCache { enc, z, dec })
    }

    pub fn backward(&self, cache: &AeCache<E>, g_recon: &TensorBuffer<E>) -> Result<AeGrads<E>, ModelError> {
        let (g_z, dec_grads) = self.decoder.backward(&self.cfg, &cache.dec, g_recon)?;
        let (g_feat, g_bottleneck) = self.bottleneck.backward(&cache.enc.feat, &g_z)?;
        let enc_grads = self.encoder.backward(&cache.enc, &g_feat)?;
        Ok(AeGrads { enc: enc_grads, bottleneck: g_bottleneck, dec: dec_grads })
    }

    pub fn predict(&self, sample: &SampleTensors) -> Result<Grid2<f32>, ModelError> {
        let x = BranchInputs::from_samples(&self.cfg, &[sample])?;
        let out = self.forward(&x)?;
        let r = self.cfg.input_res;
        Ok(Grid2::from_vec(r, r, out.data().iter().map(|v| v.as_f64() as f32).collect()))
    }

    pub fn named_tensors(&self) -> Vec<(String, &TensorBuffer<E>)> {
        let mut out = named_encoder(&self.encoder);
        out.push(("ae.bottleneck.weight".into(), &self.bottleneck.weight));
        out.push(("ae.bottleneck.bias".into(), &self.bottleneck.bias));
        out.extend(named_decoder(&self.decoder));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut TensorBuffer<E>)> {
        let mut out = named_encoder_mut(&mut self.encoder);
        out.push(("ae.bottleneck.weight".into(), &mut self.bottleneck.weight));
        out.push(("ae.bottleneck.bias".into(), &mut self.bottleneck.bias));
        out.extend(named_decoder_mut(&mut self.decoder));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

impl<E: Real> AeGrads<E> {
    pub fn into_ordered(self) -> Vec<TensorBuffer<E>> {
        let mut out = ordered_encoder(self.enc);
        out.push(self.bottleneck.weight);
        out.push(self.bottleneck.bias);
        out.extend(ordered_decoder(self.dec));
        out
    }
}

// ---------------------------------------------------------------------------
// Unified model handle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vae,
    Ae,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Vae => "vae",
            ModelKind::Ae => "ae",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vae" => Ok(ModelKind::Vae),
            "ae" => Ok(ModelKind::Ae),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// Either trainable model behind one handle.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Vae(VaeParams<f32>),
    Ae(AeParams<f32>),
}

impl Model {
    pub fn init(kind: ModelKind, cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Ok(match kind {
            ModelKind::Vae => Model::Vae(VaeParams::init(cfg, seed)?),
            ModelKind::Ae => Model::Ae(AeParams::init(cfg, seed)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Vae(_) => ModelKind::Vae,
            Model::Ae(_) => ModelKind::Ae,
        }
    }

    pub fn cfg(&self) -> &ModelConfig {
        match self {
            Model::Vae(m) => &m.cfg,
            Model::Ae(m) => &m.cfg,
        }
    }

    /// Eval-mode prediction: deterministic for both kinds (the VAE decodes
    /// its posterior mean).
    pub fn predict(&self, sample: &SampleTensors) -> Result<Grid2<f32>, ModelError> {
        match self {
            Model::Vae(m) => m.predict(sample),
            Model::Ae(m) => m.predict(sample),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &TensorBuffer<f32>)> {
        match self {
            Model::Vae(m) => m.named_tensors(),
            Model::Ae(m) => m.named_tensors(),
        }
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut TensorBuffer<f32>)> {
        match self {
            Model::Vae(m) => m.named_tensors_mut(),
            Model::Ae(m) => m.named_tensors_mut(),
        }
    }

    pub fn tensor_lens(&self) -> Vec<usize> {
        self.named_tensors().iter().map(|(_, t)| t.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Vae(m) => m.param_count(),
            Model::Ae(m) => m.param_count(),
        }
    }
}

// ---------------------------------------------------------------------------
// Shared naming/ordering helpers. named_* and ordered_* must stay aligned.
// ---------------------------------------------------------------------------

fn named_encoder<E: Real>(enc: &EncoderCore<E>) -> Vec<(String, &TensorBuffer<E>)> {
    let mut out = Vec::new();
    for (bi, convs) in enc.branches.iter().enumerate() {
        for (j, conv) in convs.iter().enumerate() {
            out.push((format!("enc.b{bi}.conv{j}.weight"), &conv.weight));
            out.push((format!("enc.b{bi}.conv{j}.bias"), &conv.bias));
        }
    }
    out.push(("enc.trunk_conv.weight".into(), &enc.trunk_conv.weight));
    out.push(("enc.trunk_conv.bias".into(), &enc.trunk_conv.bias));
    out.push(("enc.trunk_dense.weight".into(), &enc.trunk_dense.weight));
    out.push(("enc.trunk_dense.bias".into(), &enc.trunk_dense.bias));
    out
}

fn named_encoder_mut<E: Real>(enc: &mut EncoderCore<E>) -> Vec<(String, &mut TensorBuffer<E>)> {
    let mut out = Vec::new();
    for (bi, convs) in enc.branches.iter_mut().enumerate() {
        for (j, conv) in convs.iter_mut().enumerate() {
            out.push((format!("enc.b{bi}.conv{j}.weight"), &mut conv.weight));
            out.push((format!("enc.b{bi}.conv{j}.bias"), &mut conv.bias));
        }
    }
    out.push(("enc.trunk_conv.weight".into(), &mut enc.trunk_conv.weight));
    out.push(("enc.trunk_conv.bias".into(), &mut enc.trunk_conv.bias));
    out.push(("enc.trunk_dense.weight".into(), &mut enc.trunk_dense.weight));
    out.push(("enc.trunk_dense.bias".into(), &mut enc.trunk_dense.bias));
    out
}

fn ordered_encoder<E: Real>(g: EncGrads<E>) -> Vec<TensorBuffer<E>> {
    let mut out = Vec::new();
    for branch in g.branches {
        for conv in branch {
            out.push(conv.weight);
            out.push(conv.bias);
        }
    }
    out.push(g.trunk_conv.weight);
    out.push(g.trunk_conv.bias);
    out.push(g.trunk_dense.weight);
    out.push(g.trunk_dense.bias);
    out
}

fn named_decoder<E: Real>(dec: &DecoderCore<E>) -> Vec<(String, &TensorBuffer<E>)> {
    let mut out = vec![
        ("dec.fc_latent.weight".to_string(), &dec.fc_latent.weight),
        ("dec.fc_latent.bias".to_string(), &dec.fc_latent.bias),
        ("dec.fc_expand.weight".to_string(), &dec.fc_expand.weight),
        ("dec.fc_expand.bias".to_string(), &dec.fc_expand.bias),
    ];
    for (j, d) in dec.deconvs.iter().enumerate() {
        out.push((format!("dec.deconv{j}.weight"), &d.weight));
        out.push((format!("dec.deconv{j}.bias"), &d.bias));
    }
    out
}

fn named_decoder_mut<E: Real>(dec: &mut DecoderCore<E>) -> Vec<(String, &mut TensorBuffer<E>)> {
    let mut out = vec![
        ("dec.fc_latent.weight".to_string(), &mut dec.fc_latent.weight),
        ("dec.fc_latent.bias".to_string(), &mut dec.fc_latent.bias),
        ("dec.fc_expand.weight".to_string(), &mut dec.fc_expand.weight),
        ("dec.fc_expand.bias".to_string(), &mut dec.fc_expand.bias),
    ];
    for (j, d) in dec.deconvs.iter_mut().enumerate() {
        out.push((format!("dec.deconv{j}.weight"), &mut d.weight));
        out.push((format!("dec.deconv{j}.bias"), &mut d.bias));
    }
    out
}

fn ordered_decoder<E: Real>(g: DecGrads<E>) -> Vec<TensorBuffer<E>> {
    let mut out = vec![g.fc_latent.weight, g.fc_latent.bias, g.fc_expand.weight, g.fc_expand.bias];
    for d in g.deconvs {
        out.push(d.weight);
        out.push(d.bias);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::PropagationParams;
    use crate::scene::{generate_layout, LayoutSpec};
    use crate::tensors::{build_dataset, DatasetConfig};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { input_res: 16, latent_dim: 8, ..ModelConfig::default() }
    }

    fn tiny_dataset() -> crate::tensors::Dataset {
        let scene = generate_layout(
            3,
            &LayoutSpec {
                width_m: 20.0,
                depth_m: 20.0,
                min_shelves: 4,
                shelf_size_range: crate::scene::ShelfSizeRange {
                    width_m: (2.0, 5.0),
                    depth_m: (1.0, 2.0),
                },
                ..LayoutSpec::default()
            },
        )
        .unwrap();
        build_dataset(
            &[scene],
            &DatasetConfig { out_res: 16, ..DatasetConfig::default() },
            &PropagationParams::default(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn encode_emits_latent_shapes() {
        let ds = tiny_dataset();
        let vae = VaeParams::<f32>::init(tiny_cfg(), 11).unwrap();
        let refs: Vec<&SampleTensors> = ds.samples.iter().take(3).collect();
        let x = BranchInputs::from_samples(&vae.cfg, &refs).unwrap();
        let (mu, logvar) = vae.encode(&x).unwrap();
        assert_eq!(mu.dims(), &[3, 8]);
        assert_eq!(logvar.dims(), &[3, 8]);
        assert!(logvar.data().iter().all(|v| v.abs() <= LOGVAR_CLAMP as f32));
    }

    #[test]
    fn batch_order_permutes_outputs() {
        let ds = tiny_dataset();
        let vae = VaeParams::<f32>::init(tiny_cfg(), 5).unwrap();
        let a = ds.samples[0].clone();
        let b = ds.samples[1].clone();
        let x_ab = BranchInputs::from_samples(&vae.cfg, &[&a, &b]).unwrap();
        let x_ba = BranchInputs::from_samples(&vae.cfg, &[&b, &a]).unwrap();
        let (mu_ab, _) = vae.encode(&x_ab).unwrap();
        let (mu_ba, _) = vae.encode(&x_ba).unwrap();
        let d = vae.cfg.latent_dim;
        assert_eq!(&mu_ab.data()[..d], &mu_ba.data()[d..]);
        assert_eq!(&mu_ab.data()[d..], &mu_ba.data()[..d]);
    }

    #[test]
    fn ap_branch_feeds_the_latent() {
        // Two samples of the same scene differing only in AP placement must
        // produce different mu across several random initializations.
        let ds = tiny_dataset();
        let a = &ds.samples[0];
        let b = ds
            .samples
            .iter()
            .find(|s| s.meta.ap_idx != a.meta.ap_idx)
            .expect("dataset has several APs");
        for seed in 0..5 {
            let vae = VaeParams::<f32>::init(tiny_cfg(), seed).unwrap();
            let mut b_mixed = a.clone();
            b_mixed.ap_map = b.ap_map.clone();
            let x = BranchInputs::from_samples(&vae.cfg, &[a, &b_mixed]).unwrap();
            let (mu, _) = vae.encode(&x).unwrap();
            let d = vae.cfg.latent_dim;
            assert_ne!(&mu.data()[..d], &mu.data()[d..], "seed {seed}: AP branch is dead");
        }
    }

    #[test]
    fn reparameterize_zero_noise_and_unit_sigma() {
        let mu = TensorBuffer::from_vec(vec![1, 3], vec![0.5f64, -1.0, 2.0]);
        let logvar = TensorBuffer::zeros(vec![1, 3]);
        let zero = TensorBuffer::zeros(vec![1, 3]);
        assert_eq!(reparameterize(&mu, &logvar, &zero).data(), mu.data());
        let noise = TensorBuffer::from_vec(vec![1, 3], vec![1.0f64, -2.0, 0.25]);
        let z = reparameterize(&mu, &logvar, &noise);
        assert_eq!(z.data(), &[1.5, -3.0, 2.25]);
    }

    #[test]
    fn reparameterize_monte_carlo_mean() {
        use rand::Rng;
        use rand::SeedableRng;
        let mu = TensorBuffer::from_vec(vec![1, 2], vec![0.7f64, -0.3]);
        let logvar = TensorBuffer::from_vec(vec![1, 2], vec![0.5f64, -1.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000usize;
        let mut sum = [0.0f64; 2];
        for _ in 0..draws {
            let noise = TensorBuffer::from_vec(
                vec![1, 2],
                (0..2).map(|_| rng.sample(rand_distr::StandardNormal)).collect(),
            );
            let z = reparameterize(&mu, &logvar, &noise);
            sum[0] += z.data()[0];
            sum[1] += z.data()[1];
        }
        for k in 0..2 {
            let mean = sum[k] / draws as f64;
            let sigma = (logvar.data()[k] / 2.0_f64).exp();
            let tol = 3.0 * sigma / (draws as f64).sqrt();
            assert!((mean - mu.data()[k]).abs() < tol, "dim {k}: {mean} vs {}", mu.data()[k]);
        }
    }

    #[test]
    fn decode_bounds_and_shape() {
        let vae = VaeParams::<f32>::init(tiny_cfg(), 3).unwrap();
        let z = TensorBuffer::from_vec(vec![2, 8], (0..16).map(|v| (v as f32 - 8.0) / 3.0).collect());
        let out = vae.decode(&z).unwrap();
        assert_eq!(out.dims(), &[2, 1, 16, 16]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ae_is_deterministic_and_bounded() {
        let ds = tiny_dataset();
        let ae = AeParams::<f32>::init(tiny_cfg(), 4).unwrap();
        let refs: Vec<&SampleTensors> = ds.samples.iter().take(2).collect();
        let x = BranchInputs::from_samples(&ae.cfg, &refs).unwrap();
        let a = ae.forward(&x).unwrap();
        let b = ae.forward(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn vae_with_mu_bottleneck_reduces_to_ae() {
        let ds = tiny_dataset();
        let vae = VaeParams::<f32>::init(tiny_cfg(), 9).unwrap();
        let ae = AeParams {
            cfg: vae.cfg,
            encoder: vae.encoder.clone(),
            bottleneck: vae.mu_head.clone(),
            decoder: vae.decoder.clone(),
        };
        let refs: Vec<&SampleTensors> = ds.samples.iter().take(2).collect();
        let x = BranchInputs::from_samples(&vae.cfg, &refs).unwrap();
        let (mu, _) = vae.encode(&x).unwrap();
        let zero_noise = TensorBuffer::zeros(mu.dims().to_vec());
        let z = reparameterize(&mu, &vae.encode(&x).unwrap().1.map(|_| 0.0), &zero_noise);
        let vae_out = vae.decode(&z).unwrap();
        let ae_out = ae.forward(&x).unwrap();
        assert_eq!(vae_out, ae_out);
    }

    #[test]
    fn param_counts_differ_only_by_one_head() {
        let cfg = ModelConfig::default();
        let vae = VaeParams::<f32>::init(cfg, 1).unwrap();
        let ae = AeParams::<f32>::init(cfg, 1).unwrap();
        let head = TRUNK_FEATURES * cfg.latent_dim + cfg.latent_dim;
        assert_eq!(vae.param_count(), ae.param_count() + head);
        let rel = head as f64 / ae.param_count() as f64;
        assert!(rel < 0.05, "head overhead {rel}");
    }

    #[test]
    fn grads_order_matches_named_tensors() {
        let ds = tiny_dataset();
        let vae = VaeParams::<f32>::init(tiny_cfg(), 13).unwrap();
        let refs: Vec<&SampleTensors> = ds.samples.iter().take(2).collect();
        let x = BranchInputs::from_samples(&vae.cfg, &refs).unwrap();
        let cache = vae.encode_cached(&x).unwrap();
        let noise = TensorBuffer::zeros(cache.mu.dims().to_vec());
        let z = reparameterize(&cache.mu, &cache.logvar, &noise);
        let dec = vae.decode_cached(&z).unwrap();
        let g_recon = TensorBuffer::from_vec(
            dec.output.dims().to_vec(),
            vec![1.0; dec.output.len()],
        );
        let g_zero = TensorBuffer::zeros(cache.mu.dims().to_vec());
        let grads = vae
            .backward(&cache, &dec, &g_recon, &g_zero, &g_zero, &noise)
            .unwrap()
            .into_ordered();
        let named = vae.named_tensors();
        assert_eq!(grads.len(), named.len());
        for (g, (name, t)) in grads.iter().zip(&named) {
            assert_eq!(g.dims(), t.dims(), "grad/param dims diverge at {name}");
        }
    }
}
