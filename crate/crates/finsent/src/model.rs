//! The sentiment regression network: base Transformer encoder → fusion with
//! per-token lexicon features → stack of encoder layers at width d+4 →
//! feed-forward head over the two [CLS] representations → tanh score.
//!
//! Encoder layers are pre-norm; the original post-norm arrangement needs
//! warmup to train stably at this scale.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{SentimentFeatures, FEATURE_WIDTH};
use crate::tensor::Tensor;
use crate::tokenizer::TokenSeq;

const INIT_STD: f64 = 0.02;
const BN_MOMENTUM: f64 = 0.9;
const MASK_BIAS: f64 = -1e9;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_stack_layers: usize,
    pub n_base_layers: usize,
    pub n_heads_base: usize,
    pub n_heads_stack: usize,
    pub ffn_multiplier: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub head_hidden: usize,
    /// Baseline mode: the head reads the base [CLS] only; lexicons and the
    /// sentiment stack are bypassed.
    pub baseline: bool,
}

impl ModelConfig {
    /// Desk-scale defaults: d_model 32, two base layers, two stack layers.
    pub fn desk(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 32,
            n_stack_layers: 2,
            n_base_layers: 2,
            n_heads_base: 4,
            n_heads_stack: 4,
            ffn_multiplier: 4,
            max_len: 64,
            dropout: 0.1,
            vocab_size,
            head_hidden: 64,
            baseline: false,
        }
    }

    pub fn fused_width(&self) -> usize {
        self.d_model + FEATURE_WIDTH
    }

    pub fn head_input_width(&self) -> usize {
        if self.baseline {
            self.d_model
        } else {
            self.d_model + self.fused_width()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return Err(Error::Config(format!(
                "d_model must be positive and even, got {}",
                self.d_model
            )));
        }
        if !(1..=6).contains(&self.n_stack_layers) {
            return Err(Error::Config(format!(
                "n_stack_layers must be in [1,6], got {}",
                self.n_stack_layers
            )));
        }
        if self.n_base_layers == 0 {
            return Err(Error::Config("n_base_layers must be positive".into()));
        }
        if self.n_heads_base == 0 || self.d_model % self.n_heads_base != 0 {
            return Err(Error::Config(format!(
                "n_heads_base {} must divide d_model {}",
                self.n_heads_base, self.d_model
            )));
        }
        if self.n_heads_stack == 0 || self.fused_width() % self.n_heads_stack != 0 {
            return Err(Error::Config(format!(
                "n_heads_stack {} must divide d_model+4 = {}",
                self.n_heads_stack,
                self.fused_width()
            )));
        }
        if self.ffn_multiplier == 0 {
            return Err(Error::Config("ffn_multiplier must be positive".into()));
        }
        if self.max_len < 3 {
            return Err(Error::Config("max_len must be at least 3".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        if self.vocab_size == 0 || self.head_hidden == 0 {
            return Err(Error::Config("vocab_size and head_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of one pre-norm Transformer encoder layer.
pub struct EncoderLayerParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub w_ff1: Tensor,
    pub b_ff1: Tensor,
    pub w_ff2: Tensor,
    pub b_ff2: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

impl EncoderLayerParams {
    fn init(width: usize, ffn_multiplier: usize, rng: &mut ChaCha8Rng) -> EncoderLayerParams {
        let ffn = width * ffn_multiplier;
        let proj = |rng: &mut ChaCha8Rng| Tensor::randn(&[width, width], INIT_STD, rng).with_grad();
        EncoderLayerParams {
            wq: proj(rng),
            bq: Tensor::zeros(&[width]).with_grad(),
            wk: proj(rng),
            bk: Tensor::zeros(&[width]).with_grad(),
            wv: proj(rng),
            bv: Tensor::zeros(&[width]).with_grad(),
            wo: proj(rng),
            bo: Tensor::zeros(&[width]).with_grad(),
            ln1_gain: Tensor::ones(&[width]).with_grad(),
            ln1_bias: Tensor::zeros(&[width]).with_grad(),
            w_ff1: Tensor::randn(&[width, ffn], INIT_STD, rng).with_grad(),
            b_ff1: Tensor::zeros(&[ffn]).with_grad(),
            w_ff2: Tensor::randn(&[ffn, width], INIT_STD, rng).with_grad(),
            b_ff2: Tensor::zeros(&[width]).with_grad(),
            ln2_gain: Tensor::ones(&[width]).with_grad(),
            ln2_bias: Tensor::zeros(&[width]).with_grad(),
        }
    }

    fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        let pairs: [(&str, &Tensor); 16] = [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("w_ff1", &self.w_ff1),
            ("b_ff1", &self.b_ff1),
            ("w_ff2", &self.w_ff2),
            ("b_ff2", &self.b_ff2),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
        ];
        for (name, t) in pairs {
            out.push((format!("{}.{}", prefix, name), t.clone()));
        }
    }
}

/// All learnable weights plus the head's batch-norm running statistics.
pub struct ModelParams {
    pub token_embeddings: Tensor,
    pub base_layers: Vec<EncoderLayerParams>,
    pub stack_layers: Vec<EncoderLayerParams>,
    pub bn_gamma: Tensor,
    pub bn_beta: Tensor,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    pub w_h1: Tensor,
    pub b_h1: Tensor,
    pub w_h2: Tensor,
    pub b_h2: Tensor,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelParams {
        let d = config.d_model;
        let head_w = config.head_input_width();
        let h = config.head_hidden;
        let stack_layers = if config.baseline {
            Vec::new()
        } else {
            (0..config.n_stack_layers)
                .map(|_| EncoderLayerParams::init(config.fused_width(), config.ffn_multiplier, rng))
                .collect()
        };
        ModelParams {
            token_embeddings: Tensor::randn(&[config.vocab_size, d], INIT_STD, rng).with_grad(),
            base_layers: (0..config.n_base_layers)
                .map(|_| EncoderLayerParams::init(d, config.ffn_multiplier, rng))
                .collect(),
            stack_layers,
            bn_gamma: Tensor::ones(&[head_w]).with_grad(),
            bn_beta: Tensor::zeros(&[head_w]).with_grad(),
            bn_running_mean: vec![0.0; head_w],
            bn_running_var: vec![1.0; head_w],
            w_h1: Tensor::randn(&[head_w, h], INIT_STD, rng).with_grad(),
            b_h1: Tensor::zeros(&[h]).with_grad(),
            w_h2: Tensor::randn(&[h, 1], INIT_STD, rng).with_grad(),
            b_h2: Tensor::zeros(&[1]).with_grad(),
        }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("token_embeddings".to_string(), self.token_embeddings.clone())];
        for (i, layer) in self.base_layers.iter().enumerate() {
            layer.named(&format!("base.{}", i), &mut out);
        }
        for (i, layer) in self.stack_layers.iter().enumerate() {
            layer.named(&format!("stack.{}", i), &mut out);
        }
        out.push(("bn_gamma".into(), self.bn_gamma.clone()));
        out.push(("bn_beta".into(), self.bn_beta.clone()));
        out.push(("w_h1".into(), self.w_h1.clone()));
        out.push(("b_h1".into(), self.b_h1.clone()));
        out.push(("w_h2".into(), self.w_h2.clone()));
        out.push(("b_h2".into(), self.b_h2.clone()));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, t)| t.is_finite())
            && self.bn_running_mean.iter().all(|v| v.is_finite())
            && self.bn_running_var.iter().all(|v| v.is_finite())
    }
}

/// Sinusoidal position embeddings: (pos, 2i) → sin(pos/10000^(2i/width)),
/// (pos, 2i+1) → cos of the same argument.
pub fn sinusoidal_positions(length: usize, width: usize) -> Result<Tensor> {
    if width % 2 != 0 {
        return Err(Error::InvalidShape {
            op: "sinusoidal_positions",
            shape: vec![length, width],
            reason: "width must be even".into(),
        });
    }
    let mut data = vec![0.0; length * width];
    for pos in 0..length {
        for i in 0..width / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / width as f64);
            data[pos * width + 2 * i] = angle.sin();
            data[pos * width + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::from_vec(data, &[length, width])
}

/// One prepared network input: token ids padded to some length, the matching
/// feature rows, and the unpadded length for attention masking.
#[derive(Debug, Clone)]
pub struct ExampleInput {
    pub ids: Vec<usize>,
    pub feats: SentimentFeatures,
    pub real_len: usize,
}

impl ExampleInput {
    pub fn new(seq: &TokenSeq, feats: SentimentFeatures) -> ExampleInput {
        assert_eq!(seq.len(), feats.len(), "feature rows must match pieces");
        ExampleInput { real_len: seq.len(), ids: seq.ids.clone(), feats }
    }

    /// Extends ids with the pad id and features with zero rows.
    pub fn pad_to(&mut self, len: usize, pad_id: usize) {
        while self.ids.len() < len {
            self.ids.push(pad_id);
            self.feats.rows.push([0.0; FEATURE_WIDTH]);
        }
    }
}

/// Attention weights recorded during a forward pass, one [L×L] tensor per
/// layer per head.
pub type AttentionTrace = Vec<Tensor>;

pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let params = ModelParams::init(&config, &mut rng);
        Ok(Model { config, params })
    }

    fn attention(
        &self,
        x: &Tensor,
        layer: &EncoderLayerParams,
        n_heads: usize,
        mask: Option<&Tensor>,
        trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        let width = x.shape()[1];
        let dh = width / n_heads;
        let q = x.matmul(&layer.wq)?.add_row(&layer.bq)?;
        let k = x.matmul(&layer.wk)?.add_row(&layer.bk)?;
        let v = x.matmul(&layer.wv)?.add_row(&layer.bv)?;
        let mut heads = Vec::with_capacity(n_heads);
        let mut weights_out = Vec::new();
        for h in 0..n_heads {
            let qh = q.slice_cols(h * dh, (h + 1) * dh)?;
            let kh = k.slice_cols(h * dh, (h + 1) * dh)?;
            let vh = v.slice_cols(h * dh, (h + 1) * dh)?;
            let mut scores = qh.matmul(&kh.transpose()?)?.scale(1.0 / (dh as f64).sqrt());
            if let Some(mask) = mask {
                scores = scores.add(mask)?;
            }
            let weights = scores.softmax_rows();
            weights_out.push(weights.clone());
            heads.push(weights.matmul(&vh)?);
        }
        if let Some(trace) = trace {
            trace.extend(weights_out);
        }
        Tensor::concat_cols(&heads)?.matmul(&layer.wo)?.add_row(&layer.bo)
    }

    fn encoder_layer(
        &self,
        x: &Tensor,
        layer: &EncoderLayerParams,
        n_heads: usize,
        mask: Option<&Tensor>,
        rng: Option<&mut ChaCha8Rng>,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        let mut rng = rng;
        let normed = x.layer_norm(&layer.ln1_gain, &layer.ln1_bias)?;
        let mut attn = self.attention(&normed, layer, n_heads, mask, trace.as_deref_mut())?;
        if let Some(r) = rng.as_deref_mut() {
            attn = attn.dropout(self.config.dropout, r);
        }
        let h = x.add(&attn)?;
        let normed = h.layer_norm(&layer.ln2_gain, &layer.ln2_bias)?;
        let mut ffn = normed
            .matmul(&layer.w_ff1)?
            .add_row(&layer.b_ff1)?
            .gelu()
            .matmul(&layer.w_ff2)?
            .add_row(&layer.b_ff2)?;
        if let Some(r) = rng.as_deref_mut() {
            ffn = ffn.dropout(self.config.dropout, r);
        }
        h.add(&ffn)
    }

    /// Attention mask biasing padded key positions to −1e9; `None` when the
    /// sequence has no padding.
    fn padding_mask(&self, padded_len: usize, real_len: usize) -> Option<Tensor> {
        if real_len >= padded_len {
            return None;
        }
        let mut data = vec![0.0; padded_len * padded_len];
        for i in 0..padded_len {
            for j in real_len..padded_len {
                data[i * padded_len + j] = MASK_BIAS;
            }
        }
        Some(Tensor::from_vec(data, &[padded_len, padded_len]).expect("shape is consistent"))
    }

    /// Base encoder: token embeddings + sinusoidal positions through the base
    /// layers. Row 0 is the base [CLS] representation.
    pub fn encode_base(
        &self,
        ids: &[usize],
        mask: Option<&Tensor>,
        mut rng: Option<&mut ChaCha8Rng>,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        let emb = self.params.token_embeddings.gather_rows(ids)?;
        let pos = sinusoidal_positions(ids.len(), self.config.d_model)?;
        let mut x = emb.add(&pos)?;
        for layer in &self.params.base_layers {
            x = self.encoder_layer(
                &x,
                layer,
                self.config.n_heads_base,
                mask,
                rng.as_deref_mut(),
                trace.as_deref_mut(),
            )?;
        }
        Ok(x)
    }

    /// Row-wise concatenation of base representations with the 4 sentiment
    /// feature slots: [L×d] → [L×(d+4)].
    pub fn fuse(base: &Tensor, feats: &SentimentFeatures) -> Result<Tensor> {
        let shape = base.shape();
        if shape.len() != 2 || shape[0] != feats.len() {
            return Err(Error::ShapeMismatch {
                op: "fuse",
                lhs: shape,
                rhs: vec![feats.len(), FEATURE_WIDTH],
            });
        }
        let f = Tensor::from_vec(feats.flat(), &[feats.len(), FEATURE_WIDTH])?;
        Tensor::concat_cols(&[base.clone(), f])
    }

    /// Sentiment stack: re-injects sinusoidal positions at width d+4, then
    /// applies the stack encoder layers. Row 0 is the stack [CLS]
    /// representation.
    pub fn sentiment_stack(
        &self,
        fused: &Tensor,
        mask: Option<&Tensor>,
        mut rng: Option<&mut ChaCha8Rng>,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        let shape = fused.shape();
        if shape.len() != 2 || shape[1] != self.config.fused_width() {
            return Err(Error::ShapeMismatch {
                op: "sentiment_stack",
                lhs: shape,
                rhs: vec![0, self.config.fused_width()],
            });
        }
        let pos = sinusoidal_positions(shape[0], self.config.fused_width())?;
        let mut x = fused.add(&pos)?;
        for layer in &self.params.stack_layers {
            x = self.encoder_layer(
                &x,
                layer,
                self.config.n_heads_stack,
                mask,
                rng.as_deref_mut(),
                trace.as_deref_mut(),
            )?;
        }
        Ok(x)
    }

    /// The concatenated head input for one example: base [CLS] ‖ stack [CLS]
    /// (base [CLS] only in baseline mode). Shape [1×head_input_width].
    pub fn head_input(
        &self,
        input: &ExampleInput,
        mut rng: Option<&mut ChaCha8Rng>,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        let mask = self.padding_mask(input.ids.len(), input.real_len);
        let base = self.encode_base(
            &input.ids,
            mask.as_ref(),
            rng.as_deref_mut(),
            trace.as_deref_mut(),
        )?;
        let base_cls = base.slice_rows(0, 1)?;
        if self.config.baseline {
            return Ok(base_cls);
        }
        let fused = Self::fuse(&base, &input.feats)?;
        let stack = self.sentiment_stack(&fused, mask.as_ref(), rng, trace)?;
        let stack_cls = stack.slice_rows(0, 1)?;
        Tensor::concat_cols(&[base_cls, stack_cls])
    }

    /// Training-mode batch forward: batch-norm uses batch statistics and the
    /// running statistics are updated with momentum 0.9. Returns [B×1]
    /// scores in (−1, 1).
    pub fn forward_train(
        &mut self,
        inputs: &[ExampleInput],
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        assert!(!inputs.is_empty());
        let mut rows = Vec::with_capacity(inputs.len());
        for input in inputs {
            rows.push(self.head_input(input, Some(rng), None)?);
        }
        let stacked = Tensor::concat_rows(&rows)?;
        let (normed, mean, var) =
            stacked.batch_norm_train(&self.params.bn_gamma, &self.params.bn_beta)?;
        for j in 0..mean.len() {
            self.params.bn_running_mean[j] =
                BN_MOMENTUM * self.params.bn_running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
            self.params.bn_running_var[j] =
                BN_MOMENTUM * self.params.bn_running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
        }
        self.head(&normed)
    }

    /// Inference-mode batch forward: no dropout, batch-norm uses the running
    /// statistics. Deterministic.
    pub fn forward_eval(&self, inputs: &[ExampleInput]) -> Result<Tensor> {
        assert!(!inputs.is_empty());
        let mut rows = Vec::with_capacity(inputs.len());
        for input in inputs {
            rows.push(self.head_input(input, None, None)?);
        }
        let stacked = Tensor::concat_rows(&rows)?;
        let normed = stacked.batch_norm_eval(
            &self.params.bn_gamma,
            &self.params.bn_beta,
            &self.params.bn_running_mean,
            &self.params.bn_running_var,
        )?;
        self.head(&normed)
    }

    fn head(&self, normed: &Tensor) -> Result<Tensor> {
        let hidden = normed.matmul(&self.params.w_h1)?.add_row(&self.params.b_h1)?.gelu();
        Ok(hidden.matmul(&self.params.w_h2)?.add_row(&self.params.b_h2)?.tanh())
    }

    /// Scores one example in inference mode.
    pub fn predict_score(&self, seq: &TokenSeq, feats: &SentimentFeatures) -> Result<f64> {
        let input = ExampleInput::new(seq, feats.clone());
        Ok(self.forward_eval(&[input])?.item())
    }
}
