//! Transformer encoder with a single linear head on the `[CLS]` state.
//!
//! Parameters and gradients share one type, [`ModelParams`], generic over the
//! element type. Training and gradient checks run in `f64`; checkpoints
//! store `f32`.

mod checkpoint;
mod forward;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder_input::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::label::NUM_CLASSES;
use crate::scalar::Scalar;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use forward::{argmax, forward, grad, loss_and_grad, nll_loss, predict, softmax_rows, Gradient};

pub const NUM_SEGMENTS: usize = 2;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub num_classes: usize,
    /// Dropout probability applied in training mode only.
    pub dropout: f64,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    /// A desk-scale shape; the reference model is 12 layers × 12 heads × 768.
    fn default() -> Self {
        ModelConfig {
            num_layers: 2,
            num_heads: 4,
            hidden_dim: 64,
            ffn_dim: 256,
            vocab_size: 30_000,
            max_positions: DEFAULT_MAX_LEN,
            num_classes: NUM_CLASSES,
            dropout: 0.0,
            layer_norm_eps: 1e-12,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("hidden_dim", self.hidden_dim),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::ModelConfig(format!("{name} must be at least 1")));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::ModelConfig(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.max_positions < DEFAULT_MAX_LEN {
            return Err(Error::ModelConfig(format!(
                "max_positions {} is below {DEFAULT_MAX_LEN}",
                self.max_positions
            )));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(Error::ModelConfig(format!("num_classes must be {NUM_CLASSES}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ModelConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::ModelConfig("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln1_gamma: Array1<T>,
    pub ln1_beta: Array1<T>,
    pub w_in: Array2<T>,
    pub b_in: Array1<T>,
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
    pub ln2_gamma: Array1<T>,
    pub ln2_beta: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub token_emb: Array2<T>,
    pub pos_emb: Array2<T>,
    pub seg_emb: Array2<T>,
    pub emb_ln_gamma: Array1<T>,
    pub emb_ln_beta: Array1<T>,
    pub layers: Vec<LayerParams<T>>,
    /// `hidden_dim × num_classes`.
    pub cls_weight: Array2<T>,
    pub cls_bias: Array1<T>,
}

/// Borrowed view of one named parameter tensor.
pub struct TensorRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

fn shape_of1<T>(a: &Array1<T>) -> Vec<usize> {
    vec![a.len()]
}

fn shape_of2<T>(a: &Array2<T>) -> Vec<usize> {
    a.shape().to_vec()
}

macro_rules! collect_tensors {
    ($self:ident, $iter:ident, $as_slice:ident, $wrap:ident) => {{
        let mut out = Vec::new();
        out.push($wrap("embeddings.token".into(), shape_of2(&$self.token_emb), $self.token_emb.$as_slice().unwrap()));
        out.push($wrap("embeddings.position".into(), shape_of2(&$self.pos_emb), $self.pos_emb.$as_slice().unwrap()));
        out.push($wrap("embeddings.segment".into(), shape_of2(&$self.seg_emb), $self.seg_emb.$as_slice().unwrap()));
        out.push($wrap("embeddings.ln.gamma".into(), shape_of1(&$self.emb_ln_gamma), $self.emb_ln_gamma.$as_slice().unwrap()));
        out.push($wrap("embeddings.ln.beta".into(), shape_of1(&$self.emb_ln_beta), $self.emb_ln_beta.$as_slice().unwrap()));
        for (i, l) in $self.layers.$iter().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.push($wrap(p("attn.wq"), shape_of2(&l.wq), l.wq.$as_slice().unwrap()));
            out.push($wrap(p("attn.bq"), shape_of1(&l.bq), l.bq.$as_slice().unwrap()));
            out.push($wrap(p("attn.wk"), shape_of2(&l.wk), l.wk.$as_slice().unwrap()));
            out.push($wrap(p("attn.bk"), shape_of1(&l.bk), l.bk.$as_slice().unwrap()));
            out.push($wrap(p("attn.wv"), shape_of2(&l.wv), l.wv.$as_slice().unwrap()));
            out.push($wrap(p("attn.bv"), shape_of1(&l.bv), l.bv.$as_slice().unwrap()));
            out.push($wrap(p("attn.wo"), shape_of2(&l.wo), l.wo.$as_slice().unwrap()));
            out.push($wrap(p("attn.bo"), shape_of1(&l.bo), l.bo.$as_slice().unwrap()));
            out.push($wrap(p("ln1.gamma"), shape_of1(&l.ln1_gamma), l.ln1_gamma.$as_slice().unwrap()));
            out.push($wrap(p("ln1.beta"), shape_of1(&l.ln1_beta), l.ln1_beta.$as_slice().unwrap()));
            out.push($wrap(p("ffn.w_in"), shape_of2(&l.w_in), l.w_in.$as_slice().unwrap()));
            out.push($wrap(p("ffn.b_in"), shape_of1(&l.b_in), l.b_in.$as_slice().unwrap()));
            out.push($wrap(p("ffn.w_out"), shape_of2(&l.w_out), l.w_out.$as_slice().unwrap()));
            out.push($wrap(p("ffn.b_out"), shape_of1(&l.b_out), l.b_out.$as_slice().unwrap()));
            out.push($wrap(p("ln2.gamma"), shape_of1(&l.ln2_gamma), l.ln2_gamma.$as_slice().unwrap()));
            out.push($wrap(p("ln2.beta"), shape_of1(&l.ln2_beta), l.ln2_beta.$as_slice().unwrap()));
        }
        out.push($wrap("classifier.weight".into(), shape_of2(&$self.cls_weight), $self.cls_weight.$as_slice().unwrap()));
        out.push($wrap("classifier.bias".into(), shape_of1(&$self.cls_bias), $self.cls_bias.$as_slice().unwrap()));
        out
    }};
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_dim;
        let f = cfg.ffn_dim;
        LayerParams {
            wq: Array2::zeros((h, h)),
            bq: Array1::zeros(h),
            wk: Array2::zeros((h, h)),
            bk: Array1::zeros(h),
            wv: Array2::zeros((h, h)),
            bv: Array1::zeros(h),
            wo: Array2::zeros((h, h)),
            bo: Array1::zeros(h),
            ln1_gamma: Array1::zeros(h),
            ln1_beta: Array1::zeros(h),
            w_in: Array2::zeros((h, f)),
            b_in: Array1::zeros(f),
            w_out: Array2::zeros((f, h)),
            b_out: Array1::zeros(h),
            ln2_gamma: Array1::zeros(h),
            ln2_beta: Array1::zeros(h),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero tensors shaped by `cfg` (gradient accumulators, loaders).
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_dim;
        ModelParams {
            config: *cfg,
            token_emb: Array2::zeros((cfg.vocab_size, h)),
            pos_emb: Array2::zeros((cfg.max_positions, h)),
            seg_emb: Array2::zeros((NUM_SEGMENTS, h)),
            emb_ln_gamma: Array1::zeros(h),
            emb_ln_beta: Array1::zeros(h),
            layers: (0..cfg.num_layers).map(|_| LayerParams::zeros(cfg)).collect(),
            cls_weight: Array2::zeros((h, cfg.num_classes)),
            cls_bias: Array1::zeros(cfg.num_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let wrap = |name, shape, data| TensorRef { name, shape, data };
        collect_tensors!(self, iter, as_slice, wrap)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let wrap = |name, shape, data| TensorMut { name, shape, data };
        collect_tensors!(self, iter_mut, as_slice_mut, wrap)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name)
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &ModelParams<T>, lr: T) {
        let grads = grad.tensors();
        for (p, g) in self.tensors_mut().into_iter().zip(grads) {
            debug_assert_eq!(p.shape, g.shape);
            for (x, dx) in p.data.iter_mut().zip(g.data) {
                *x -= lr * *dx;
            }
        }
    }

    /// Euclidean norm over every tensor.
    pub fn l2_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d = U::of(s.as_f64());
            }
        }
        out
    }
}

/// Seeded initialization. Embeddings and the classifier weight come from
/// N(0, 0.02²); encoder projection matrices from N(0, 1/fan_in); biases are
/// zero and layer-norm gains one.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(cfg);
    for t in params.tensors_mut() {
        if t.shape.len() == 2 {
            let std = if t.name.starts_with("layers.") {
                1.0 / (t.shape[0] as f64).sqrt()
            } else {
                INIT_STD
            };
            let normal = Normal::new(0.0, std).expect("valid std");
            for v in t.data.iter_mut() {
                *v = T::of(normal.sample(&mut rng));
            }
        } else if t.name.ends_with(".gamma") {
            t.data.fill(T::one());
        }
    }
    Ok(params)
}
