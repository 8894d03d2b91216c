//! Forward pass, loss and hand-written backpropagation.
//!
//! Each layer is a post-layer-norm block:
//!
//! ```text
//! h1 = LN(h  + Dropout(MultiHeadAttention(h)))
//! h2 = LN(h1 + Dropout(W_out gelu(W_in h1 + b_in) + b_out))
//! ```
//!
//! Padding positions are excluded as attention keys, so the `[CLS]` state
//! does not depend on how much padding a batch adds.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LayerParams, ModelParams, NUM_SEGMENTS};
use crate::encoder_input::Batch;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::scalar::Scalar;

struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

fn layer_norm<T: Scalar>(x: &Array2<T>, gamma: &Array1<T>, beta: &Array1<T>, eps: T) -> (Array2<T>, LnCache<T>) {
    let (n, h) = x.dim();
    let hf = T::of(h as f64);
    let mut xhat = Array2::zeros((n, h));
    let mut inv_std = Array1::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / hf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / hf;
        let is = T::one() / (var + eps).sqrt();
        inv_std[i] = is;
        for j in 0..h {
            xhat[[i, j]] = (row[j] - mean) * is;
        }
    }
    let y = &xhat * gamma + beta;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward<T: Scalar>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    gamma: &Array1<T>,
    dgamma: &mut Array1<T>,
    dbeta: &mut Array1<T>,
) -> Array2<T> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let dxhat = dy * gamma;
    let (n, h) = dy.dim();
    let hf = T::of(h as f64);
    let mut dx = Array2::zeros((n, h));
    for i in 0..n {
        let d = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let m1 = d.sum() / hf;
        let m2 = d.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / hf;
        for j in 0..h {
            dx[[i, j]] = cache.inv_std[i] * (d[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + T::of(GELU_A) * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let t = (c * (x + T::of(GELU_A) * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0 * GELU_A) * x * x)
}

/// Inverted-dropout scale mask, or `None` when dropout is off.
fn dropout_mask<T: Scalar>(shape: (usize, usize), p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Array2<T>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - p));
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    }))
}

fn apply_mask<T: Scalar>(x: Array2<T>, mask: &Option<Array2<T>>) -> Array2<T> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

struct LayerCache<T> {
    input: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Per head, `L × L`; zero in padded key columns.
    probs: Vec<Array2<T>>,
    ctx: Array2<T>,
    attn_mask: Option<Array2<T>>,
    ln1: LnCache<T>,
    h1: Array2<T>,
    ffn_pre: Array2<T>,
    ffn_act: Array2<T>,
    ffn_mask: Option<Array2<T>>,
    ln2: LnCache<T>,
}

struct ExampleCache<T> {
    emb_ln: LnCache<T>,
    emb_mask: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
    cls: Array1<T>,
}

fn layer_forward<T: Scalar>(
    lp: &LayerParams<T>,
    x: Array2<T>,
    valid: &[bool],
    num_heads: usize,
    eps: T,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<T>, LayerCache<T>) {
    let (n, h) = x.dim();
    let d = h / num_heads;
    let scale = T::one() / T::of(d as f64).sqrt();
    let q = x.dot(&lp.wq) + &lp.bq;
    let k = x.dot(&lp.wk) + &lp.bk;
    let v = x.dot(&lp.wv) + &lp.bv;
    let mut ctx = Array2::zeros((n, h));
    let mut probs = Vec::with_capacity(num_heads);
    for head in 0..num_heads {
        let cols = s![.., head * d..(head + 1) * d];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let scores = qh.dot(&kh.t()) * scale;
        let mut p = Array2::zeros((n, n));
        for i in 0..n {
            let row = scores.row(i);
            let max = row
                .iter()
                .zip(valid)
                .filter(|(_, &ok)| ok)
                .map(|(&s, _)| s)
                .fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for j in (0..n).filter(|&j| valid[j]) {
                let e = (row[j] - max).exp();
                p[[i, j]] = e;
                z += e;
            }
            p.row_mut(i).mapv_inplace(|e| e / z);
        }
        ctx.slice_mut(cols).assign(&p.dot(&vh));
        probs.push(p);
    }
    let attn_out = ctx.dot(&lp.wo) + &lp.bo;
    let attn_mask = dropout_mask((n, h), dropout, rng.as_deref_mut());
    let r1 = &x + &apply_mask(attn_out, &attn_mask);
    let (h1, ln1) = layer_norm(&r1, &lp.ln1_gamma, &lp.ln1_beta, eps);

    let ffn_pre = h1.dot(&lp.w_in) + &lp.b_in;
    let ffn_act = ffn_pre.mapv(gelu);
    let ffn_out = ffn_act.dot(&lp.w_out) + &lp.b_out;
    let ffn_mask = dropout_mask((n, h), dropout, rng.as_deref_mut());
    let r2 = &h1 + &apply_mask(ffn_out, &ffn_mask);
    let (h2, ln2) = layer_norm(&r2, &lp.ln2_gamma, &lp.ln2_beta, eps);
    (
        h2,
        LayerCache {
            input: x,
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            ln1,
            h1,
            ffn_pre,
            ffn_act,
            ffn_mask,
            ln2,
        },
    )
}

fn layer_backward<T: Scalar>(
    lp: &LayerParams<T>,
    g: &mut LayerParams<T>,
    c: &LayerCache<T>,
    dh2: &Array2<T>,
    num_heads: usize,
) -> Array2<T> {
    let (n, h) = dh2.dim();
    let d = h / num_heads;
    let scale = T::one() / T::of(d as f64).sqrt();

    let dr2 = layer_norm_backward(dh2, &c.ln2, &lp.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);
    let mut dh1 = dr2.clone();
    let dffn_out = apply_mask(dr2, &c.ffn_mask);
    g.w_out += &c.ffn_act.t().dot(&dffn_out);
    g.b_out += &dffn_out.sum_axis(Axis(0));
    let dact = dffn_out.dot(&lp.w_out.t());
    let dpre = dact * &c.ffn_pre.mapv(gelu_grad);
    g.w_in += &c.h1.t().dot(&dpre);
    g.b_in += &dpre.sum_axis(Axis(0));
    dh1 += &dpre.dot(&lp.w_in.t());

    let dr1 = layer_norm_backward(&dh1, &c.ln1, &lp.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta);
    let mut dx = dr1.clone();
    let dattn = apply_mask(dr1, &c.attn_mask);
    g.wo += &c.ctx.t().dot(&dattn);
    g.bo += &dattn.sum_axis(Axis(0));
    let dctx = dattn.dot(&lp.wo.t());

    let mut dq = Array2::zeros((n, h));
    let mut dk = Array2::zeros((n, h));
    let mut dv = Array2::zeros((n, h));
    for head in 0..num_heads {
        let cols = s![.., head * d..(head + 1) * d];
        let p = &c.probs[head];
        let dctx_h = dctx.slice(cols);
        let dp = dctx_h.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
        let mut ds = Array2::zeros((n, n));
        for i in 0..n {
            let dot: T = dp.row(i).iter().zip(p.row(i).iter()).map(|(&a, &b)| a * b).sum();
            for j in 0..n {
                ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot);
            }
        }
        dq.slice_mut(cols).assign(&(ds.dot(&c.k.slice(cols)) * scale));
        dk.slice_mut(cols).assign(&(ds.t().dot(&c.q.slice(cols)) * scale));
    }
    for (dproj, w, gw, gb) in [
        (&dq, &lp.wq, &mut g.wq, &mut g.bq),
        (&dk, &lp.wk, &mut g.wk, &mut g.bk),
        (&dv, &lp.wv, &mut g.wv, &mut g.bv),
    ] {
        *gw += &c.input.t().dot(dproj);
        *gb += &dproj.sum_axis(Axis(0));
        dx += &dproj.dot(&w.t());
    }
    dx
}

fn check_inputs<T: Scalar>(params: &ModelParams<T>, batch: &Batch) -> Result<()> {
    let cfg = &params.config;
    for (ids, segs) in batch.token_ids.iter().zip(&batch.segment_ids) {
        if ids.len() > cfg.max_positions {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max_positions: cfg.max_positions,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        if segs.len() != ids.len() || segs.iter().any(|&s| s as usize >= NUM_SEGMENTS) {
            return Err(Error::Validation("segment ids must be 0 or 1, one per token".into()));
        }
    }
    if batch.mask.len() != batch.len() || batch.labels.len() != batch.len() {
        return Err(Error::Validation("batch fields differ in length".into()));
    }
    Ok(())
}

fn example_forward<T: Scalar>(
    params: &ModelParams<T>,
    ids: &[u32],
    segs: &[u8],
    valid: &[bool],
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array1<T>, ExampleCache<T>) {
    let cfg = &params.config;
    let eps = T::of(cfg.layer_norm_eps);
    let n = ids.len();
    let mut emb = Array2::zeros((n, cfg.hidden_dim));
    for (i, (&id, &seg)) in ids.iter().zip(segs).enumerate() {
        let mut row = emb.row_mut(i);
        row += &params.token_emb.row(id as usize);
        row += &params.pos_emb.row(i);
        row += &params.seg_emb.row(seg as usize);
    }
    let (x, emb_ln) = layer_norm(&emb, &params.emb_ln_gamma, &params.emb_ln_beta, eps);
    let emb_mask = dropout_mask(x.dim(), cfg.dropout, rng.as_deref_mut());
    let mut x = apply_mask(x, &emb_mask);
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (y, cache) = layer_forward(lp, x, valid, cfg.num_heads, eps, cfg.dropout, rng.as_deref_mut());
        layers.push(cache);
        x = y;
    }
    let cls = x.row(0).to_owned();
    let logits = cls.dot(&params.cls_weight) + &params.cls_bias;
    (
        logits,
        ExampleCache {
            emb_ln,
            emb_mask,
            layers,
            cls,
        },
    )
}

fn example_backward<T: Scalar>(
    params: &ModelParams<T>,
    grads: &mut ModelParams<T>,
    cache: &ExampleCache<T>,
    ids: &[u32],
    segs: &[u8],
    dlogits: ArrayView1<T>,
) {
    let cfg = &params.config;
    let h = cfg.hidden_dim;
    let n = ids.len();
    for (i, &c) in cache.cls.iter().enumerate() {
        for (j, &dl) in dlogits.iter().enumerate() {
            grads.cls_weight[[i, j]] += c * dl;
        }
    }
    grads.cls_bias += &dlogits;
    let mut dx = Array2::zeros((n, h));
    dx.row_mut(0).assign(&params.cls_weight.dot(&dlogits));
    for (l, lc) in cache.layers.iter().enumerate().rev() {
        dx = layer_backward(&params.layers[l], &mut grads.layers[l], lc, &dx, cfg.num_heads);
    }
    let dx = apply_mask(dx, &cache.emb_mask);
    let demb = layer_norm_backward(
        &dx,
        &cache.emb_ln,
        &params.emb_ln_gamma,
        &mut grads.emb_ln_gamma,
        &mut grads.emb_ln_beta,
    );
    for (i, (&id, &seg)) in ids.iter().zip(segs).enumerate() {
        let d = demb.row(i);
        let mut r = grads.token_emb.row_mut(id as usize);
        r += &d;
        let mut r = grads.pos_emb.row_mut(i);
        r += &d;
        let mut r = grads.seg_emb.row_mut(seg as usize);
        r += &d;
    }
}

/// Logits, `batch × num_classes`, in inference mode.
pub fn forward<T: Scalar>(params: &ModelParams<T>, batch: &Batch) -> Result<Array2<T>> {
    check_inputs(params, batch)?;
    let mut logits = Array2::zeros((batch.len(), params.config.num_classes));
    for b in 0..batch.len() {
        let (l, _) = example_forward(params, &batch.token_ids[b], &batch.segment_ids[b], &batch.mask[b], None);
        logits.row_mut(b).assign(&l);
    }
    Ok(logits)
}

/// Row-wise softmax.
pub fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

fn log_softmax_at<T: Scalar>(row: ArrayView1<T>, idx: usize) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    row[idx] - lse
}

/// Mean negative log-likelihood of the gold labels, in nats.
pub fn nll_loss<T: Scalar>(logits: &Array2<T>, labels: &[Label]) -> T {
    let n = T::of(labels.len().max(1) as f64);
    labels
        .iter()
        .enumerate()
        .map(|(b, l)| -log_softmax_at(logits.row(b), l.index()))
        .sum::<T>()
        / n
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Scalar>(params: &ModelParams<T>, batch: &Batch) -> Result<Vec<Label>> {
    let logits = forward(params, batch)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|r| Label::ALL[argmax(r)])
        .collect())
}

#[derive(Debug, Clone)]
pub struct Gradient<T> {
    pub loss: T,
    pub logits: Array2<T>,
    pub grads: ModelParams<T>,
}

/// Exact gradient of [`nll_loss`] of the inference-mode forward pass.
pub fn grad<T: Scalar>(params: &ModelParams<T>, batch: &Batch) -> Result<Gradient<T>> {
    loss_and_grad(params, batch, None)
}

/// Loss and gradient; with `rng`, dropout masks are sampled from it.
pub fn loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Gradient<T>> {
    check_inputs(params, batch)?;
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let nb = batch.len();
    let mut grads = params.zeros_like();
    let mut logits = Array2::zeros((nb, params.config.num_classes));
    let inv_n = T::one() / T::of(nb as f64);
    for b in 0..nb {
        let ids = &batch.token_ids[b];
        let segs = &batch.segment_ids[b];
        let (l, cache) = example_forward(params, ids, segs, &batch.mask[b], rng.as_deref_mut());
        logits.row_mut(b).assign(&l);
        let mut dlogits = softmax_rows(&l.clone().insert_axis(Axis(0))).remove_axis(Axis(0));
        dlogits[batch.labels[b].index()] -= T::one();
        dlogits.mapv_inplace(|v| v * inv_n);
        example_backward(params, &mut grads, &cache, ids, segs, dlogits.view());
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    Ok(Gradient {
        loss: nll_loss(&logits, &batch.labels),
        logits,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder_input::{pad_batch, EncodedExample};
    use crate::net::{init_params, ModelConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            num_heads: 2,
            hidden_dim: 16,
            ffn_dim: 32,
            vocab_size: 50,
            ..Default::default()
        }
    }

    fn example(ids: Vec<u32>, label: Label) -> EncodedExample {
        let sep = ids.iter().position(|&t| t == 3).unwrap_or(0);
        let segment_ids = (0..ids.len()).map(|i| u8::from(i > sep)).collect();
        EncodedExample {
            token_ids: ids,
            segment_ids,
            label,
            doc_id: "d".into(),
            pair: ("g".into(), "d".into()),
        }
    }

    #[test]
    fn logits_shape_and_finite() {
        let p: ModelParams<f64> = init_params(&cfg(), 1).unwrap();
        let exs = [
            example(vec![2, 10, 11, 3, 20, 21, 22, 3], Label::Gof),
            example(vec![2, 12, 3, 30, 3], Label::NoRel),
        ];
        let batch = pad_batch(&exs, 0, None);
        let logits = forward(&p, &batch).unwrap();
        assert_eq!(logits.dim(), (2, 5));
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn padding_does_not_change_logits() {
        let p: ModelParams<f64> = init_params(&cfg(), 4).unwrap();
        let e = example(vec![2, 10, 11, 3, 20, 21, 3], Label::Lof);
        let a = forward(&p, &pad_batch([&e], 0, None)).unwrap();
        let b = forward(&p, &pad_batch([&e], 0, Some(12))).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn zero_head_gives_uniform() {
        let mut p: ModelParams<f64> = init_params(&cfg(), 2).unwrap();
        p.cls_weight.fill(0.0);
        p.cls_bias.fill(0.0);
        let batch = pad_batch([&example(vec![2, 5, 3, 6, 3], Label::Gof)], 0, None);
        let logits = forward(&p, &batch).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        let probs = softmax_rows(&logits);
        assert!(probs.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert_eq!(predict(&p, &batch).unwrap(), vec![Label::NoRel]);
    }

    #[test]
    fn out_of_range_token() {
        let p: ModelParams<f64> = init_params(&cfg(), 2).unwrap();
        let batch = pad_batch([&example(vec![2, 50, 3, 3], Label::Gof)], 0, None);
        assert!(matches!(
            forward(&p, &batch),
            Err(Error::TokenOutOfRange { id: 50, vocab_size: 50 })
        ));
    }

    #[test]
    fn loss_values() {
        let uniform = Array2::<f64>::zeros((1, 5));
        assert_abs_diff_eq!(nll_loss(&uniform, &[Label::Reg]), 5f64.ln(), epsilon = 1e-12);
        let sure = array![[0.0, 0.0, 50.0, 0.0, 0.0]];
        assert!(nll_loss(&sure, &[Label::Gof]) < 1e-20);
        let both = array![[0.0, 0.0, 50.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 0.0]];
        assert_abs_diff_eq!(nll_loss(&both, &[Label::Gof, Label::Com]), 0.804_718_956_217_050_2, epsilon = 1e-9);
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(array![0.0, 5.0, 0.0, 0.0, 0.0].view()), 1);
        assert_eq!(argmax(array![1.0, 1.0, 1.0, 1.0, 1.0].view()), 0);
        assert_eq!(argmax(array![0.0, 2.0, 2.0, 0.0, 0.0].view()), 1);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let l: Array2<f64> = array![[1.0, -2.0, 3.0, 0.5, 700.0], [0.0, 0.0, 0.0, 0.0, 0.0]];
        for row in softmax_rows(&l).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_gradient_closed_form() {
        let p: ModelParams<f64> = init_params(&cfg(), 5).unwrap();
        let exs = [
            example(vec![2, 10, 3, 20, 21, 3], Label::Gof),
            example(vec![2, 12, 3, 30, 3], Label::NoRel),
            example(vec![2, 13, 14, 3, 31, 32, 33, 3], Label::Com),
        ];
        let batch = pad_batch(&exs, 0, None);
        let g = grad(&p, &batch).unwrap();
        let probs = softmax_rows(&g.logits);
        for c in 0..5 {
            let expect: f64 = (0..3)
                .map(|b| probs[[b, c]] - if exs[b].label.index() == c { 1.0 } else { 0.0 })
                .sum::<f64>()
                / 3.0;
            assert_abs_diff_eq!(g.grads.cls_bias[c], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn saturated_loss_has_tiny_gradient() {
        let mut p: ModelParams<f64> = init_params(&cfg(), 5).unwrap();
        p.cls_weight.fill(0.0);
        p.cls_bias.fill(0.0);
        p.cls_bias[2] = 60.0;
        let batch = pad_batch([&example(vec![2, 10, 3, 20, 3], Label::Gof)], 0, None);
        let g = grad(&p, &batch).unwrap();
        assert!(g.loss < 1e-20);
        assert!(g.grads.l2_norm() < 1e-20);
    }

    #[test]
    fn dropout_only_in_training() {
        use rand::SeedableRng;
        let c = ModelConfig { dropout: 0.5, ..cfg() };
        let p: ModelParams<f64> = init_params(&c, 5).unwrap();
        let batch = pad_batch([&example(vec![2, 10, 3, 20, 3], Label::Gof)], 0, None);
        let a = forward(&p, &batch).unwrap();
        assert_eq!(a, forward(&p, &batch).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = loss_and_grad(&p, &batch, Some(&mut rng)).unwrap();
        assert_ne!(train.logits, a);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(loss_and_grad(&p, &batch, Some(&mut rng)).unwrap().logits, train.logits);
    }

    #[test]
    fn f32_and_f64_agree() {
        let p64: ModelParams<f64> = init_params(&cfg(), 9).unwrap();
        let p32: ModelParams<f32> = p64.cast();
        let batch = pad_batch([&example(vec![2, 10, 3, 20, 3], Label::Gof)], 0, None);
        let a = forward(&p64, &batch).unwrap();
        let b = forward(&p32, &batch).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
