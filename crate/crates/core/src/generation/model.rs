//! Desk-scale decoder-only transformer for span infilling.
//!
//! Each token embedding is summed with two learned position embeddings
//! (sequence position and intra-span position). Every layer runs
//! normalization, multi-head attention, and a ReLU feed-forward network, with
//! the normalization placed before each sub-block by default. Each layer also
//! owns trainable prefix keys and values that every token can attend to.
//! A final normalization feeds a linear output head.
//!
//! Gradients are computed by hand; `backward` mirrors `forward` step by step.

use ndarray::{concatenate, s, Array, Array1, Array2, Axis, Dimension, Zip};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::positions::{may_attend, PositionPair, TokenRole};
use super::GenerationError;

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

const NORM_EPS: f64 = 1e-5;

/// Where normalization sits relative to the residual connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    /// `x + f(norm(x))`
    Pre,
    /// `norm(x + f(x))`
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGlmConfig {
    pub vocab_size: usize,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub prefix_len: usize,
    pub seed: u64,
    pub norm_placement: NormPlacement,
    /// Standard deviation of the normal initializer for weight matrices.
    pub init_std: f64,
}

impl ToyGlmConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            max_seq_len: 256,
            prefix_len: 64,
            seed: 0,
            norm_placement: NormPlacement::Pre,
            init_std: 0.02,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let err = |m: &str| Err(GenerationError::Config(m.to_string()));
        if self.vocab_size == 0 || self.d_model == 0 || self.d_ff == 0 || self.max_seq_len < 2 {
            return err("vocab_size, d_model and d_ff must be positive and max_seq_len >= 2");
        }
        if self.n_layers == 0 || self.n_heads == 0 {
            return err("n_layers and n_heads must be at least 1");
        }
        if self.d_model % self.n_heads != 0 {
            return err("d_model must be divisible by n_heads");
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return err("init_std must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_norm_gain: Vector,
    pub attn_norm_bias: Vector,
    pub query: Matrix,
    pub query_bias: Vector,
    pub key: Matrix,
    pub key_bias: Vector,
    pub value: Matrix,
    pub value_bias: Vector,
    pub attn_out: Matrix,
    pub attn_out_bias: Vector,
    pub ffn_norm_gain: Vector,
    pub ffn_norm_bias: Vector,
    pub ffn_in: Matrix,
    pub ffn_in_bias: Vector,
    pub ffn_out: Matrix,
    pub ffn_out_bias: Vector,
    /// prefix_len × d_model, prepended to the attention keys.
    pub prefix_keys: Matrix,
    /// prefix_len × d_model, prepended to the attention values.
    pub prefix_values: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub token_embedding: Matrix,
    pub pos1_embedding: Matrix,
    pub pos2_embedding: Matrix,
    pub layers: Vec<LayerParams>,
    pub final_norm_gain: Vector,
    pub final_norm_bias: Vector,
    pub output_head: Matrix,
    pub output_bias: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    Prefix,
}

pub struct TensorView<'a> {
    pub name: String,
    pub group: ParamGroup,
    /// Subject to weight decay.
    pub decay: bool,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorViewMut<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub decay: bool,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

fn view<'a, D: Dimension>(
    name: String,
    group: ParamGroup,
    decay: bool,
    a: &'a Array<f64, D>,
) -> TensorView<'a> {
    TensorView {
        name,
        group,
        decay,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("parameters are in standard layout"),
    }
}

fn view_mut<'a, D: Dimension>(
    name: String,
    group: ParamGroup,
    decay: bool,
    a: &'a mut Array<f64, D>,
) -> TensorViewMut<'a> {
    TensorViewMut {
        name,
        group,
        decay,
        shape: a.shape().to_vec(),
        data: a.as_slice_mut().expect("parameters are in standard layout"),
    }
}

// One list of tensors, expanded for shared and exclusive borrows.
macro_rules! tensor_list {
    ($params:expr, $view:ident, $iter:ident, $($m:tt)*) => {{
        use ParamGroup::{Backbone, Prefix};
        let p = $params;
        let mut out = vec![
            $view("token_embedding".into(), Backbone, true, & $($m)* p.token_embedding),
            $view("pos1_embedding".into(), Backbone, true, & $($m)* p.pos1_embedding),
            $view("pos2_embedding".into(), Backbone, true, & $($m)* p.pos2_embedding),
        ];
        for (i, l) in p.layers.$iter().enumerate() {
            let n = |field: &str| format!("layers.{i}.{field}");
            out.extend([
                $view(n("attn_norm_gain"), Backbone, false, & $($m)* l.attn_norm_gain),
                $view(n("attn_norm_bias"), Backbone, false, & $($m)* l.attn_norm_bias),
                $view(n("query"), Backbone, true, & $($m)* l.query),
                $view(n("query_bias"), Backbone, false, & $($m)* l.query_bias),
                $view(n("key"), Backbone, true, & $($m)* l.key),
                $view(n("key_bias"), Backbone, false, & $($m)* l.key_bias),
                $view(n("value"), Backbone, true, & $($m)* l.value),
                $view(n("value_bias"), Backbone, false, & $($m)* l.value_bias),
                $view(n("attn_out"), Backbone, true, & $($m)* l.attn_out),
                $view(n("attn_out_bias"), Backbone, false, & $($m)* l.attn_out_bias),
                $view(n("ffn_norm_gain"), Backbone, false, & $($m)* l.ffn_norm_gain),
                $view(n("ffn_norm_bias"), Backbone, false, & $($m)* l.ffn_norm_bias),
                $view(n("ffn_in"), Backbone, true, & $($m)* l.ffn_in),
                $view(n("ffn_in_bias"), Backbone, false, & $($m)* l.ffn_in_bias),
                $view(n("ffn_out"), Backbone, true, & $($m)* l.ffn_out),
                $view(n("ffn_out_bias"), Backbone, false, & $($m)* l.ffn_out_bias),
                $view(n("prefix_keys"), Prefix, false, & $($m)* l.prefix_keys),
                $view(n("prefix_values"), Prefix, false, & $($m)* l.prefix_values),
            ]);
        }
        out.extend([
            $view("final_norm_gain".into(), Backbone, false, & $($m)* p.final_norm_gain),
            $view("final_norm_bias".into(), Backbone, false, & $($m)* p.final_norm_bias),
            $view("output_head".into(), Backbone, true, & $($m)* p.output_head),
            $view("output_bias".into(), Backbone, false, & $($m)* p.output_bias),
        ]);
        out
    }};
}

impl ModelParams {
    pub fn zeros(cfg: &ToyGlmConfig) -> Self {
        let (d, f, p) = (cfg.d_model, cfg.d_ff, cfg.prefix_len);
        let layer = LayerParams {
            attn_norm_gain: Vector::zeros(d),
            attn_norm_bias: Vector::zeros(d),
            query: Matrix::zeros((d, d)),
            query_bias: Vector::zeros(d),
            key: Matrix::zeros((d, d)),
            key_bias: Vector::zeros(d),
            value: Matrix::zeros((d, d)),
            value_bias: Vector::zeros(d),
            attn_out: Matrix::zeros((d, d)),
            attn_out_bias: Vector::zeros(d),
            ffn_norm_gain: Vector::zeros(d),
            ffn_norm_bias: Vector::zeros(d),
            ffn_in: Matrix::zeros((d, f)),
            ffn_in_bias: Vector::zeros(f),
            ffn_out: Matrix::zeros((f, d)),
            ffn_out_bias: Vector::zeros(d),
            prefix_keys: Matrix::zeros((p, d)),
            prefix_values: Matrix::zeros((p, d)),
        };
        Self {
            token_embedding: Matrix::zeros((cfg.vocab_size, d)),
            pos1_embedding: Matrix::zeros((cfg.max_seq_len, d)),
            pos2_embedding: Matrix::zeros((cfg.max_seq_len, d)),
            layers: vec![layer; cfg.n_layers],
            final_norm_gain: Vector::zeros(d),
            final_norm_bias: Vector::zeros(d),
            output_head: Matrix::zeros((d, cfg.vocab_size)),
            output_bias: Vector::zeros(cfg.vocab_size),
        }
    }

    /// Normal(0, init_std) weights, unit norm gains, zero biases; seeded.
    pub fn init(cfg: &ToyGlmConfig) -> Result<Self, GenerationError> {
        cfg.validate()?;
        let mut params = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.init_std).expect("validated std");
        for t in params.tensors_mut() {
            let field = t.name.rsplit('.').next().unwrap_or_default();
            if field.ends_with("norm_gain") {
                t.data.fill(1.0);
            } else if t.shape.len() == 2 {
                for x in t.data.iter_mut() {
                    *x = normal.sample(&mut rng);
                }
            }
        }
        Ok(params)
    }

    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        tensor_list!(self, view, iter,)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        tensor_list!(self, view_mut, iter_mut, mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Checks every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ToyGlmConfig) -> Result<(), GenerationError> {
        let expected = Self::zeros(cfg);
        let ours = self.tensors();
        let theirs = expected.tensors();
        if ours.len() != theirs.len() {
            return Err(GenerationError::Config("layer count does not match config".into()));
        }
        for (a, b) in ours.iter().zip(&theirs) {
            if a.shape != b.shape {
                return Err(GenerationError::Config(format!(
                    "{} has shape {:?}, expected {:?}",
                    a.name, a.shape, b.shape
                )));
            }
        }
        Ok(())
    }
}

struct NormCache {
    xhat: Matrix,
    inv_std: Vector,
}

fn layer_norm(x: &Matrix, gain: &Vector, bias: &Vector) -> (Matrix, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Matrix,
    gain: &Vector,
    cache: &NormCache,
    dgain: &mut Vector,
    dbias: &mut Vector,
) -> Matrix {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - &mean_dxhat.view().insert_axis(Axis(1));
    dx -= &(&cache.xhat * &mean_dxhat_xhat.view().insert_axis(Axis(1)));
    dx * &cache.inv_std.view().insert_axis(Axis(1))
}

struct AttnCache {
    input: Matrix,
    q: Matrix,
    keys: Matrix,
    values: Matrix,
    probs: Vec<Matrix>,
    context: Matrix,
}

fn attention(
    layer: &LayerParams,
    h: &Matrix,
    visible: &Array2<bool>,
    n_heads: usize,
) -> (Matrix, AttnCache) {
    let (t, d) = h.dim();
    let prefix = layer.prefix_keys.nrows();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = h.dot(&layer.query) + &layer.query_bias;
    let k = h.dot(&layer.key) + &layer.key_bias;
    let v = h.dot(&layer.value) + &layer.value_bias;
    let keys = concatenate(Axis(0), &[layer.prefix_keys.view(), k.view()]).expect("same width");
    let values =
        concatenate(Axis(0), &[layer.prefix_values.view(), v.view()]).expect("same width");

    let mut context = Matrix::zeros((t, d));
    let mut probs = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut scores = q.slice(cols).dot(&keys.slice(cols).t()) * scale;
        for (i, mut row) in scores.outer_iter_mut().enumerate() {
            for j in 0..t {
                if !visible[[i, j]] {
                    row[prefix + j] = f64::NEG_INFINITY;
                }
            }
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        context.slice_mut(cols).assign(&scores.dot(&values.slice(cols)));
        probs.push(scores);
    }
    let out = context.dot(&layer.attn_out) + &layer.attn_out_bias;
    (
        out,
        AttnCache {
            input: h.clone(),
            q,
            keys,
            values,
            probs,
            context,
        },
    )
}

fn attention_backward(
    layer: &LayerParams,
    cache: &AttnCache,
    dout: &Matrix,
    grad: &mut LayerParams,
    n_heads: usize,
) -> Matrix {
    let (t, d) = cache.input.dim();
    let prefix = layer.prefix_keys.nrows();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    grad.attn_out += &cache.context.t().dot(dout);
    grad.attn_out_bias += &dout.sum_axis(Axis(0));
    let dcontext = dout.dot(&layer.attn_out.t());

    let mut dq = Matrix::zeros((t, d));
    let mut dkeys = Matrix::zeros((prefix + t, d));
    let mut dvalues = Matrix::zeros((prefix + t, d));
    for (head, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., head * dh..(head + 1) * dh];
        let dctx = dcontext.slice(cols);
        let dprobs = dctx.dot(&cache.values.slice(cols).t());
        dvalues.slice_mut(cols).assign(&probs.t().dot(&dctx));
        let row_dot = (&dprobs * probs).sum_axis(Axis(1));
        let dscores = (dprobs - &row_dot.view().insert_axis(Axis(1))) * probs * scale;
        dq.slice_mut(cols).assign(&dscores.dot(&cache.keys.slice(cols)));
        dkeys
            .slice_mut(cols)
            .assign(&dscores.t().dot(&cache.q.slice(cols)));
    }
    grad.prefix_keys += &dkeys.slice(s![..prefix, ..]);
    grad.prefix_values += &dvalues.slice(s![..prefix, ..]);
    let dk = dkeys.slice(s![prefix.., ..]);
    let dv = dvalues.slice(s![prefix.., ..]);

    let x = &cache.input;
    grad.query += &x.t().dot(&dq);
    grad.query_bias += &dq.sum_axis(Axis(0));
    grad.key += &x.t().dot(&dk);
    grad.key_bias += &dk.sum_axis(Axis(0));
    grad.value += &x.t().dot(&dv);
    grad.value_bias += &dv.sum_axis(Axis(0));
    dq.dot(&layer.query.t()) + dk.dot(&layer.key.t()) + dv.dot(&layer.value.t())
}

struct FfnCache {
    input: Matrix,
    pre_activation: Matrix,
    activation: Matrix,
}

fn feed_forward(layer: &LayerParams, h: &Matrix) -> (Matrix, FfnCache) {
    let pre_activation = h.dot(&layer.ffn_in) + &layer.ffn_in_bias;
    let activation = pre_activation.mapv(|x| x.max(0.0));
    let out = activation.dot(&layer.ffn_out) + &layer.ffn_out_bias;
    (
        out,
        FfnCache {
            input: h.clone(),
            pre_activation,
            activation,
        },
    )
}

fn feed_forward_backward(
    layer: &LayerParams,
    cache: &FfnCache,
    dout: &Matrix,
    grad: &mut LayerParams,
) -> Matrix {
    grad.ffn_out += &cache.activation.t().dot(dout);
    grad.ffn_out_bias += &dout.sum_axis(Axis(0));
    let mut du = dout.dot(&layer.ffn_out.t());
    Zip::from(&mut du)
        .and(&cache.pre_activation)
        .for_each(|g, &u| {
            if u <= 0.0 {
                *g = 0.0;
            }
        });
    grad.ffn_in += &cache.input.t().dot(&du);
    grad.ffn_in_bias += &du.sum_axis(Axis(0));
    du.dot(&layer.ffn_in.t())
}

struct LayerCache {
    attn_norm: NormCache,
    attn: AttnCache,
    ffn_norm: NormCache,
    ffn: FfnCache,
}

/// Intermediate values kept by [`forward_hidden`] for [`backward_hidden`].
pub struct ForwardCache {
    ids: Vec<usize>,
    positions: Vec<PositionPair>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    placement: NormPlacement,
    n_heads: usize,
}

fn visibility(roles: &[TokenRole]) -> Array2<bool> {
    let t = roles.len();
    Array2::from_shape_fn((t, t), |(i, j)| may_attend(roles[i], roles[j]))
}

/// Runs the network up to the final normalization; returns seq_len × d_model.
pub fn forward_hidden(
    params: &ModelParams,
    cfg: &ToyGlmConfig,
    ids: &[usize],
    positions: &[PositionPair],
    roles: &[TokenRole],
) -> Result<(Matrix, ForwardCache), GenerationError> {
    let t = ids.len();
    if t > cfg.max_seq_len {
        return Err(GenerationError::SequenceTooLong {
            len: t,
            max: cfg.max_seq_len,
        });
    }
    if positions.len() != t || roles.len() != t {
        return Err(GenerationError::Config(
            "ids, positions and roles must have equal length".into(),
        ));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(GenerationError::Config(format!("token id {bad} outside vocabulary")));
    }
    if let Some(p) = positions
        .iter()
        .find(|p| p.pos1 >= cfg.max_seq_len || p.pos2 >= cfg.max_seq_len)
    {
        return Err(GenerationError::SequenceTooLong {
            len: p.pos1.max(p.pos2) + 1,
            max: cfg.max_seq_len,
        });
    }

    let mut x = Matrix::zeros((t, cfg.d_model));
    for (i, (&id, p)) in ids.iter().zip(positions).enumerate() {
        let mut row = x.row_mut(i);
        row += &params.token_embedding.row(id);
        row += &params.pos1_embedding.row(p.pos1);
        row += &params.pos2_embedding.row(p.pos2);
    }
    let visible = visibility(roles);

    let mut caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let cache = match cfg.norm_placement {
            NormPlacement::Pre => {
                let (h, attn_norm) = layer_norm(&x, &layer.attn_norm_gain, &layer.attn_norm_bias);
                let (a, attn) = attention(layer, &h, &visible, cfg.n_heads);
                x += &a;
                let (h, ffn_norm) = layer_norm(&x, &layer.ffn_norm_gain, &layer.ffn_norm_bias);
                let (m, ffn) = feed_forward(layer, &h);
                x += &m;
                LayerCache {
                    attn_norm,
                    attn,
                    ffn_norm,
                    ffn,
                }
            }
            NormPlacement::Post => {
                let (a, attn) = attention(layer, &x, &visible, cfg.n_heads);
                let (y, attn_norm) =
                    layer_norm(&(&x + &a), &layer.attn_norm_gain, &layer.attn_norm_bias);
                let (m, ffn) = feed_forward(layer, &y);
                let (y, ffn_norm) =
                    layer_norm(&(&y + &m), &layer.ffn_norm_gain, &layer.ffn_norm_bias);
                x = y;
                LayerCache {
                    attn_norm,
                    attn,
                    ffn_norm,
                    ffn,
                }
            }
        };
        caches.push(cache);
    }
    let (hidden, final_norm) = layer_norm(&x, &params.final_norm_gain, &params.final_norm_bias);
    Ok((
        hidden,
        ForwardCache {
            ids: ids.to_vec(),
            positions: positions.to_vec(),
            layers: caches,
            final_norm,
            placement: cfg.norm_placement,
            n_heads: cfg.n_heads,
        },
    ))
}

/// Accumulates into `grad` the gradient implied by `d_hidden`, the gradient
/// of the loss with respect to the output of [`forward_hidden`].
pub fn backward_hidden(
    params: &ModelParams,
    cache: &ForwardCache,
    d_hidden: &Matrix,
    grad: &mut ModelParams,
) {
    let mut dx = layer_norm_backward(
        d_hidden,
        &params.final_norm_gain,
        &cache.final_norm,
        &mut grad.final_norm_gain,
        &mut grad.final_norm_bias,
    );
    for ((layer, lc), lg) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(grad.layers.iter_mut())
        .rev()
    {
        match cache.placement {
            NormPlacement::Pre => {
                let dh = feed_forward_backward(layer, &lc.ffn, &dx, lg);
                dx += &layer_norm_backward(
                    &dh,
                    &layer.ffn_norm_gain,
                    &lc.ffn_norm,
                    &mut lg.ffn_norm_gain,
                    &mut lg.ffn_norm_bias,
                );
                let dh = attention_backward(layer, &lc.attn, &dx, lg, cache.n_heads);
                dx += &layer_norm_backward(
                    &dh,
                    &layer.attn_norm_gain,
                    &lc.attn_norm,
                    &mut lg.attn_norm_gain,
                    &mut lg.attn_norm_bias,
                );
            }
            NormPlacement::Post => {
                let ds = layer_norm_backward(
                    &dx,
                    &layer.ffn_norm_gain,
                    &lc.ffn_norm,
                    &mut lg.ffn_norm_gain,
                    &mut lg.ffn_norm_bias,
                );
                let dy = &ds + &feed_forward_backward(layer, &lc.ffn, &ds, lg);
                let ds = layer_norm_backward(
                    &dy,
                    &layer.attn_norm_gain,
                    &lc.attn_norm,
                    &mut lg.attn_norm_gain,
                    &mut lg.attn_norm_bias,
                );
                dx = &ds + &attention_backward(layer, &lc.attn, &ds, lg, cache.n_heads);
            }
        }
    }
    for (i, (&id, p)) in cache.ids.iter().zip(&cache.positions).enumerate() {
        let row = dx.row(i);
        let mut g = grad.token_embedding.row_mut(id);
        g += &row;
        let mut g = grad.pos1_embedding.row_mut(p.pos1);
        g += &row;
        let mut g = grad.pos2_embedding.row_mut(p.pos2);
        g += &row;
    }
}

/// Full forward pass: seq_len × vocab_size logits.
pub fn forward(
    params: &ModelParams,
    cfg: &ToyGlmConfig,
    ids: &[usize],
    positions: &[PositionPair],
    roles: &[TokenRole],
) -> Result<Matrix, GenerationError> {
    let (hidden, _) = forward_hidden(params, cfg, ids, positions, roles)?;
    Ok(hidden.dot(&params.output_head) + &params.output_bias)
}

fn log_softmax_row(row: ndarray::ArrayView1<f64>) -> Vector {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let log_sum = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    row.mapv(|x| x - log_sum)
}

/// Mean cross-entropy over rows that carry a target; other rows are ignored.
pub fn span_cross_entropy(logits: &Matrix, targets: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (row, target) in logits.outer_iter().zip(targets) {
        if let Some(t) = *target {
            total -= log_softmax_row(row)[t];
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// A sequence laid out for training or scoring.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sequence {
    pub ids: Vec<usize>,
    pub positions: Vec<(usize, usize)>,
    pub roles: Vec<TokenRole>,
    /// Next-token target for answer rows, `None` elsewhere.
    pub targets: Vec<Option<usize>>,
}

impl Sequence {
    pub fn position_pairs(&self) -> Vec<PositionPair> {
        self.positions
            .iter()
            .map(|&(pos1, pos2)| PositionPair { pos1, pos2 })
            .collect()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

/// Sum of target-token cross-entropies for one sequence. When `grad` is
/// given, adds `scale ×` the gradient of that sum. Logits are only computed
/// for target rows.
pub fn sequence_loss(
    params: &ModelParams,
    cfg: &ToyGlmConfig,
    seq: &Sequence,
    grad: Option<(&mut ModelParams, f64)>,
) -> Result<f64, GenerationError> {
    let positions = seq.position_pairs();
    let (hidden, cache) = forward_hidden(params, cfg, &seq.ids, &positions, &seq.roles)?;
    let rows: Vec<usize> = (0..seq.targets.len())
        .filter(|&i| seq.targets[i].is_some())
        .collect();
    if rows.is_empty() {
        return Ok(0.0);
    }
    let picked = hidden.select(Axis(0), &rows);
    let logits = picked.dot(&params.output_head) + &params.output_bias;
    let mut loss = 0.0;
    let mut dlogits = Matrix::zeros(logits.dim());
    for (k, &r) in rows.iter().enumerate() {
        let target = seq.targets[r].expect("selected rows have targets");
        let logp = log_softmax_row(logits.row(k));
        loss -= logp[target];
        let mut d = dlogits.row_mut(k);
        d.assign(&logp.mapv(f64::exp));
        d[target] -= 1.0;
    }
    if let Some((grad, scale)) = grad {
        dlogits *= scale;
        grad.output_head += &picked.t().dot(&dlogits);
        grad.output_bias += &dlogits.sum_axis(Axis(0));
        let dpicked = dlogits.dot(&params.output_head.t());
        let mut d_hidden = Matrix::zeros(hidden.dim());
        for (k, &r) in rows.iter().enumerate() {
            d_hidden.row_mut(r).assign(&dpicked.row(k));
        }
        backward_hidden(params, &cache, &d_hidden, grad);
    }
    Ok(loss)
}

/// Index of the largest logit; the lowest id wins ties.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Draws an id from softmax(row).
pub fn sample_from_logits(row: ndarray::ArrayView1<f64>, rng: &mut impl Rng) -> usize {
    let probs = log_softmax_row(row).mapv(f64::exp);
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::positions::encode_positions;

    fn tiny(prefix_len: usize) -> ToyGlmConfig {
        ToyGlmConfig {
            vocab_size: 11,
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 12,
            max_seq_len: 16,
            prefix_len,
            seed: 3,
            norm_placement: NormPlacement::Pre,
            init_std: 0.3,
        }
    }

    fn layout(context: &[usize], answer: &[usize]) -> (Vec<usize>, Vec<PositionPair>, Vec<TokenRole>) {
        let positions = encode_positions(context.len(), context.len() - 1, answer.len()).unwrap();
        let roles = (0..context.len())
            .map(|_| TokenRole::Context)
            .chain((0..answer.len()).map(TokenRole::Answer))
            .collect();
        (context.iter().chain(answer).copied().collect(), positions, roles)
    }

    #[test]
    fn logits_have_expected_shape() {
        let cfg = ToyGlmConfig {
            vocab_size: 30,
            d_model: 64,
            n_heads: 4,
            d_ff: 64,
            max_seq_len: 32,
            prefix_len: 4,
            ..ToyGlmConfig::new(30)
        };
        let params = ModelParams::init(&cfg).unwrap();
        for len in [2, 7, 32] {
            let ctx: Vec<usize> = (0..len - 1).map(|i| i % 30).collect();
            let (ids, pos, roles) = layout(&ctx, &[5]);
            let logits = forward(&params, &cfg, &ids, &pos, &roles).unwrap();
            assert_eq!(logits.dim(), (len, 30));
        }
        let ctx: Vec<usize> = vec![1; 32];
        let (ids, pos, roles) = layout(&ctx, &[5]);
        assert!(matches!(
            forward(&params, &cfg, &ids, &pos, &roles),
            Err(GenerationError::SequenceTooLong { len: 33, max: 32 })
        ));
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let cfg = tiny(2);
        let mut params = ModelParams::zeros(&cfg);
        for (i, b) in params.output_bias.iter_mut().enumerate() {
            *b = i as f64 * 0.5 - 1.0;
        }
        let (ids, pos, roles) = layout(&[5, 6, 7], &[8, 9]);
        let logits = forward(&params, &cfg, &ids, &pos, &roles).unwrap();
        for row in logits.outer_iter() {
            assert_eq!(row, params.output_bias.view());
        }
    }

    #[test]
    fn both_norm_placements_run() {
        for placement in [NormPlacement::Pre, NormPlacement::Post] {
            let cfg = ToyGlmConfig { norm_placement: placement, ..tiny(2) };
            let params = ModelParams::init(&cfg).unwrap();
            let (ids, pos, roles) = layout(&[5, 6, 7], &[8, 9]);
            let logits = forward(&params, &cfg, &ids, &pos, &roles).unwrap();
            assert!(logits.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn init_is_seeded() {
        let cfg = tiny(2);
        assert_eq!(ModelParams::init(&cfg).unwrap(), ModelParams::init(&cfg).unwrap());
        let other = ToyGlmConfig { seed: 4, ..cfg.clone() };
        assert_ne!(ModelParams::init(&cfg).unwrap(), ModelParams::init(&other).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(ToyGlmConfig { n_heads: 3, ..tiny(0) }.validate().is_err());
        assert!(ToyGlmConfig { n_layers: 0, ..tiny(0) }.validate().is_err());
        assert!(tiny(0).validate().is_ok());
    }

    #[test]
    fn tensor_listing_covers_every_parameter() {
        let cfg = tiny(3);
        let params = ModelParams::init(&cfg).unwrap();
        let tensors = params.tensors();
        assert_eq!(tensors.len(), 3 + 18 * cfg.n_layers + 4);
        let prefix: usize = tensors
            .iter()
            .filter(|t| t.group == ParamGroup::Prefix)
            .map(|t| t.data.len())
            .sum();
        assert_eq!(prefix, 2 * cfg.n_layers * cfg.prefix_len * cfg.d_model);
        params.check_shapes(&cfg).unwrap();
        assert!(params.check_shapes(&tiny(4)).is_err());
    }
}
