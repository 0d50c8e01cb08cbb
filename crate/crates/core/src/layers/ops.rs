//! Pure numeric kernels behind the layers. Each takes explicit weights so it
//! can be checked against hand-written oracles without a module tree.

use crate::runtime::{Result, RuntimeError};
use crate::tensor::Tensor;

fn shape_err(msg: String) -> RuntimeError {
    RuntimeError::Shape(msg)
}

/// `y = x·W + b`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let y = x.matmul(w)?;
    match b {
        Some(b) => Ok(y.add_row(b)?),
        None => Ok(y),
    }
}

/// `y_i = x_i / sqrt(mean(x²) + eps) · scale_i` over the last dimension.
pub fn rmsnorm_forward(x: &Tensor, scale: &Tensor, eps: f64) -> Result<Tensor> {
    let d = x.last_dim();
    if scale.shape() != [d] {
        return Err(shape_err(format!(
            "rmsnorm scale {:?} for input {:?}",
            scale.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(d) {
        let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let inv = 1.0 / (ms + eps).sqrt();
        for (v, s) in row.iter_mut().zip(scale.data()) {
            *v = *v * inv * s;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationFn {
    Linear,
    Relu,
    Silu,
    Gelu,
    Tanh,
}

impl ActivationFn {
    /// Accepts bare names and the `nn.` prefixed spelling.
    pub fn parse(name: &str) -> Result<Self> {
        let bare = name.strip_prefix("nn.").unwrap_or(name);
        Ok(match bare {
            "linear" | "identity" => Self::Linear,
            "relu" => Self::Relu,
            "silu" | "swish" => Self::Silu,
            "gelu" => Self::Gelu,
            "tanh" => Self::Tanh,
            _ => return Err(RuntimeError::UnknownActivation(name.to_string())),
        })
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::Linear => v,
            Self::Relu => v.max(0.0),
            Self::Silu => v / (1.0 + (-v).exp()),
            Self::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * v * (1.0 + (c * (v + 0.044715 * v * v * v)).tanh())
            }
            Self::Tanh => v.tanh(),
        }
    }
}

/// A single activation, or a gated pair `(linear-branch, gated-branch)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Single(ActivationFn),
    Gated(ActivationFn, ActivationFn),
}

impl Activation {
    pub fn from_names(names: &[&str]) -> Result<Self> {
        match names {
            [one] => Ok(Self::Single(ActivationFn::parse(one)?)),
            [a, b] => Ok(Self::Gated(ActivationFn::parse(a)?, ActivationFn::parse(b)?)),
            _ => Err(RuntimeError::UnknownActivation(names.join(","))),
        }
    }

    /// Number of input projections.
    pub fn branches(&self) -> usize {
        match self {
            Self::Single(_) => 1,
            Self::Gated(..) => 2,
        }
    }
}

/// Weights of one feed-forward block. `linear1` holds one projection per
/// activation branch.
#[derive(Debug, Clone)]
pub struct FeedForwardWeights {
    pub linear1: Vec<(Tensor, Option<Tensor>)>,
    pub linear2: (Tensor, Option<Tensor>),
}

pub fn feed_forward_forward(
    x: &Tensor,
    w: &FeedForwardWeights,
    activation: Activation,
) -> Result<Tensor> {
    if w.linear1.len() != activation.branches() {
        return Err(shape_err(format!(
            "{} input projections for {:?}",
            w.linear1.len(),
            activation
        )));
    }
    let project = |i: usize| {
        let (wi, bi) = &w.linear1[i];
        linear_forward(x, wi, bi.as_ref())
    };
    let hidden = match activation {
        Activation::Single(f) => project(0)?.map(|v| f.apply(v)),
        Activation::Gated(fa, fb) => {
            let a = project(0)?;
            let b = project(1)?;
            a.zip_with(&b, |u, g| fa.apply(u) * fb.apply(g))?
        }
    };
    linear_forward(&hidden, &w.linear2.0, w.linear2.1.as_ref())
}

/// Rotary embedding of `x[..., T, d]` with adjacent pairs rotated by
/// `pos · base^(-2i/d)`.
pub fn rope_rotate(x: &Tensor, positions: &[f64], base: f64) -> Result<Tensor> {
    let d = x.last_dim();
    if !d.is_multiple_of(2) {
        return Err(RuntimeError::OddDim(d));
    }
    if x.rank() < 2 {
        return Err(shape_err(format!("rope input {:?} has no time axis", x.shape())));
    }
    let t = x.shape()[x.rank() - 2];
    if positions.len() != t {
        return Err(shape_err(format!(
            "{} positions for sequence length {t}",
            positions.len()
        )));
    }
    let freqs: Vec<f64> = (0..d / 2)
        .map(|i| base.powf(-2.0 * i as f64 / d as f64))
        .collect();
    let mut out = x.clone();
    for (r, row) in out.data_mut().chunks_mut(d).enumerate() {
        let pos = positions[r % t];
        if pos == 0.0 {
            continue;
        }
        for (i, pair) in row.chunks_mut(2).enumerate() {
            let (sin, cos) = (pos * freqs[i]).sin_cos();
            let (a, b) = (pair[0], pair[1]);
            pair[0] = a * cos - b * sin;
            pair[1] = a * sin + b * cos;
        }
    }
    Ok(out)
}

pub fn rope_apply(
    q: &Tensor,
    k: &Tensor,
    positions: &[f64],
    base: f64,
) -> Result<(Tensor, Tensor)> {
    Ok((rope_rotate(q, positions, base)?, rope_rotate(k, positions, base)?))
}

/// Row-wise softmax over the last dimension. Rows of all `-inf` stay zero.
pub fn softmax(x: &Tensor) -> Tensor {
    let d = x.last_dim();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(d) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// `[B, T, H·dh] -> [B, H, T, dh]`.
pub fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let &[b, t, d] = x.shape() else {
        return Err(shape_err(format!("split_heads on {:?}", x.shape())));
    };
    if heads == 0 || d % heads != 0 {
        return Err(shape_err(format!("dim {d} over {heads} heads")));
    }
    let dh = d / heads;
    let src = x.data();
    Ok(Tensor::from_fn(&[b, heads, t, dh], |i| {
        let (bi, rest) = (i / (heads * t * dh), i % (heads * t * dh));
        let (h, rest) = (rest / (t * dh), rest % (t * dh));
        let (ti, j) = (rest / dh, rest % dh);
        src[(bi * t + ti) * d + h * dh + j]
    }))
}

/// `[B, H, T, dh] -> [B, T, H·dh]`.
pub fn merge_heads(x: &Tensor) -> Result<Tensor> {
    let &[b, heads, t, dh] = x.shape() else {
        return Err(shape_err(format!("merge_heads on {:?}", x.shape())));
    };
    let d = heads * dh;
    let src = x.data();
    Ok(Tensor::from_fn(&[b, t, d], |i| {
        let (bi, rest) = (i / (t * d), i % (t * d));
        let (ti, c) = (rest / d, rest % d);
        let (h, j) = (c / dh, c % dh);
        src[((bi * heads + h) * t + ti) * dh + j]
    }))
}

/// Attention probabilities `softmax(q·kᵀ/√dh)` for `q, k: [..., T, dh]`,
/// shaped `[..., T, T]`.
pub fn attention_probs(q: &Tensor, k: &Tensor, causal: bool) -> Result<Tensor> {
    if q.shape() != k.shape() || q.rank() < 2 {
        return Err(shape_err(format!(
            "attention over q {:?} and k {:?}",
            q.shape(),
            k.shape()
        )));
    }
    let dh = q.last_dim();
    let t = q.shape()[q.rank() - 2];
    let groups = q.numel() / (t * dh);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut shape = q.shape().to_vec();
    *shape.last_mut().expect("rank >= 2") = t;
    let (qd, kd) = (q.data(), k.data());
    let scores = Tensor::from_fn(&shape, |i| {
        let (g, rest) = (i / (t * t), i % (t * t));
        let (a, b) = (rest / t, rest % t);
        if causal && b > a {
            return f64::NEG_INFINITY;
        }
        let qa = &qd[(g * t + a) * dh..(g * t + a + 1) * dh];
        let kb = &kd[(g * t + b) * dh..(g * t + b + 1) * dh];
        qa.iter().zip(kb).map(|(x, y)| x * y).sum::<f64>() * scale
    });
    debug_assert_eq!(scores.numel(), groups * t * t);
    Ok(softmax(&scores))
}

/// `probs[..., T, T] · v[..., T, dh]`.
pub fn attention_context(probs: &Tensor, v: &Tensor) -> Result<Tensor> {
    let dh = v.last_dim();
    let t = probs.last_dim();
    if v.rank() != probs.rank() || v.numel() / dh != probs.numel() / t {
        return Err(shape_err(format!(
            "context from probs {:?} and v {:?}",
            probs.shape(),
            v.shape()
        )));
    }
    let (pd, vd) = (probs.data(), v.data());
    Ok(Tensor::from_fn(v.shape(), |i| {
        let (row, j) = (i / dh, i % dh);
        let g = row / t;
        let p = &pd[row * t..(row + 1) * t];
        p.iter()
            .enumerate()
            .map(|(b, w)| w * vd[(g * t + b) * dh + j])
            .sum()
    }))
}

/// Router output for one batch of tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision {
    /// Selected experts per token, highest probability first.
    pub indices: Vec<Vec<usize>>,
    /// Renormalized weights matching `indices`.
    pub weights: Vec<Vec<f64>>,
    /// Share of token-to-expert assignments received by each expert.
    pub dispatch_fractions: Vec<f64>,
    /// Mean router probability per expert.
    pub mean_probs: Vec<f64>,
}

impl GateDecision {
    /// `E · Σ_e f_e · p_e`.
    pub fn load_balance_loss(&self) -> f64 {
        let e = self.mean_probs.len() as f64;
        e * self
            .dispatch_fractions
            .iter()
            .zip(&self.mean_probs)
            .map(|(f, p)| f * p)
            .sum::<f64>()
    }
}

/// Softmax top-k gating over router logits `[N, E]`. Ties go to the lower
/// expert index.
pub fn moe_gate(logits: &Tensor, k: usize) -> Result<GateDecision> {
    let experts = logits.last_dim();
    if k == 0 || k > experts {
        return Err(RuntimeError::BadK { k, experts });
    }
    let probs = softmax(logits);
    let tokens = probs.rows();
    let mut indices = Vec::with_capacity(tokens);
    let mut weights = Vec::with_capacity(tokens);
    let mut counts = vec![0usize; experts];
    let mut prob_sums = vec![0.0; experts];
    for row in probs.data().chunks(experts) {
        let mut order: Vec<usize> = (0..experts).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        order.truncate(k);
        let total: f64 = order.iter().map(|&e| row[e]).sum();
        let w: Vec<f64> = if total > 0.0 {
            order.iter().map(|&e| row[e] / total).collect()
        } else {
            vec![1.0 / k as f64; k]
        };
        for &e in &order {
            counts[e] += 1;
        }
        for (s, p) in prob_sums.iter_mut().zip(row) {
            *s += p;
        }
        indices.push(order);
        weights.push(w);
    }
    let assignments = (tokens * k) as f64;
    Ok(GateDecision {
        indices,
        weights,
        dispatch_fractions: counts.iter().map(|&c| c as f64 / assignments).collect(),
        mean_probs: prob_sums.iter().map(|s| s / tokens as f64).collect(),
    })
}

/// Mixture of feed-forward experts over `x[..., d]`.
pub fn moe_forward(
    x: &Tensor,
    router: &Tensor,
    experts: &[FeedForwardWeights],
    activation: Activation,
    k: usize,
) -> Result<(Tensor, GateDecision)> {
    if router.rank() != 2 || router.shape()[1] != experts.len() {
        return Err(shape_err(format!(
            "router {:?} for {} experts",
            router.shape(),
            experts.len()
        )));
    }
    let d = x.last_dim();
    let tokens = x.rows();
    let flat = x.clone().reshape(vec![tokens, d])?;
    let gate = moe_gate(&flat.matmul(router)?, k)?;

    let mut out = vec![0.0; tokens * d];
    for (e, weights) in experts.iter().enumerate() {
        let rows: Vec<(usize, f64)> = gate
            .indices
            .iter()
            .zip(&gate.weights)
            .enumerate()
            .filter_map(|(t, (idx, w))| idx.iter().position(|&i| i == e).map(|j| (t, w[j])))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let picked = Tensor::from_fn(&[rows.len(), d], |i| flat.data()[rows[i / d].0 * d + i % d]);
        let y = feed_forward_forward(&picked, weights, activation)?;
        let od = y.last_dim();
        if od != d {
            return Err(shape_err(format!("expert output dim {od} for input dim {d}")));
        }
        for (r, &(t, w)) in rows.iter().enumerate() {
            for j in 0..d {
                out[t * d + j] += w * y.data()[r * d + j];
            }
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, gate))
}

/// Mean token cross-entropy of `logits[..., V]` against integer targets.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let v = logits.last_dim();
    if logits.rows() != targets.len() {
        return Err(shape_err(format!(
            "{} targets for logits {:?}",
            targets.len(),
            logits.shape()
        )));
    }
    let mut total = 0.0;
    for (row, &t) in logits.data().chunks(v).zip(targets) {
        if t >= v {
            return Err(shape_err(format!("target {t} outside vocabulary of {v}")));
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    Ok(total / targets.len() as f64)
}
