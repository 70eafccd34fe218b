//! Building blocks shared by every stream of the network.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Element, Graph, ParamId, ParamStore, Tensor, Var};

/// Forward-pass context: the tape, the parameters and the dropout mode.
pub struct Fwd<'a, F: Element> {
    pub g: &'a mut Graph<F>,
    pub params: &'a ParamStore<F>,
    pub train: bool,
    pub dropout: f64,
}

impl<F: Element> Fwd<'_, F> {
    pub fn p(&mut self, id: ParamId) -> Var {
        self.g.param(self.params, id)
    }

    pub fn drop(&mut self, x: Var) -> Result<Var> {
        self.g.dropout(x, self.dropout, self.train)
    }
}

/// Uniform in `+-sqrt(1 / fan_in)`.
pub fn fan_in_uniform<F: Element, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<F> {
    Tensor::uniform(shape, (1.0 / fan_in as f64).sqrt(), rng)
}

/// Affine map `x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Element, R: Rng>(store: &mut ParamStore<F>, name: &str, n_in: usize, n_out: usize, rng: &mut R) -> Result<Self> {
        let mut l = Self::without_bias(store, name, n_in, n_out, rng)?;
        l.b = Some(store.add(format!("{name}.b"), Tensor::zeros(&[n_out]))?);
        Ok(l)
    }

    pub fn without_bias<F: Element, R: Rng>(
        store: &mut ParamStore<F>,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{name}.w"), fan_in_uniform(&[n_in, n_out], n_in, rng))?,
            b: None,
        })
    }

    pub fn forward<F: Element>(&self, f: &mut Fwd<F>, x: Var) -> Result<Var> {
        let w = f.p(self.w);
        let y = f.g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = f.p(b);
                f.g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Learnable per-feature scale and shift.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Affine {
    pub fn new<F: Element>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[dim], F::ONE))?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[dim]))?,
        })
    }

    pub fn forward<F: Element>(&self, f: &mut Fwd<F>, x: Var) -> Result<Var> {
        let gamma = f.p(self.gamma);
        let beta = f.p(self.beta);
        let y = f.g.mul_row(x, gamma)?;
        f.g.add_row(y, beta)
    }

    /// Layer norm over features, then the affine map.
    pub fn layer_norm<F: Element>(&self, f: &mut Fwd<F>, x: Var) -> Result<Var> {
        let n = f.g.layer_norm(x);
        self.forward(f, n)
    }

    /// Normalizes every channel over time within one sequence, then the
    /// affine map.
    pub fn instance_norm<F: Element>(&self, f: &mut Fwd<F>, x: Var) -> Result<Var> {
        let t = f.g.transpose(x)?;
        let n = f.g.layer_norm(t);
        let n = f.g.transpose(n)?;
        self.forward(f, n)
    }
}

/// Sinusoidal encoding: `PE[p, 2i] = sin(p / 10000^(2i/d))`,
/// `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn sinusoid_table<F: Element>(len: usize, dim: usize) -> Tensor<F> {
    let mut data = Vec::with_capacity(len * dim);
    for p in 0..len {
        for j in 0..dim {
            let i2 = (j / 2 * 2) as f64;
            let angle = p as f64 / 10_000f64.powf(i2 / dim as f64);
            data.push(F::from_f64(if j % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![len, dim], data).expect("table shape matches data")
}

/// `h + alpha * PE`.
pub fn scaled_positional_encoding<F: Element>(f: &mut Fwd<F>, h: Var, alpha: ParamId) -> Result<Var> {
    let (len, dim) = (f.g.rows(h), f.g.cols(h));
    let pe = f.g.constant(&sinusoid_table(len, dim));
    let a = f.p(alpha);
    let scaled = f.g.scale_by(pe, a)?;
    f.g.add(h, scaled)
}

/// Post-norm transformer encoder layer: self-attention and a ReLU
/// feed-forward block, each with residual connection and layer norm.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub heads: usize,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub norm1: Affine,
    pub ffn1: Linear,
    pub ffn2: Linear,
    pub norm2: Affine,
}

pub struct LayerOutput {
    pub out: Var,
    /// Attention probabilities per head, `L x L`, rows summing to one.
    pub attention: Vec<Var>,
}

impl EncoderLayer {
    pub fn new<F: Element, R: Rng>(
        store: &mut ParamStore<F>,
        name: &str,
        dim: usize,
        heads: usize,
        inner: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            heads,
            wq: Linear::new(store, &format!("{name}.attn.q"), dim, dim, rng)?,
            // A key bias shifts every logit of a row equally and cannot
            // change the softmax.
            wk: Linear::without_bias(store, &format!("{name}.attn.k"), dim, dim, rng)?,
            wv: Linear::new(store, &format!("{name}.attn.v"), dim, dim, rng)?,
            wo: Linear::new(store, &format!("{name}.attn.o"), dim, dim, rng)?,
            norm1: Affine::new(store, &format!("{name}.norm1"), dim)?,
            ffn1: Linear::new(store, &format!("{name}.ffn1"), dim, inner, rng)?,
            ffn2: Linear::new(store, &format!("{name}.ffn2"), inner, dim, rng)?,
            norm2: Affine::new(store, &format!("{name}.norm2"), dim)?,
        })
    }

    pub fn forward<F: Element>(&self, f: &mut Fwd<F>, x: Var) -> Result<LayerOutput> {
        let dim = f.g.cols(x);
        let dh = dim / self.heads;
        let q = self.wq.forward(f, x)?;
        let k = self.wk.forward(f, x)?;
        let v = self.wv.forward(f, x)?;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let mut ctx = Vec::with_capacity(self.heads);
        let mut attention = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let qh = f.g.slice_cols(q, a, b)?;
            let kh = f.g.slice_cols(k, a, b)?;
            let vh = f.g.slice_cols(v, a, b)?;
            let kt = f.g.transpose(kh)?;
            let logits = f.g.matmul(qh, kt)?;
            let logits = f.g.scale(logits, scale);
            let probs = f.g.softmax(logits);
            attention.push(probs);
            ctx.push(f.g.matmul(probs, vh)?);
        }
        let ctx = if ctx.len() == 1 { ctx[0] } else { f.g.concat_cols(&ctx)? };
        let attn = self.wo.forward(f, ctx)?;
        let attn = f.drop(attn)?;
        let res = f.g.add(x, attn)?;
        let y = self.norm1.layer_norm(f, res)?;

        let hid = self.ffn1.forward(f, y)?;
        let hid = f.g.relu(hid);
        let out = self.ffn2.forward(f, hid)?;
        let out = f.drop(out)?;
        let res = f.g.add(y, out)?;
        let out = self.norm2.layer_norm(f, res)?;
        Ok(LayerOutput { out, attention })
    }
}

/// A stack of encoder layers.
pub fn transformer_encoder<F: Element>(f: &mut Fwd<F>, layers: &[EncoderLayer], mut h: Var) -> Result<Var> {
    for layer in layers {
        h = layer.forward(f, h)?.out;
    }
    Ok(h)
}
