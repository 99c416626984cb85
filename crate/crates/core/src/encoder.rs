//! Compact document encoder: mean-pooled token embeddings, one tanh hidden layer and a
//! linear projection whose output is L2-normalized. The projection output `z` before
//! normalization also serves as the logits of the consistency head.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 128;
pub const DEFAULT_LATENT_DIM: usize = 20;

const MIN_PROJECTION_NORM: f64 = 1e-12;
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Dims {
    pub fn new(vocab: usize) -> Self {
        Self {
            vocab,
            embed: DEFAULT_EMBED_DIM,
            hidden: DEFAULT_HIDDEN_DIM,
            latent: DEFAULT_LATENT_DIM,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.embed == 0 || self.hidden == 0 || self.latent == 0 {
            return Err(Error::InvalidDims(format!(
                "{self:?}: every dimension must be >= 1"
            )));
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = selfᵀ x + bias`, where `x` has `rows` entries.
    fn transpose_mul_add(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        let mut out = bias.to_vec();
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * xr;
            }
        }
        out
    }

    /// `self y`, where `y` has `cols` entries.
    fn mul(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(y).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// `self += a bᵀ`.
    fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            for (m, bv) in self.row_mut(r).iter_mut().zip(b) {
                *m += ar * bv;
            }
        }
    }
}

/// Shared layout of parameters and gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensors {
    /// `vocab × embed`
    pub embedding: Matrix,
    /// `embed × hidden`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `hidden × latent`; together with `b2` this is the consistency head.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Tensors {
    fn zeros(dims: Dims) -> Self {
        Self {
            embedding: Matrix::zeros(dims.vocab, dims.embed),
            w1: Matrix::zeros(dims.embed, dims.hidden),
            b1: vec![0.0; dims.hidden],
            w2: Matrix::zeros(dims.hidden, dims.latent),
            b2: vec![0.0; dims.latent],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab: self.embedding.rows,
            embed: self.embedding.cols,
            hidden: self.w1.cols,
            latent: self.w2.cols,
        }
    }

    pub fn slices(&self) -> [&[f64]; 5] {
        [
            &self.embedding.data,
            &self.w1.data,
            &self.b1,
            &self.w2.data,
            &self.b2,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.embedding.data,
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn shape_matches(&self, other: &Tensors) -> bool {
        self.dims() == other.dims()
            && self.b1.len() == other.b1.len()
            && self.b2.len() == other.b2.len()
    }

    /// Flat view in a fixed order: embedding, w1, b1, w2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for s in self.slices() {
            if index < s.len() {
                return s[index];
            }
            index -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for s in self.slices_mut() {
            if index < s.len() {
                s[index] = value;
                return;
            }
            index -= s.len();
        }
        panic!("flat index out of range");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub tensors: Tensors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Tensors,
}

impl Gradients {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            tensors: Tensors::zeros(dims),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if !self.tensors.shape_matches(&other.tensors) {
            return Err(Error::ShapeMismatch("gradient accumulation".into()));
        }
        for (a, b) in self
            .tensors
            .slices_mut()
            .into_iter()
            .zip(other.tensors.slices())
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(seed: u64, dims: Dims) -> Result<EncoderParams> {
    dims.validate()?;
    let mut rng = seeding::stream(seed, "encoder-init", 0);
    let embedding = Matrix::glorot(dims.vocab, dims.embed, &mut rng);
    let w1 = Matrix::glorot(dims.embed, dims.hidden, &mut rng);
    let w2 = Matrix::glorot(dims.hidden, dims.latent, &mut rng);
    Ok(EncoderParams {
        tensors: Tensors {
            embedding,
            w1,
            b1: vec![0.0; dims.hidden],
            w2,
            b2: vec![0.0; dims.latent],
        },
    })
}

impl EncoderParams {
    pub fn dims(&self) -> Dims {
        self.tensors.dims()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub tokens: Vec<u32>,
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Pre-normalization projection (consistency-head logits).
    pub logits: Vec<f64>,
    pub norm: f64,
    pub latent: Vec<f64>,
}

/// Unit-norm document representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode(params: &EncoderParams, tokens: &[u32]) -> Result<(LatentVector, ForwardCache)> {
    let cache = forward(params, tokens)?;
    Ok((LatentVector(cache.latent.clone()), cache))
}

/// Pre-normalization logits only.
pub fn logits(params: &EncoderParams, tokens: &[u32]) -> Result<Vec<f64>> {
    let (_, _, z) = project(params, tokens)?;
    Ok(z)
}

fn project(params: &EncoderParams, tokens: &[u32]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if tokens.is_empty() {
        return Err(Error::EmptyTokens);
    }
    let t = &params.tensors;
    let mut pooled = vec![0.0; t.embedding.cols];
    for &tok in tokens {
        let tok = tok as usize;
        if tok >= t.embedding.rows {
            return Err(Error::ShapeMismatch(format!(
                "token index {tok} outside vocabulary of {}",
                t.embedding.rows
            )));
        }
        for (p, e) in pooled.iter_mut().zip(t.embedding.row(tok)) {
            *p += e;
        }
    }
    let inv = 1.0 / tokens.len() as f64;
    pooled.iter_mut().for_each(|p| *p *= inv);

    let mut hidden = t.w1.transpose_mul_add(&pooled, &t.b1);
    hidden.iter_mut().for_each(|h| *h = h.tanh());
    let z = t.w2.transpose_mul_add(&hidden, &t.b2);
    Ok((pooled, hidden, z))
}

pub fn forward(params: &EncoderParams, tokens: &[u32]) -> Result<ForwardCache> {
    let (pooled, hidden, logits) = project(params, tokens)?;
    let norm = logits.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm.is_nan() || norm < MIN_PROJECTION_NORM {
        return Err(Error::DegenerateProjection(norm));
    }
    let latent = logits.iter().map(|v| v / norm).collect();
    Ok(ForwardCache {
        tokens: tokens.to_vec(),
        pooled,
        hidden,
        logits,
        norm,
        latent,
    })
}

/// Gradients of a scalar loss with respect to every parameter, given the upstream
/// gradient on the normalized output and optionally a direct gradient on the logits.
pub fn encode_backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_latent: &[f64],
    grad_logits: Option<&[f64]>,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros(params.dims());
    accumulate_backward(params, cache, grad_latent, grad_logits, &mut grads)?;
    Ok(grads)
}

/// As [`encode_backward`], adding into `grads`.
pub fn accumulate_backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_latent: &[f64],
    grad_logits: Option<&[f64]>,
    grads: &mut Gradients,
) -> Result<()> {
    let t = &params.tensors;
    let dims = t.dims();
    if grad_latent.len() != dims.latent
        || cache.latent.len() != dims.latent
        || cache.hidden.len() != dims.hidden
        || cache.pooled.len() != dims.embed
        || grad_logits.is_some_and(|g| g.len() != dims.latent)
        || grads.tensors.dims() != dims
    {
        return Err(Error::ShapeMismatch("encode_backward".into()));
    }

    // Normalization Jacobian: (I - v vᵀ) / |z|.
    let v = &cache.latent;
    let radial: f64 = v.iter().zip(grad_latent).map(|(a, b)| a * b).sum();
    let mut gz: Vec<f64> = grad_latent
        .iter()
        .zip(v)
        .map(|(g, vi)| (g - radial * vi) / cache.norm)
        .collect();
    if let Some(direct) = grad_logits {
        gz.iter_mut().zip(direct).for_each(|(a, b)| *a += b);
    }

    let g = &mut grads.tensors;
    g.w2.add_outer(&cache.hidden, &gz);
    g.b2.iter_mut().zip(&gz).for_each(|(a, b)| *a += b);

    let gh = t.w2.mul(&gz);
    let ga: Vec<f64> = gh
        .iter()
        .zip(&cache.hidden)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    g.w1.add_outer(&cache.pooled, &ga);
    g.b1.iter_mut().zip(&ga).for_each(|(a, b)| *a += b);

    let inv = 1.0 / cache.tokens.len() as f64;
    let gp: Vec<f64> = t.w1.mul(&ga).into_iter().map(|x| x * inv).collect();
    for &tok in &cache.tokens {
        for (e, d) in g.embedding.row_mut(tok as usize).iter_mut().zip(&gp) {
            *e += d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Tensors,
    second: Tensors,
}

impl OptimizerState {
    pub fn new(dims: Dims, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Tensors::zeros(dims),
            second: Tensors::zeros(dims),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    if !params.tensors.shape_matches(&grads.tensors) || !params.tensors.shape_matches(&state.first)
    {
        return Err(Error::ShapeMismatch("adam_step".into()));
    }
    if !grads.tensors.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let c1 = 1.0 - beta1.powf(state.step as f64);
    let c2 = 1.0 - beta2.powf(state.step as f64);

    let params_s = params.tensors.slices_mut();
    let grads_s = grads.tensors.slices();
    let m_s = state.first.slices_mut();
    let v_s = state.second.slices_mut();
    for (((p, g), m), v) in params_s.into_iter().zip(grads_s).zip(m_s).zip(v_s) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Serialized parameters with enough metadata to rebuild the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: Dims,
    pub seed: u64,
    /// Epoch the parameters were taken from; 0 for the initialization.
    pub epoch: usize,
    pub embedding: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &EncoderParams, seed: u64, epoch: usize) -> Self {
        let t = &params.tensors;
        Self {
            version: CHECKPOINT_VERSION,
            dims: t.dims(),
            seed,
            epoch,
            embedding: t.embedding.data.clone(),
            w1: t.w1.data.clone(),
            b1: t.b1.clone(),
            w2: t.w2.data.clone(),
            b2: t.b2.clone(),
        }
    }

    pub fn params(&self) -> Result<EncoderParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let d = self.dims;
        d.validate()?;
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::ShapeMismatch(format!(
                    "checkpoint {name}: {got} != {want}"
                )))
            }
        };
        check("embedding", self.embedding.len(), d.vocab * d.embed)?;
        check("w1", self.w1.len(), d.embed * d.hidden)?;
        check("b1", self.b1.len(), d.hidden)?;
        check("w2", self.w2.len(), d.hidden * d.latent)?;
        check("b2", self.b2.len(), d.latent)?;
        let m = |rows, cols, data: &Vec<f64>| Matrix {
            rows,
            cols,
            data: data.clone(),
        };
        let params = EncoderParams {
            tensors: Tensors {
                embedding: m(d.vocab, d.embed, &self.embedding),
                w1: m(d.embed, d.hidden, &self.w1),
                b1: self.b1.clone(),
                w2: m(d.hidden, d.latent, &self.w2),
                b2: self.b2.clone(),
            },
        };
        if !params.tensors.is_finite() {
            return Err(Error::NonFinite("checkpoint"));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}
