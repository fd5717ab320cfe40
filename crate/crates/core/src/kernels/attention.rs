//! Scaled dot-product attention with projections, shared by the GMHA,
//! temporal and cross-attention kernels. Features are rows: `x` is
//! `items × d` and projections are applied as `x · W`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::D_MAX;
use super::rope::{rope_rows, rope_rows_inverse};
use crate::error::{Error, Result};

/// Query/key/value/output projections (`d × d`) and a per-head distance
/// bias table (`heads × (D_MAX + 1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct GmhaParams {
    pub heads: usize,
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub bias: DMatrix<f64>,
}

impl GmhaParams {
    pub fn zeros(d: usize, heads: usize) -> Result<Self> {
        let p = GmhaParams {
            heads,
            wq: DMatrix::zeros(d, d),
            wk: DMatrix::zeros(d, d),
            wv: DMatrix::zeros(d, d),
            wo: DMatrix::zeros(d, d),
            bias: DMatrix::zeros(heads, D_MAX + 1),
        };
        p.validate()?;
        Ok(p)
    }

    /// Entries drawn from `N(0, scale²)`.
    pub fn random(d: usize, heads: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(d, heads)?;
        for m in [&mut p.wq, &mut p.wk, &mut p.wv, &mut p.wo, &mut p.bias] {
            for v in m.iter_mut() {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.wq.nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.d() / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.wq.nrows();
        if self.heads == 0 || d == 0 || !d.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "width {d} must be a positive multiple of the head count {}",
                self.heads
            )));
        }
        for (name, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if m.shape() != (d, d) {
                return Err(Error::Shape(format!("{name} is {:?}, expected ({d}, {d})", m.shape())));
            }
        }
        if self.bias.shape() != (self.heads, D_MAX + 1) {
            return Err(Error::Shape(format!(
                "bias table is {:?}, expected ({}, {})",
                self.bias.shape(),
                self.heads,
                D_MAX + 1
            )));
        }
        if self.matrices().iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("attention parameters"));
        }
        Ok(())
    }

    pub fn matrices(&self) -> [&DMatrix<f64>; 5] {
        [&self.wq, &self.wk, &self.wv, &self.wo, &self.bias]
    }

    pub fn from_matrices(heads: usize, m: [DMatrix<f64>; 5]) -> Self {
        let [wq, wk, wv, wo, bias] = m;
        GmhaParams {
            heads,
            wq,
            wk,
            wv,
            wo,
            bias,
        }
    }
}

/// Gradients with the same shapes as [`GmhaParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmhaGrads {
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub bias: DMatrix<f64>,
}

impl GmhaGrads {
    pub fn zeros_like(p: &GmhaParams) -> Self {
        let d = p.d();
        GmhaGrads {
            wq: DMatrix::zeros(d, d),
            wk: DMatrix::zeros(d, d),
            wv: DMatrix::zeros(d, d),
            wo: DMatrix::zeros(d, d),
            bias: DMatrix::zeros(p.heads, D_MAX + 1),
        }
    }

    pub fn accumulate(&mut self, other: &GmhaGrads) {
        self.wq += &other.wq;
        self.wk += &other.wk;
        self.wv += &other.wv;
        self.wo += &other.wo;
        self.bias += &other.bias;
    }

    pub fn matrices(&self) -> [&DMatrix<f64>; 5] {
        [&self.wq, &self.wk, &self.wv, &self.wo, &self.bias]
    }
}

/// Softmax attention for one head. Forbidden pairs get zero probability;
/// a row with no allowed pair is all zeros.
pub(crate) fn attend(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    allowed: &dyn Fn(usize, usize) -> bool,
    bias: &dyn Fn(usize, usize) -> f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (q.nrows(), k.nrows());
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let logits = q * k.transpose() * scale;
    let mut p = DMatrix::zeros(n, m);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..m {
            if allowed(i, j) {
                max = max.max(logits[(i, j)] + bias(i, j));
            }
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for j in 0..m {
            if allowed(i, j) {
                let e = (logits[(i, j)] + bias(i, j) - max).exp();
                p[(i, j)] = e;
                sum += e;
            }
        }
        for j in 0..m {
            p[(i, j)] /= sum;
        }
    }
    (&p * v, p)
}

pub(crate) struct HeadGrads {
    pub dq: DMatrix<f64>,
    pub dk: DMatrix<f64>,
    pub dv: DMatrix<f64>,
    /// Gradient with respect to the pre-softmax logits (bias included).
    pub ds: DMatrix<f64>,
}

pub(crate) fn attend_backward(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    p: &DMatrix<f64>,
    d_out: &DMatrix<f64>,
) -> HeadGrads {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let dv = p.transpose() * d_out;
    let dp = d_out * v.transpose();
    let mut ds = DMatrix::zeros(p.nrows(), p.ncols());
    for i in 0..p.nrows() {
        let dot: f64 = (0..p.ncols()).map(|j| p[(i, j)] * dp[(i, j)]).sum();
        for j in 0..p.ncols() {
            ds[(i, j)] = p[(i, j)] * (dp[(i, j)] - dot);
        }
    }
    let dq = &ds * k * scale;
    let dk = ds.transpose() * q * scale;
    HeadGrads { dq, dk, dv, ds }
}

/// What a projected attention call needs besides its inputs.
pub(crate) struct Pattern<'a> {
    pub allowed: &'a (dyn Fn(usize, usize) -> bool + Sync),
    /// Distance bucket per pair; `None` disables the bias table.
    pub bucket: Option<&'a (dyn Fn(usize, usize) -> usize + Sync)>,
    /// RoPE base; queries and keys are rotated by their row index.
    pub rope_base: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ProjCache {
    xq: DMatrix<f64>,
    xkv: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    probs: Vec<DMatrix<f64>>,
    concat: DMatrix<f64>,
}

impl ProjCache {
    pub fn probabilities(&self) -> &[DMatrix<f64>] {
        &self.probs
    }

    pub fn query_shape(&self) -> (usize, usize) {
        self.xq.shape()
    }
}

pub(crate) fn check_input(x: &DMatrix<f64>, d: usize, what: &'static str) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::Shape(format!("{what} has width {}, expected {d}", x.ncols())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// `y = xq + concat_h(attention_h) · Wo`.
pub(crate) fn projected_forward(
    params: &GmhaParams,
    xq: &DMatrix<f64>,
    xkv: &DMatrix<f64>,
    pattern: &Pattern<'_>,
) -> (DMatrix<f64>, ProjCache) {
    let (h, dh) = (params.heads, params.head_dim());
    let mut q = xq * &params.wq;
    let mut k = xkv * &params.wk;
    let v = xkv * &params.wv;
    if let Some(base) = pattern.rope_base {
        q = rope_rows(&q, h, base);
        k = rope_rows(&k, h, base);
    }
    let mut concat = DMatrix::zeros(xq.nrows(), params.d());
    let mut probs = Vec::with_capacity(h);
    for head in 0..h {
        let qh = q.columns(head * dh, dh).into_owned();
        let kh = k.columns(head * dh, dh).into_owned();
        let vh = v.columns(head * dh, dh).into_owned();
        let bias = |i: usize, j: usize| match pattern.bucket {
            Some(b) => params.bias[(head, b(i, j))],
            None => 0.0,
        };
        let (out, p) = attend(&qh, &kh, &vh, pattern.allowed, &bias);
        concat.columns_mut(head * dh, dh).copy_from(&out);
        probs.push(p);
    }
    let y = xq + &concat * &params.wo;
    let cache = ProjCache {
        xq: xq.clone(),
        xkv: xkv.clone(),
        q,
        k,
        v,
        probs,
        concat,
    };
    (y, cache)
}

/// Returns `(d xq, d xkv, parameter gradients)`.
pub(crate) fn projected_backward(
    params: &GmhaParams,
    cache: &ProjCache,
    dy: &DMatrix<f64>,
    pattern: &Pattern<'_>,
) -> (DMatrix<f64>, DMatrix<f64>, GmhaGrads) {
    let (h, dh) = (params.heads, params.head_dim());
    let mut grads = GmhaGrads::zeros_like(params);
    grads.wo = cache.concat.transpose() * dy;
    let dconcat = dy * params.wo.transpose();
    let mut dq = DMatrix::zeros(cache.q.nrows(), params.d());
    let mut dk = DMatrix::zeros(cache.k.nrows(), params.d());
    let mut dv = DMatrix::zeros(cache.v.nrows(), params.d());
    for head in 0..h {
        let qh = cache.q.columns(head * dh, dh).into_owned();
        let kh = cache.k.columns(head * dh, dh).into_owned();
        let vh = cache.v.columns(head * dh, dh).into_owned();
        let dout = dconcat.columns(head * dh, dh).into_owned();
        let g = attend_backward(&qh, &kh, &vh, &cache.probs[head], &dout);
        dq.columns_mut(head * dh, dh).copy_from(&g.dq);
        dk.columns_mut(head * dh, dh).copy_from(&g.dk);
        dv.columns_mut(head * dh, dh).copy_from(&g.dv);
        if let Some(bucket) = pattern.bucket {
            for i in 0..g.ds.nrows() {
                for j in 0..g.ds.ncols() {
                    if (pattern.allowed)(i, j) {
                        grads.bias[(head, bucket(i, j))] += g.ds[(i, j)];
                    }
                }
            }
        }
    }
    if let Some(base) = pattern.rope_base {
        dq = rope_rows_inverse(&dq, h, base);
        dk = rope_rows_inverse(&dk, h, base);
    }
    grads.wq = cache.xq.transpose() * &dq;
    grads.wk = cache.xkv.transpose() * &dk;
    grads.wv = cache.xkv.transpose() * &dv;
    let dxq = dy + &dq * params.wq.transpose();
    let dxkv = &dk * params.wk.transpose() + &dv * params.wv.transpose();
    (dxq, dxkv, grads)
}
