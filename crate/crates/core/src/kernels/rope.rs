//! Rotary position embedding and windowed per-joint temporal attention.

use nalgebra::DMatrix;

use super::attention::{check_input, projected_backward, projected_forward, GmhaGrads, GmhaParams, Pattern, ProjCache};
use crate::error::{Error, Result};

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;
pub const DEFAULT_WINDOW: usize = 5;

fn rotate_pairs(v: &mut [f64], position: f64, base: f64, sign: f64) {
    let d = v.len();
    for i in 0..d / 2 {
        let theta = sign * position * base.powf(-2.0 * i as f64 / d as f64);
        let (s, c) = theta.sin_cos();
        let (a, b) = (v[2 * i], v[2 * i + 1]);
        v[2 * i] = a * c - b * s;
        v[2 * i + 1] = a * s + b * c;
    }
}

/// Rotates consecutive pairs `(v[2i], v[2i+1])` by `position · base^(-2i/d)`.
pub fn rope(v: &[f64], position: f64, base: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    rotate_pairs(&mut out, position, base, 1.0);
    out
}

fn rope_rows_signed(m: &DMatrix<f64>, heads: usize, base: f64, sign: f64) -> DMatrix<f64> {
    let dh = m.ncols() / heads;
    let mut out = m.clone();
    for r in 0..m.nrows() {
        for h in 0..heads {
            let mut chunk: Vec<f64> = (0..dh).map(|c| m[(r, h * dh + c)]).collect();
            rotate_pairs(&mut chunk, r as f64, base, sign);
            for (c, v) in chunk.into_iter().enumerate() {
                out[(r, h * dh + c)] = v;
            }
        }
    }
    out
}

/// Row `r` is rotated as position `r`, head by head.
pub(crate) fn rope_rows(m: &DMatrix<f64>, heads: usize, base: f64) -> DMatrix<f64> {
    rope_rows_signed(m, heads, base, 1.0)
}

pub(crate) fn rope_rows_inverse(m: &DMatrix<f64>, heads: usize, base: f64) -> DMatrix<f64> {
    rope_rows_signed(m, heads, base, -1.0)
}

#[derive(Debug, Clone)]
pub struct TemporalCache {
    window: usize,
    base: f64,
    inner: ProjCache,
}

impl TemporalCache {
    /// Per-head attention probabilities, `T × T`.
    pub fn probabilities(&self) -> &[DMatrix<f64>] {
        self.inner.probabilities()
    }
}

fn check_window(params: &GmhaParams, window: usize, base: f64) -> Result<()> {
    params.validate()?;
    if window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("window {window} must be odd")));
    }
    if !params.d().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("width {} must be even", params.d())));
    }
    if !params.head_dim().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "head width {} must be even",
            params.head_dim()
        )));
    }
    if !(base.is_finite() && base > 0.0) {
        return Err(Error::InvalidArgument(format!("rope base {base} must be positive")));
    }
    Ok(())
}

/// Self-attention of one joint's `T × d` feature sequence: frame `m` sees
/// frames within `(window - 1) / 2`, queries and keys carry RoPE, and the
/// result is added to the input. The bias table is not used.
pub fn rope_temporal_forward(
    x: &DMatrix<f64>,
    params: &GmhaParams,
    window: usize,
    base: f64,
) -> Result<(DMatrix<f64>, TemporalCache)> {
    check_window(params, window, base)?;
    check_input(x, params.d(), "temporal attention input")?;
    let half = window / 2;
    let allowed = move |m: usize, n: usize| m.abs_diff(n) <= half;
    let pattern = Pattern {
        allowed: &allowed,
        bucket: None,
        rope_base: Some(base),
    };
    let (y, inner) = projected_forward(params, x, x, &pattern);
    Ok((y, TemporalCache { window, base, inner }))
}

pub fn rope_temporal_backward(
    params: &GmhaParams,
    cache: &TemporalCache,
    upstream: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, GmhaGrads)> {
    if upstream.shape() != cache.inner.query_shape() {
        return Err(Error::Shape("upstream gradient does not match the forward pass".into()));
    }
    let half = cache.window / 2;
    let allowed = move |m: usize, n: usize| m.abs_diff(n) <= half;
    let pattern = Pattern {
        allowed: &allowed,
        bucket: None,
        rope_base: Some(cache.base),
    };
    let (dxq, dxkv, grads) = projected_backward(params, &cache.inner, upstream, &pattern);
    Ok((dxq + dxkv, grads))
}
