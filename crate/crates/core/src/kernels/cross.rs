//! Cross-attention from pose queries to reference-frame joint features.

use nalgebra::DMatrix;

use super::attention::{check_input, projected_backward, projected_forward, GmhaGrads, GmhaParams, Pattern, ProjCache};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CrossCache {
    per_joint: bool,
    inner: ProjCache,
}

impl CrossCache {
    pub fn probabilities(&self) -> &[DMatrix<f64>] {
        self.inner.probabilities()
    }
}

fn allowed_fn(per_joint: bool) -> impl Fn(usize, usize) -> bool + Sync {
    move |i, j| !per_joint || i == j
}

/// With `per_joint`, query joint `j` attends only to reference joint `j`;
/// otherwise to every reference joint. The bias table is not used.
pub fn reference_cross_attention(
    queries: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    params: &GmhaParams,
    per_joint: bool,
) -> Result<(DMatrix<f64>, CrossCache)> {
    params.validate()?;
    check_input(queries, params.d(), "cross-attention queries")?;
    check_input(reference, params.d(), "reference features")?;
    if per_joint && queries.nrows() != reference.nrows() {
        return Err(Error::Shape(format!(
            "{} queries but {} reference joints",
            queries.nrows(),
            reference.nrows()
        )));
    }
    let allowed = allowed_fn(per_joint);
    let pattern = Pattern {
        allowed: &allowed,
        bucket: None,
        rope_base: None,
    };
    let (y, inner) = projected_forward(params, queries, reference, &pattern);
    Ok((y, CrossCache { per_joint, inner }))
}

/// Returns gradients for the queries, the reference features and the
/// parameters.
pub fn reference_cross_attention_backward(
    params: &GmhaParams,
    cache: &CrossCache,
    upstream: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, GmhaGrads)> {
    if upstream.shape() != cache.inner.query_shape() {
        return Err(Error::Shape("upstream gradient does not match the forward pass".into()));
    }
    let allowed = allowed_fn(cache.per_joint);
    let pattern = Pattern {
        allowed: &allowed,
        bucket: None,
        rope_base: None,
    };
    Ok(projected_backward(params, &cache.inner, upstream, &pattern))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::stream;

    #[test]
    fn identity_weights_double_single_joint() {
        let mut params = GmhaParams::zeros(3, 1).unwrap();
        params.wv = DMatrix::identity(3, 3);
        params.wo = DMatrix::identity(3, 3);
        let x = DMatrix::from_row_slice(1, 3, &[0.5, -1.0, 2.0]);
        let (y, _) = reference_cross_attention(&x, &x, &params, true).unwrap();
        assert!((y - &x * 2.0).abs().max() < 1e-15);
    }

    #[test]
    fn zero_value_projection_is_residual() {
        let mut rng = stream(2, "cross-zero");
        let mut params = GmhaParams::random(4, 2, 1.0, &mut rng).unwrap();
        params.wv.fill(0.0);
        let q = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        let r = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64);
        let (y, _) = reference_cross_attention(&q, &r, &params, false).unwrap();
        assert_eq!(y, q);
    }

    #[test]
    fn per_joint_is_diagonal() {
        let mut rng = stream(4, "cross-diag");
        let params = GmhaParams::random(4, 2, 1.0, &mut rng).unwrap();
        let q = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64 * 0.1);
        let r = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64 * 0.2);
        let (_, cache) = reference_cross_attention(&q, &r, &params, true).unwrap();
        for p in cache.probabilities() {
            assert_eq!(*p, DMatrix::identity(3, 3));
        }
        assert!(reference_cross_attention(&q, &r.rows(0, 2).into_owned(), &params, true).is_err());
    }
}
