//! Graph-biased multi-head attention over the joints of each frame.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::attention::{check_input, projected_backward, projected_forward, GmhaGrads, GmhaParams, Pattern, ProjCache};
use super::graph::AttentionMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GmhaCache {
    frames: Vec<ProjCache>,
}

impl GmhaCache {
    /// Per-head `J × J` probabilities of frame `t`.
    pub fn probabilities(&self, t: usize) -> &[DMatrix<f64>] {
        self.frames[t].probabilities()
    }
}

fn pattern(mask: &AttentionMask) -> (impl Fn(usize, usize) -> bool + Sync + '_, impl Fn(usize, usize) -> usize + Sync + '_) {
    (move |i, j| mask.allowed(i, j), move |i, j| mask.bucket(i, j))
}

/// `x[t]` is the `J × d` feature matrix of frame `t`. Frames are independent
/// and run in parallel.
pub fn gmha_forward(
    x: &[DMatrix<f64>],
    params: &GmhaParams,
    mask: &AttentionMask,
) -> Result<(Vec<DMatrix<f64>>, GmhaCache)> {
    params.validate()?;
    for f in x {
        if f.nrows() != mask.joints() {
            return Err(Error::Shape(format!(
                "frame has {} joints, mask has {}",
                f.nrows(),
                mask.joints()
            )));
        }
        check_input(f, params.d(), "gmha input")?;
    }
    let (allowed, bucket) = pattern(mask);
    let pat = Pattern {
        allowed: &allowed,
        bucket: Some(&bucket),
        rope_base: None,
    };
    let (ys, caches): (Vec<_>, Vec<_>) = x
        .par_iter()
        .map(|f| projected_forward(params, f, f, &pat))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    Ok((ys, GmhaCache { frames: caches }))
}

/// Parameter gradients are summed over frames in frame order.
pub fn gmha_backward(
    params: &GmhaParams,
    mask: &AttentionMask,
    cache: &GmhaCache,
    upstream: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, GmhaGrads)> {
    if upstream.len() != cache.frames.len()
        || upstream
            .iter()
            .zip(&cache.frames)
            .any(|(g, c)| g.shape() != c.query_shape())
        || cache.frames.iter().any(|c| c.query_shape().0 != mask.joints())
    {
        return Err(Error::Shape("upstream gradient does not match the forward pass".into()));
    }
    let (allowed, bucket) = pattern(mask);
    let pat = Pattern {
        allowed: &allowed,
        bucket: Some(&bucket),
        rope_base: None,
    };
    let per_frame: Vec<_> = cache
        .frames
        .par_iter()
        .zip(upstream.par_iter())
        .map(|(c, g)| projected_backward(params, c, g, &pat))
        .collect();
    let mut total = GmhaGrads::zeros_like(params);
    let mut dx = Vec::with_capacity(per_frame.len());
    for (dxq, dxkv, g) in per_frame {
        total.accumulate(&g);
        dx.push(dxq + dxkv);
    }
    Ok((dx, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::graph::{build_gl_mask, build_graph_relations, D_MAX};
    use crate::skeleton::Skeleton;
    use crate::synth::stream;

    fn chain3() -> Skeleton {
        Skeleton::new(
            vec![None, Some(0), Some(1)],
            vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            vec!["a".into(), "b".into(), "c".into()],
        )
    }

    #[test]
    fn zero_weights_are_identity() {
        let r = build_graph_relations(&chain3()).unwrap();
        let mask = build_gl_mask(&r, 0, &[true; 3]).unwrap();
        let params = GmhaParams::zeros(4, 2).unwrap();
        let x = vec![DMatrix::from_fn(3, 4, |i, j| (i as f64) - 0.5 * j as f64)];
        let (y, _) = gmha_forward(&x, &params, &mask).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn single_joint_is_value_then_output() {
        let mut rng = stream(5, "gmha-j1");
        let params = GmhaParams::random(3, 1, 1.0, &mut rng).unwrap();
        let mask = AttentionMask::full(1, 0);
        let x = DMatrix::from_row_slice(1, 3, &[0.2, -0.4, 1.1]);
        let (y, _) = gmha_forward(std::slice::from_ref(&x), &params, &mask).unwrap();
        let expected = &x + &x * &params.wv * &params.wo;
        assert!((&y[0] - expected).abs().max() < 1e-14);
    }

    #[test]
    fn chain_matches_scalar_arithmetic() {
        let d = 4;
        let r = build_graph_relations(&chain3()).unwrap();
        let mask = build_gl_mask(&r, 1, &[true; 3]).unwrap();
        let w = |s: f64| DMatrix::from_fn(d, d, |i, j| s * ((i * d + j) as f64 * 0.37).sin());
        let mut params = GmhaParams::from_matrices(
            1,
            [w(0.5), w(-0.3), w(0.7), w(0.2), DMatrix::from_fn(1, D_MAX + 1, |_, b| 0.1 * b as f64)],
        );
        params.bias[(0, 2)] = -0.6;
        let x = DMatrix::from_fn(3, d, |i, j| ((i + 2 * j) as f64 * 0.41).cos());
        let (y, _) = gmha_forward(std::slice::from_ref(&x), &params, &mask).unwrap();

        let proj = |m: &DMatrix<f64>, i: usize, c: usize| (0..d).map(|k| x[(i, k)] * m[(k, c)]).sum::<f64>();
        for i in 0..3 {
            let mut logits = [0.0; 3];
            for (j, l) in logits.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..d {
                    s += proj(&params.wq, i, c) * proj(&params.wk, j, c);
                }
                *l = s / 2.0 + params.bias[(0, mask.bucket(i, j))];
            }
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for out in 0..d {
                let mut acc = x[(i, out)];
                for c in 0..d {
                    let mut head = 0.0;
                    for j in 0..3 {
                        head += e[j] / z * proj(&params.wv, j, c);
                    }
                    acc += head * params.wo[(c, out)];
                }
                assert!((y[0][(i, out)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padded_rows_pass_through_and_are_ignored() {
        let r = build_graph_relations(&chain3()).unwrap();
        let mask = build_gl_mask(&r, 1, &[true, true, false]).unwrap();
        let mut rng = stream(8, "gmha-pad");
        let params = GmhaParams::random(4, 2, 0.8, &mut rng).unwrap();
        let x = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let mut x2 = x.clone();
        x2.row_mut(2).fill(42.0);
        let (y, _) = gmha_forward(std::slice::from_ref(&x), &params, &mask).unwrap();
        let (y2, _) = gmha_forward(&[x2.clone()], &params, &mask).unwrap();
        assert_eq!(y[0].row(2), x.row(2));
        assert_eq!(y[0].rows(0, 2), y2[0].rows(0, 2));
    }

    #[test]
    fn zero_upstream_and_dead_buckets() {
        let r = build_graph_relations(&chain3()).unwrap();
        let mask = build_gl_mask(&r, 1, &[true; 3]).unwrap();
        let mut rng = stream(9, "gmha-zero");
        let params = GmhaParams::random(4, 2, 0.8, &mut rng).unwrap();
        let x = vec![DMatrix::from_fn(3, 4, |i, j| (i * j) as f64 * 0.1); 2];
        let (_, cache) = gmha_forward(&x, &params, &mask).unwrap();
        let (dx, g) = gmha_backward(&params, &mask, &cache, &[DMatrix::zeros(3, 4), DMatrix::zeros(3, 4)]).unwrap();
        assert!(dx.iter().all(|m| m.iter().all(|v| *v == 0.0)));
        assert!(g.matrices().iter().all(|m| m.iter().all(|v| *v == 0.0)));

        let up = vec![DMatrix::from_element(3, 4, 1.0); 2];
        let (_, g) = gmha_backward(&params, &mask, &cache, &up).unwrap();
        for b in 3..=D_MAX {
            assert_eq!(g.bias[(0, b)], 0.0);
            assert_eq!(g.bias[(1, b)], 0.0);
        }
        assert!(gmha_backward(&params, &mask, &cache, &up[..1]).is_err());
    }
}
