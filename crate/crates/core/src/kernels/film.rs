//! FiLM conditioning and the sinusoidal coordinate embedding.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_BANDS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct FilmParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FilmParams {
    pub fn identity(d: usize) -> Self {
        FilmParams {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.gamma.len() != d || self.beta.len() != d {
            return Err(Error::Shape(format!(
                "FiLM parameters have lengths {}/{}, input has {d}",
                self.gamma.len(),
                self.beta.len()
            )));
        }
        if self.gamma.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FiLM parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilmGrads {
    pub x: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// `out[i] = γ[i] · x[i] + β[i]`
pub fn film_forward(x: &[f64], params: &FilmParams) -> Result<Vec<f64>> {
    params.check(x.len())?;
    Ok(x.iter()
        .zip(&params.gamma)
        .zip(&params.beta)
        .map(|((x, g), b)| g * x + b)
        .collect())
}

pub fn film_backward(x: &[f64], params: &FilmParams, upstream: &[f64]) -> Result<FilmGrads> {
    params.check(x.len())?;
    if upstream.len() != x.len() {
        return Err(Error::Shape("upstream gradient length differs from input".into()));
    }
    Ok(FilmGrads {
        x: upstream.iter().zip(&params.gamma).map(|(u, g)| u * g).collect(),
        gamma: upstream.iter().zip(x).map(|(u, x)| u * x).collect(),
        beta: upstream.to_vec(),
    })
}

/// For each coordinate and band `k`: `sin(2^k π c)`, `cos(2^k π c)`.
pub fn frequency_positional_embedding(p: [f64; 3], bands: usize) -> Result<Vec<f64>> {
    if bands == 0 {
        return Err(Error::InvalidArgument("bands must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(6 * bands);
    for c in p {
        for k in 0..bands {
            let (s, co) = ((1u64 << k) as f64 * PI * c).sin_cos();
            out.push(s);
            out.push(co);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_zero_gamma() {
        let x = [1.0, -2.0, 3.5];
        assert_eq!(film_forward(&x, &FilmParams::identity(3)).unwrap(), x.to_vec());
        let p = FilmParams {
            gamma: vec![0.0; 3],
            beta: vec![4.0, 5.0, 6.0],
        };
        assert_eq!(film_forward(&x, &p).unwrap(), p.beta);
        assert!(film_forward(&x[..2], &p).is_err());
    }

    #[test]
    fn embedding_examples() {
        let e = frequency_positional_embedding([0.0; 3], 4).unwrap();
        assert_eq!(e.len(), 24);
        for pair in e.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
        let e = frequency_positional_embedding([0.5, 0.0, 0.0], 1).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
        assert_eq!(frequency_positional_embedding([0.1, 0.2, 0.3], DEFAULT_BANDS).unwrap().len(), 36);
        assert!(frequency_positional_embedding([0.0; 3], 0).is_err());
    }
}
