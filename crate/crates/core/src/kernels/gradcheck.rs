//! Central finite-difference checks of the analytic backward passes.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::attention::GmhaParams;
use super::cross::{reference_cross_attention, reference_cross_attention_backward};
use super::film::{film_backward, film_forward, FilmParams};
use super::gmha::{gmha_backward, gmha_forward};
use super::graph::{build_gl_mask, build_graph_relations};
use super::rope::{rope_temporal_backward, rope_temporal_forward, DEFAULT_ROPE_BASE};
use crate::error::{Error, Result};
use crate::skeleton::Skeleton;
use crate::synth::stream;

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_SEEDS: u64 = 50;

/// `|a - n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `f` around `theta`.
pub fn check_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(theta.len(), analytic.len());
    let mut work = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        work[i] = theta[i] + FD_STEP;
        let plus = f(&work);
        work[i] = theta[i] - FD_STEP;
        let minus = f(&work);
        work[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gmha,
    Film,
    Rope,
    Cross,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [Kernel::Gmha, Kernel::Film, Kernel::Rope, Kernel::Cross];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gmha => "gmha",
            Kernel::Film => "film",
            Kernel::Rope => "rope",
            Kernel::Cross => "cross",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Kernel::Film => 1e-6,
            _ => 1e-4,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown kernel '{s}' (expected gmha, film, rope or cross)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub kernel: Kernel,
    pub seeds: u64,
    pub entries: usize,
    pub max_rel_error: f64,
    pub worst_seed: u64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.kernel.tolerance()
    }

    pub fn to_text(&self) -> String {
        format!(
            "kernel: {}\nseeds: {}\nentries: {}\nmax_rel_error: {:.3e}\nworst_seed: {}\ntolerance: {:.0e}\nstatus: {}\n",
            self.kernel,
            self.seeds,
            self.entries,
            self.max_rel_error,
            self.worst_seed,
            self.kernel.tolerance(),
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn flatten(ms: &[&DMatrix<f64>]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.iter().copied()).collect()
}

fn unflatten(theta: &[f64], shapes: &[(usize, usize)]) -> Vec<DMatrix<f64>> {
    let mut at = 0;
    shapes
        .iter()
        .map(|&(r, c)| {
            let m = DMatrix::from_column_slice(r, c, &theta[at..at + r * c]);
            at += r * c;
            m
        })
        .collect()
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Random width/head pair; `even_heads` forces an even per-head width.
fn width_and_heads(rng: &mut ChaCha8Rng, max_d: usize, even_heads: bool) -> (usize, usize) {
    loop {
        let d = rng.random_range(1..=max_d / 2) * 2;
        let heads: Vec<usize> = (1..=d)
            .filter(|h| d % h == 0 && (!even_heads || (d / h) % 2 == 0))
            .collect();
        if !heads.is_empty() {
            return (d, heads[rng.random_range(0..heads.len())]);
        }
    }
}

fn random_params(rng: &mut ChaCha8Rng, d: usize, heads: usize) -> Result<GmhaParams> {
    GmhaParams::random(d, heads, 0.5, rng)
}

fn gmha_case(seed: u64) -> Result<(usize, f64)> {
    let mut rng = stream(seed, "gradcheck/gmha");
    let joints = rng.random_range(2..=4);
    let parents: Vec<Option<usize>> = (0..joints)
        .map(|j| (j > 0).then(|| rng.random_range(0..j)))
        .collect();
    let skeleton = Skeleton::new(parents, vec![[1.0, 0.0, 0.0]; joints], (0..joints).map(|j| format!("j{j}")).collect());
    let mut joint_mask = vec![true; joints];
    if rng.random_bool(0.3) {
        joint_mask[rng.random_range(1..joints)] = false;
    }
    let relations = build_graph_relations(&skeleton)?;
    let mask = build_gl_mask(&relations, seed as usize % 2, &joint_mask)?;
    let frames = rng.random_range(1..=2);
    let (d, heads) = width_and_heads(&mut rng, 8, false);
    let params = random_params(&mut rng, d, heads)?;
    let x: Vec<DMatrix<f64>> = (0..frames).map(|_| normal_matrix(&mut rng, joints, d, 1.0)).collect();
    let g: Vec<DMatrix<f64>> = (0..frames).map(|_| normal_matrix(&mut rng, joints, d, 1.0)).collect();

    let (_, cache) = gmha_forward(&x, &params, &mask)?;
    let (dx, grads) = gmha_backward(&params, &mask, &cache, &g)?;
    let mut all: Vec<&DMatrix<f64>> = x.iter().collect();
    all.extend(params.matrices());
    let theta = flatten(&all);
    let mut grad_refs: Vec<&DMatrix<f64>> = dx.iter().collect();
    grad_refs.extend(grads.matrices());
    let analytic = flatten(&grad_refs);
    let shapes: Vec<_> = all.iter().map(|m| m.shape()).collect();

    let loss = |t: &[f64]| {
        let mut parts = unflatten(t, &shapes);
        let p: Vec<DMatrix<f64>> = parts.drain(frames..).collect();
        let p = GmhaParams::from_matrices(heads, p.try_into().expect("five matrices"));
        let (y, _) = gmha_forward(&parts, &p, &mask).expect("valid instance");
        y.iter().zip(&g).map(|(y, g)| dot(y, g)).sum()
    };
    Ok((theta.len(), check_gradient(loss, &theta, &analytic)))
}

fn film_case(seed: u64) -> Result<(usize, f64)> {
    let mut rng = stream(seed, "gradcheck/film");
    let d = rng.random_range(1..=8);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let x = draw(d);
    let params = FilmParams {
        gamma: draw(d),
        beta: draw(d),
    };
    let g = draw(d);
    let grads = film_backward(&x, &params, &g)?;
    let theta: Vec<f64> = [x.clone(), params.gamma.clone(), params.beta.clone()].concat();
    let analytic = [grads.x, grads.gamma, grads.beta].concat();
    let loss = |t: &[f64]| {
        let p = FilmParams {
            gamma: t[d..2 * d].to_vec(),
            beta: t[2 * d..].to_vec(),
        };
        let y = film_forward(&t[..d], &p).expect("valid instance");
        y.iter().zip(&g).map(|(y, g)| y * g).sum()
    };
    Ok((theta.len(), check_gradient(loss, &theta, &analytic)))
}

fn rope_case(seed: u64) -> Result<(usize, f64)> {
    let mut rng = stream(seed, "gradcheck/rope");
    let frames = rng.random_range(2..=6);
    let window = [1, 3, 5][rng.random_range(0..3)];
    let (d, heads) = width_and_heads(&mut rng, 8, true);
    let params = random_params(&mut rng, d, heads)?;
    let x = normal_matrix(&mut rng, frames, d, 1.0);
    let g = normal_matrix(&mut rng, frames, d, 1.0);
    let (_, cache) = rope_temporal_forward(&x, &params, window, DEFAULT_ROPE_BASE)?;
    let (dx, grads) = rope_temporal_backward(&params, &cache, &g)?;
    let mut all = vec![&x];
    all.extend(params.matrices());
    let theta = flatten(&all);
    let mut grad_refs = vec![&dx];
    grad_refs.extend(grads.matrices());
    let analytic = flatten(&grad_refs);
    let shapes: Vec<_> = all.iter().map(|m| m.shape()).collect();
    let loss = |t: &[f64]| {
        let mut parts = unflatten(t, &shapes);
        let p: Vec<DMatrix<f64>> = parts.drain(1..).collect();
        let p = GmhaParams::from_matrices(heads, p.try_into().expect("five matrices"));
        let (y, _) = rope_temporal_forward(&parts[0], &p, window, DEFAULT_ROPE_BASE).expect("valid instance");
        dot(&y, &g)
    };
    Ok((theta.len(), check_gradient(loss, &theta, &analytic)))
}

fn cross_case(seed: u64) -> Result<(usize, f64)> {
    let mut rng = stream(seed, "gradcheck/cross");
    let joints = rng.random_range(1..=3);
    let per_joint = seed.is_multiple_of(2);
    let (d, heads) = width_and_heads(&mut rng, 6, false);
    let params = random_params(&mut rng, d, heads)?;
    let q = normal_matrix(&mut rng, joints, d, 1.0);
    let r = normal_matrix(&mut rng, joints, d, 1.0);
    let g = normal_matrix(&mut rng, joints, d, 1.0);
    let (_, cache) = reference_cross_attention(&q, &r, &params, per_joint)?;
    let (dq, dr, grads) = reference_cross_attention_backward(&params, &cache, &g)?;
    let mut all = vec![&q, &r];
    all.extend(params.matrices());
    let theta = flatten(&all);
    let mut grad_refs = vec![&dq, &dr];
    grad_refs.extend(grads.matrices());
    let analytic = flatten(&grad_refs);
    let shapes: Vec<_> = all.iter().map(|m| m.shape()).collect();
    let loss = |t: &[f64]| {
        let mut parts = unflatten(t, &shapes);
        let p: Vec<DMatrix<f64>> = parts.drain(2..).collect();
        let p = GmhaParams::from_matrices(heads, p.try_into().expect("five matrices"));
        let (y, _) = reference_cross_attention(&parts[0], &parts[1], &p, per_joint).expect("valid instance");
        dot(&y, &g)
    };
    Ok((theta.len(), check_gradient(loss, &theta, &analytic)))
}

/// Checks `kernel` on seeds `0..seeds`.
pub fn run_gradcheck(kernel: Kernel, seeds: u64) -> Result<GradCheckReport> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let case = match kernel {
        Kernel::Gmha => gmha_case,
        Kernel::Film => film_case,
        Kernel::Rope => rope_case,
        Kernel::Cross => cross_case,
    };
    let mut report = GradCheckReport {
        kernel,
        seeds,
        entries: 0,
        max_rel_error: 0.0,
        worst_seed: 0,
    };
    for seed in 0..seeds {
        let (entries, err) = case(seed)?;
        report.entries += entries;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_seed = seed;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_names() {
        for k in Kernel::ALL {
            assert_eq!(k.name().parse::<Kernel>().unwrap(), k);
        }
        assert!("conv".parse::<Kernel>().is_err());
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let f = |t: &[f64]| t[0] * t[0];
        assert!(check_gradient(f, &[1.5], &[3.0]) < 1e-8);
        assert!(check_gradient(f, &[1.5], &[3.3]) > 1e-2);
    }

    #[test]
    fn all_kernels_pass_a_few_seeds() {
        for k in Kernel::ALL {
            let r = run_gradcheck(k, 8).unwrap();
            assert!(r.passed(), "{}", r.to_text());
        }
    }
}
