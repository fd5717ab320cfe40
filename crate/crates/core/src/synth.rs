//! Seeded generators for skeletons, motions and axis conventions.
//!
//! Each generator draws from its own ChaCha stream keyed by `(seed, tag)`,
//! so adding draws to one generator never shifts another's output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kinematics::{AxisConvention, DEFAULT_FRAMES};
use crate::rotation::{RotMatrix, UnitQuat, Vec3};
use crate::skeleton::{RotationClip, Skeleton, DEFAULT_JOINT_CAP};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub min_joints: usize,
    pub max_joints: usize,
    pub frames: usize,
    /// Low-pass strength in `(0, 1]`; 1 freezes every trajectory.
    pub smoothness: f64,
    /// Positive values favor bushy trees, negative values long chains.
    pub branching_bias: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            min_joints: 5,
            max_joints: 30,
            frames: DEFAULT_FRAMES,
            smoothness: 0.9,
            branching_bias: 0.0,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn joints(mut self, min: usize, max: usize) -> Self {
        self.min_joints = min;
        self.max_joints = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_joints == 0 || self.min_joints > self.max_joints {
            return Err(Error::InvalidArgument(format!(
                "joint range {}..={} is empty",
                self.min_joints, self.max_joints
            )));
        }
        if self.max_joints > DEFAULT_JOINT_CAP {
            return Err(Error::InvalidArgument(format!(
                "at most {DEFAULT_JOINT_CAP} joints"
            )));
        }
        if self.frames == 0 {
            return Err(Error::InvalidArgument("frames must be positive".into()));
        }
        if !(self.smoothness > 0.0 && self.smoothness <= 1.0) {
            return Err(Error::InvalidArgument("smoothness must be in (0, 1]".into()));
        }
        if !self.branching_bias.is_finite() {
            return Err(Error::InvalidArgument("branching bias must be finite".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent deterministic stream for `(seed, tag)`.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    // FNV-1a over the tag.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(h)))
}

fn normal3(rng: &mut impl Rng) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

pub fn random_unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = normal3(rng);
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Uniform on SO(3): a normalized 4D Gaussian is uniform on the quaternion
/// sphere.
pub fn random_rotation(rng: &mut impl Rng) -> RotMatrix {
    loop {
        let (w, x, y, z): (f64, f64, f64, f64) = (
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(q) = UnitQuat::new(w, x, y, z) {
            if w * w + x * x + y * y + z * z > 1e-12 {
                return q.to_matrix();
            }
        }
    }
}

fn random_offset(rng: &mut impl Rng) -> [f64; 3] {
    let len = rng.random_range(0.2..1.0);
    (random_unit_vector(rng) * len).into()
}

fn joint_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("joint_{j:03}")).collect()
}

fn sample_joint_count(rng: &mut impl Rng, config: &GenConfig) -> usize {
    rng.random_range(config.min_joints..=config.max_joints)
}

/// Random tree. Each new joint attaches to the previous one with probability
/// `1 / (1 + e^bias)`, otherwise to a uniformly chosen earlier joint.
pub fn gen_skeleton(config: &GenConfig) -> Result<Skeleton> {
    config.validate()?;
    let mut rng = stream(config.seed, "skeleton");
    let n = sample_joint_count(&mut rng, config);
    let chain_p = 1.0 / (1.0 + config.branching_bias.exp());
    let mut parents = vec![None];
    let mut offsets = vec![[0.0; 3]];
    for j in 1..n {
        let p = if rng.random_bool(chain_p) {
            j - 1
        } else {
            rng.random_range(0..j)
        };
        parents.push(Some(p));
        offsets.push(random_offset(&mut rng));
    }
    Ok(Skeleton::new(parents, offsets, joint_names(n)))
}

/// Random tree in which every internal joint has at least two children whose
/// bone directions are at least 15° from parallel. A request for exactly two
/// joints yields three.
pub fn gen_branching_skeleton(config: &GenConfig) -> Result<Skeleton> {
    config.validate()?;
    let mut rng = stream(config.seed, "branching-skeleton");
    let mut n = sample_joint_count(&mut rng, config);
    if n == 2 {
        n = 3;
    }
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut leaves = vec![0usize];
    let mut internal: Vec<usize> = Vec::new();
    while parents.len() < n {
        let remaining = n - parents.len();
        if remaining == 1 && !internal.is_empty() {
            let p = internal[rng.random_range(0..internal.len())];
            parents.push(Some(p));
            leaves.push(parents.len() - 1);
            continue;
        }
        let k = if remaining >= 3 && rng.random_bool(0.3) { 3 } else { 2 };
        let idx = rng.random_range(0..leaves.len());
        let p = leaves.swap_remove(idx);
        internal.push(p);
        for _ in 0..k {
            parents.push(Some(p));
            leaves.push(parents.len() - 1);
        }
    }

    let mut children = vec![Vec::new(); n];
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(j);
        }
    }
    let mut offsets = vec![[0.0; 3]; n];
    let min_sin = 15f64.to_radians().sin();
    for kids in &children {
        let mut dirs: Vec<Vec3> = Vec::new();
        for &c in kids {
            let d = loop {
                let d = random_unit_vector(&mut rng);
                if dirs.iter().all(|e: &Vec3| e.cross(&d).norm() > min_sin) {
                    break d;
                }
            };
            dirs.push(d);
            offsets[c] = (d * rng.random_range(0.2..1.0)).into();
        }
    }
    Ok(Skeleton::new(parents, offsets, joint_names(n)))
}

/// Smooth motion: each joint's axis-angle vector follows a first-order
/// low-pass random walk `a_t = s·a_{t-1} + (1-s)·noise`, and so does the root
/// translation.
pub fn gen_motion(skeleton: &Skeleton, config: &GenConfig) -> Result<RotationClip> {
    config.validate()?;
    skeleton.topology()?;
    let n = skeleton.joint_count();
    let frames = config.frames;
    let s = config.smoothness;
    let mut rot_rng = stream(config.seed, "motion/rotation");
    let mut root_rng = stream(config.seed, "motion/root");

    let mut clip = RotationClip::identity(frames, n);
    let mut state: Vec<Vec3> = (0..n).map(|_| normal3(&mut rot_rng) * 0.6).collect();
    let mut root = normal3(&mut root_rng) * 0.5;
    for t in 0..frames {
        if t > 0 {
            for a in state.iter_mut() {
                *a = *a * s + normal3(&mut rot_rng) * 0.6 * (1.0 - s);
            }
            root = root * s + normal3(&mut root_rng) * 0.5 * (1.0 - s);
        }
        for (j, a) in state.iter().enumerate() {
            clip.set(t, j, RotMatrix::from_axis_angle(a, a.norm()).to_rot6d());
        }
        clip.set_root_translation(t, root.into());
    }
    Ok(clip)
}

/// Independent uniformly random frame change per joint.
pub fn gen_axis_convention(skeleton: &Skeleton, seed: u64) -> AxisConvention {
    let mut rng = stream(seed, "axis-convention");
    AxisConvention::new(
        (0..skeleton.joint_count())
            .map(|_| random_rotation(&mut rng))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;
    use crate::rotation::geodesic_angle;

    #[test]
    fn skeletons_are_deterministic_and_valid() {
        let cfg = GenConfig::with_seed(42);
        assert_eq!(gen_skeleton(&cfg).unwrap(), gen_skeleton(&cfg).unwrap());
        for seed in 0..1000 {
            let cfg = GenConfig::with_seed(seed).joints(1, 150);
            assert!(gen_skeleton(&cfg).unwrap().validate().is_ok());
        }
        let one = gen_skeleton(&GenConfig::with_seed(3).joints(1, 1)).unwrap();
        assert_eq!(one.parents, vec![None]);
    }

    #[test]
    fn branching_skeletons_have_two_children_everywhere() {
        for seed in 0..200 {
            let s = gen_branching_skeleton(&GenConfig::with_seed(seed).joints(1, 60)).unwrap();
            let topo = s.topology().unwrap();
            for kids in &topo.children {
                assert!(kids.is_empty() || kids.len() >= 2);
                for (a, &i) in kids.iter().enumerate() {
                    for &k in &kids[a + 1..] {
                        let c = s.offset(i).normalize().cross(&s.offset(k).normalize()).norm();
                        assert!(c > 0.25);
                    }
                }
            }
        }
    }

    #[test]
    fn streams_are_independent_by_tag() {
        let mut a = stream(1, "a");
        let mut b = stream(1, "b");
        let x: u64 = a.random();
        let y: u64 = b.random();
        assert_ne!(x, y);
        let mut a2 = stream(1, "a");
        assert_eq!(x, a2.random::<u64>());
    }

    #[test]
    fn motion_is_deterministic_and_smooth() {
        let cfg = GenConfig::with_seed(9);
        let s = gen_skeleton(&cfg).unwrap();
        assert_eq!(gen_motion(&s, &cfg).unwrap(), gen_motion(&s, &cfg).unwrap());

        let smooth = GenConfig {
            smoothness: 0.9999,
            ..cfg.clone()
        };
        let m = gen_motion(&s, &smooth).unwrap();
        for t in 1..m.frames() {
            for j in 0..m.joints() {
                let d = geodesic_angle(&m.matrix(t - 1, j).unwrap(), &m.matrix(t, j).unwrap());
                assert!(d.to_degrees() < 0.1);
            }
        }
        m.check_decodable().unwrap();
    }

    #[test]
    fn fk_of_generated_motion_is_bounded() {
        for seed in 0..100 {
            let cfg = GenConfig::with_seed(seed);
            let s = gen_skeleton(&cfg).unwrap();
            let m = gen_motion(&s, &cfg).unwrap();
            let (pose, _) = forward_kinematics(&s, &m).unwrap();
            // every bone is shorter than 1, so |p| <= |root| + J.
            let bound = 5.0 + s.joint_count() as f64;
            assert!(pose
                .positions()
                .iter()
                .all(|p| p.iter().all(|v| v.is_finite() && v.abs() < bound)));
        }
    }

    #[test]
    fn axis_convention_determinism_and_inverse() {
        let s = gen_skeleton(&GenConfig::with_seed(1)).unwrap();
        let a = gen_axis_convention(&s, 5);
        assert_eq!(a, gen_axis_convention(&s, 5));
        assert_ne!(a, gen_axis_convention(&s, 6));
        for r in a.compose(&a.inverse()).frames() {
            assert!(r.angle() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::with_seed(0).joints(0, 3).validate().is_err());
        assert!(GenConfig::with_seed(0).joints(5, 3).validate().is_err());
        assert!(GenConfig::with_seed(0).joints(1, 151).validate().is_err());
        let c = GenConfig {
            smoothness: 0.0,
            ..GenConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
