//! Skeleton and motion data model.
//!
//! A [`Skeleton`] is a single-rooted tree of joints with rest offsets. Motion
//! comes in two forms: a [`PoseClip`] of canonical-frame joint positions and a
//! [`RotationClip`] of local 6D rotations plus a root translation track. All
//! lengths are in normalized units; see [`normalize_clip`] and
//! [`rescale_for_eval`] for the mapping to and from centimeters.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::rotation::{geodesic_angle, Rot6D, Vec3};

/// Default maximum joint count.
pub const DEFAULT_JOINT_CAP: usize = 150;
/// Default position-static threshold, normalized units.
pub const DEFAULT_EPS_POS: f64 = 1e-4;
/// Default rotation-static threshold, degrees.
pub const DEFAULT_EPS_ROT_DEG: f64 = 0.1;
/// Centimeters per normalized unit: the `[-1, 1]` span maps onto 100 cm.
pub const CM_PER_UNIT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// `None` marks the root.
    pub parents: Vec<Option<usize>>,
    pub offsets: Vec<[f64; 3]>,
    pub names: Vec<String>,
    pub position_static: Vec<bool>,
    pub rotation_static: Vec<bool>,
}

/// Traversal data derived from a valid skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub root: usize,
    /// Every joint appears after its parent.
    pub order: Vec<usize>,
    pub children: Vec<Vec<usize>>,
}

impl Skeleton {
    /// Builds a skeleton with all static flags cleared. No validation is done
    /// here; call [`Skeleton::validate`] or [`Skeleton::topology`].
    pub fn new(parents: Vec<Option<usize>>, offsets: Vec<[f64; 3]>, names: Vec<String>) -> Self {
        let n = parents.len();
        Skeleton {
            parents,
            offsets,
            names,
            position_static: vec![false; n],
            rotation_static: vec![false; n],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn offset(&self, j: usize) -> Vec3 {
        Vec3::from(self.offsets[j])
    }

    pub fn validate(&self) -> ValidationReport {
        validate_skeleton(self, DEFAULT_JOINT_CAP)
    }

    /// Topological order and child lists; fails with the validation report
    /// if the skeleton is not a valid tree.
    pub fn topology(&self) -> Result<Topology> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidSkeleton(report));
        }
        Ok(self.topology_unchecked())
    }

    fn topology_unchecked(&self) -> Topology {
        let n = self.joint_count();
        let mut children = vec![Vec::new(); n];
        let mut root = 0;
        for (j, p) in self.parents.iter().enumerate() {
            match p {
                Some(p) => children[*p].push(j),
                None => root = j,
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        while let Some(j) = queue.pop_front() {
            order.push(j);
            queue.extend(children[j].iter().copied());
        }
        Topology {
            root,
            order,
            children,
        }
    }

    pub fn with_static_flags(mut self, flags: &StaticFlags) -> Self {
        self.position_static = flags.position_static.clone();
        self.rotation_static = flags.rotation_static.clone();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Empty,
    JointCapExceeded { count: usize, cap: usize },
    LengthMismatch { field: &'static str, len: usize },
    NoRoot,
    TwoRoots,
    ParentOutOfRange { parent: usize },
    Cycle,
    NonFiniteOffset,
    EmptyName,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Empty => write!(f, "empty skeleton"),
            Rule::JointCapExceeded { count, cap } => {
                write!(f, "joint cap exceeded ({count} > {cap})")
            }
            Rule::LengthMismatch { field, len } => {
                write!(f, "length mismatch ({field} has {len} entries)")
            }
            Rule::NoRoot => write!(f, "no root"),
            Rule::TwoRoots => write!(f, "two roots"),
            Rule::ParentOutOfRange { parent } => write!(f, "parent {parent} out of range"),
            Rule::Cycle => write!(f, "cycle"),
            Rule::NonFiniteOffset => write!(f, "non-finite offset"),
            Rule::EmptyName => write!(f, "empty name"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub joint: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.joint {
            Some(j) => write!(f, "joint {j}: {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, pred: impl Fn(&Rule) -> bool) -> bool {
        self.violations.iter().any(|v| pred(&v.rule))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every tree invariant. Violations are collected, never raised.
pub fn validate_skeleton(skeleton: &Skeleton, cap: usize) -> ValidationReport {
    let mut out = Vec::new();
    let n = skeleton.joint_count();
    let mut push = |joint: Option<usize>, rule: Rule| out.push(Violation { joint, rule });

    if n == 0 {
        push(None, Rule::Empty);
        return ValidationReport { violations: out };
    }
    if n > cap {
        push(None, Rule::JointCapExceeded { count: n, cap });
    }
    for (field, len) in [
        ("offsets", skeleton.offsets.len()),
        ("names", skeleton.names.len()),
        ("position_static", skeleton.position_static.len()),
        ("rotation_static", skeleton.rotation_static.len()),
    ] {
        if len != n {
            push(None, Rule::LengthMismatch { field, len });
        }
    }

    let roots: Vec<usize> = (0..n).filter(|&j| skeleton.parents[j].is_none()).collect();
    match roots.len() {
        0 => push(None, Rule::NoRoot),
        1 => {}
        _ => {
            for &j in &roots[1..] {
                push(Some(j), Rule::TwoRoots);
            }
        }
    }

    let mut parent_ok = true;
    for (j, p) in skeleton.parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n {
                push(Some(j), Rule::ParentOutOfRange { parent: p });
                parent_ok = false;
            }
        }
    }

    if parent_ok {
        // 0 = unvisited, 1 = on the current walk, 2 = resolved.
        let mut state = vec![0u8; n];
        for start in 0..n {
            let mut path = Vec::new();
            let mut j = start;
            loop {
                match state[j] {
                    2 => break,
                    1 => {
                        let cycle_start = path.iter().position(|&k| k == j).unwrap();
                        let first = *path[cycle_start..].iter().min().unwrap();
                        push(Some(first), Rule::Cycle);
                        break;
                    }
                    _ => {}
                }
                state[j] = 1;
                path.push(j);
                match skeleton.parents[j] {
                    Some(p) => j = p,
                    None => break,
                }
            }
            for k in path {
                state[k] = 2;
            }
        }
    }

    for (j, o) in skeleton.offsets.iter().enumerate() {
        if o.iter().any(|v| !v.is_finite()) {
            push(Some(j), Rule::NonFiniteOffset);
        }
    }
    for (j, name) in skeleton.names.iter().enumerate() {
        if name.trim().is_empty() {
            push(Some(j), Rule::EmptyName);
        }
    }
    ValidationReport { violations: out }
}

/// `T × J` canonical-frame joint positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseClip {
    frames: usize,
    joints: usize,
    positions: Vec<[f64; 3]>,
    joint_mask: Vec<bool>,
}

impl PoseClip {
    /// `positions` is frame-major: entry `t * joints + j`.
    pub fn new(
        frames: usize,
        joints: usize,
        positions: Vec<[f64; 3]>,
        joint_mask: Vec<bool>,
    ) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Shape("a clip needs at least one frame".into()));
        }
        if positions.len() != frames * joints {
            return Err(Error::Shape(format!(
                "expected {} positions for {frames} frames x {joints} joints, got {}",
                frames * joints,
                positions.len()
            )));
        }
        if joint_mask.len() != joints {
            return Err(Error::Shape(format!(
                "joint mask has {} entries, expected {joints}",
                joint_mask.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("positions"));
        }
        Ok(PoseClip {
            frames,
            joints,
            positions,
            joint_mask,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn joint_mask(&self) -> &[bool] {
        &self.joint_mask
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn frame(&self, t: usize) -> &[[f64; 3]] {
        &self.positions[t * self.joints..(t + 1) * self.joints]
    }

    pub fn at(&self, t: usize, j: usize) -> Vec3 {
        Vec3::from(self.positions[t * self.joints + j])
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.joints {
            return Err(Error::Shape("joint mask length".into()));
        }
        self.joint_mask = mask;
        Ok(self)
    }

    pub fn map_positions(&self, f: impl Fn(Vec3) -> Vec3) -> PoseClip {
        PoseClip {
            frames: self.frames,
            joints: self.joints,
            positions: self
                .positions
                .iter()
                .map(|p| f(Vec3::from(*p)).into())
                .collect(),
            joint_mask: self.joint_mask.clone(),
        }
    }
}

/// `T × J` local rotations in 6D plus a `T × 3` root translation track.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationClip {
    frames: usize,
    joints: usize,
    rot6d: Vec<Rot6D>,
    root_translation: Vec<[f64; 3]>,
    joint_mask: Vec<bool>,
}

impl RotationClip {
    pub fn new(
        frames: usize,
        joints: usize,
        rot6d: Vec<Rot6D>,
        root_translation: Vec<[f64; 3]>,
        joint_mask: Vec<bool>,
    ) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Shape("a clip needs at least one frame".into()));
        }
        if rot6d.len() != frames * joints {
            return Err(Error::Shape(format!(
                "expected {} rotations for {frames} frames x {joints} joints, got {}",
                frames * joints,
                rot6d.len()
            )));
        }
        if root_translation.len() != frames {
            return Err(Error::Shape(format!(
                "root translation has {} frames, expected {frames}",
                root_translation.len()
            )));
        }
        if joint_mask.len() != joints {
            return Err(Error::Shape(format!(
                "joint mask has {} entries, expected {joints}",
                joint_mask.len()
            )));
        }
        if root_translation.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("root translation"));
        }
        if rot6d.iter().flat_map(|r| r.0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rot6d"));
        }
        Ok(RotationClip {
            frames,
            joints,
            rot6d,
            root_translation,
            joint_mask,
        })
    }

    /// All-identity rotations, zero translation, every joint valid.
    pub fn identity(frames: usize, joints: usize) -> Self {
        RotationClip {
            frames,
            joints,
            rot6d: vec![Rot6D::IDENTITY; frames * joints],
            root_translation: vec![[0.0; 3]; frames],
            joint_mask: vec![true; joints],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn joint_mask(&self) -> &[bool] {
        &self.joint_mask
    }

    pub fn rot6d(&self) -> &[Rot6D] {
        &self.rot6d
    }

    pub fn root_translation(&self) -> &[[f64; 3]] {
        &self.root_translation
    }

    pub fn get(&self, t: usize, j: usize) -> Rot6D {
        self.rot6d[t * self.joints + j]
    }

    pub fn set(&mut self, t: usize, j: usize, r: Rot6D) {
        self.rot6d[t * self.joints + j] = r;
    }

    pub fn set_root_translation(&mut self, t: usize, p: [f64; 3]) {
        self.root_translation[t] = p;
    }

    pub fn frame(&self, t: usize) -> &[Rot6D] {
        &self.rot6d[t * self.joints..(t + 1) * self.joints]
    }

    /// Decodes one entry, tagging errors with its position.
    pub fn matrix(&self, t: usize, j: usize) -> Result<crate::rotation::RotMatrix> {
        self.get(t, j).to_matrix().map_err(|source| Error::Decode {
            frame: t,
            joint: j,
            source,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.joints {
            return Err(Error::Shape("joint mask length".into()));
        }
        self.joint_mask = mask;
        Ok(self)
    }

    /// Every unmasked entry must decode.
    pub fn check_decodable(&self) -> Result<()> {
        for t in 0..self.frames {
            for j in 0..self.joints {
                if self.joint_mask[j] {
                    self.matrix(t, j)?;
                }
            }
        }
        Ok(())
    }
}

/// One known pose/rotation pair that anchors each joint's local axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrame {
    pub ref_positions: Vec<[f64; 3]>,
    pub ref_rot6d: Vec<Rot6D>,
    pub ref_root_translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticFlags {
    pub position_static: Vec<bool>,
    pub rotation_static: Vec<bool>,
}

/// Flags joints whose root-relative position, and independently whose local
/// rotation, stays within tolerance of frame 0 for the whole clip. Masked
/// joints are never flagged.
pub fn detect_static_joints(
    skeleton: &Skeleton,
    positions: &PoseClip,
    rotations: &RotationClip,
    eps_pos: f64,
    eps_rot_deg: f64,
) -> Result<StaticFlags> {
    let n = skeleton.joint_count();
    if positions.joints() != n || rotations.joints() != n {
        return Err(Error::Shape(format!(
            "skeleton has {n} joints, pose clip {}, rotation clip {}",
            positions.joints(),
            rotations.joints()
        )));
    }
    if positions.frames() != rotations.frames() {
        return Err(Error::Shape(format!(
            "pose clip has {} frames, rotation clip {}",
            positions.frames(),
            rotations.frames()
        )));
    }
    let topo = skeleton.topology()?;
    let root = topo.root;
    let eps_rot = eps_rot_deg.to_radians();

    let mut position_static = vec![false; n];
    let mut rotation_static = vec![false; n];
    for j in 0..n {
        if !positions.joint_mask()[j] || !rotations.joint_mask()[j] {
            continue;
        }
        let rel0 = positions.at(0, j) - positions.at(0, root);
        let mut max_drift: f64 = 0.0;
        for t in 1..positions.frames() {
            let rel = positions.at(t, j) - positions.at(t, root);
            max_drift = max_drift.max((rel - rel0).norm());
        }
        position_static[j] = max_drift <= eps_pos;

        let r0 = rotations.matrix(0, j)?;
        let mut max_angle: f64 = 0.0;
        for t in 1..rotations.frames() {
            max_angle = max_angle.max(geodesic_angle(&r0, &rotations.matrix(t, j)?));
        }
        rotation_static[j] = max_angle <= eps_rot;
    }
    Ok(StaticFlags {
        position_static,
        rotation_static,
    })
}

/// `normalized = scale · p + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub offset: [f64; 3],
}

impl NormalizationTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        p * self.scale + Vec3::from(self.offset)
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        (p - Vec3::from(self.offset)) / self.scale
    }

    pub fn invert_clip(&self, clip: &PoseClip) -> PoseClip {
        clip.map_positions(|p| self.invert(p))
    }
}

/// Maps the bounding box of all unmasked positions (over every frame) into
/// `[-1, 1]^3` with one uniform scale, centered. A box of zero extent is only
/// centered.
pub fn normalize_clip(positions: &PoseClip) -> Result<(PoseClip, NormalizationTransform)> {
    let mask = positions.joint_mask();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for t in 0..positions.frames() {
        for j in (0..positions.joints()).filter(|&j| mask[j]) {
            let p = positions.at(t, j);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    let center = (lo + hi) / 2.0;
    let half_extent = ((hi - lo) / 2.0).max();
    let scale = if half_extent > 1e-12 {
        1.0 / half_extent
    } else {
        1.0
    };
    let transform = NormalizationTransform {
        scale,
        offset: (-center * scale).into(),
    };
    Ok((positions.map_positions(|p| transform.apply(p)), transform))
}

/// Normalized units to centimeters (`× 50`).
pub fn rescale_for_eval(positions_normalized: &PoseClip) -> PoseClip {
    positions_normalized.map_positions(|p| p * CM_PER_UNIT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::RotMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn skel(parents: Vec<Option<usize>>) -> Skeleton {
        let n = parents.len();
        Skeleton::new(
            parents,
            vec![[1.0, 0.0, 0.0]; n],
            (0..n).map(|i| format!("j{i}")).collect(),
        )
    }

    #[test]
    fn single_joint_is_valid() {
        assert!(skel(vec![None]).validate().is_ok());
    }

    #[test]
    fn two_roots_reported() {
        let r = skel(vec![None, None]).validate();
        assert!(r.has_rule(|r| *r == Rule::TwoRoots));
        assert!(r.to_string().contains("two roots"));
    }

    #[test]
    fn three_cycle_reported() {
        let r = skel(vec![Some(2), Some(0), Some(1)]).validate();
        assert!(r.has_rule(|r| *r == Rule::Cycle));
        assert!(r.has_rule(|r| *r == Rule::NoRoot));
        assert_eq!(r.violations.iter().filter(|v| v.rule == Rule::Cycle).count(), 1);
    }

    #[test]
    fn other_violations() {
        let r = skel(vec![None, Some(5)]).validate();
        assert!(r.has_rule(|r| matches!(r, Rule::ParentOutOfRange { parent: 5 })));

        let mut s = skel(vec![None, Some(0)]);
        s.offsets[1][2] = f64::NAN;
        s.names[0] = " ".into();
        let r = s.validate();
        assert!(r.violations.contains(&Violation {
            joint: Some(1),
            rule: Rule::NonFiniteOffset
        }));
        assert!(r.violations.contains(&Violation {
            joint: Some(0),
            rule: Rule::EmptyName
        }));

        let big = skel((0..151).map(|i| if i == 0 { None } else { Some(i - 1) }).collect());
        assert!(big
            .validate()
            .has_rule(|r| matches!(r, Rule::JointCapExceeded { .. })));
        assert!(validate_skeleton(&big, 200).is_ok());
        assert!(skel(vec![]).validate().has_rule(|r| *r == Rule::Empty));
    }

    /// Union-find oracle: a tree iff exactly one root, all parents in range,
    /// and no edge joins two joints already connected.
    fn union_find_is_tree(parents: &[Option<usize>]) -> bool {
        let n = parents.len();
        if n == 0 || parents.iter().filter(|p| p.is_none()).count() != 1 {
            return false;
        }
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while uf[r] != r {
                r = uf[r];
            }
            uf[x] = r;
            r
        }
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return false;
                }
                let (a, b) = (find(&mut uf, j), find(&mut uf, p));
                if a == b {
                    return false;
                }
                uf[a] = b;
            }
        }
        true
    }

    #[test]
    fn validator_agrees_with_union_find() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut trees = 0;
        for _ in 0..1000 {
            let n = rng.random_range(1..12);
            let parents: Vec<Option<usize>> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.15) {
                        None
                    } else {
                        Some(rng.random_range(0..n + 1))
                    }
                })
                .collect();
            let expected = union_find_is_tree(&parents);
            trees += expected as usize;
            assert_eq!(skel(parents.clone()).validate().is_ok(), expected, "{parents:?}");
        }
        assert!(trees > 0);
    }

    #[test]
    fn topology_orders_parents_first() {
        let s = skel(vec![Some(2), Some(2), None, Some(0)]);
        let topo = s.topology().unwrap();
        assert_eq!(topo.root, 2);
        let pos = |j| topo.order.iter().position(|&k| k == j).unwrap();
        for j in 0..4 {
            if let Some(p) = s.parents[j] {
                assert!(pos(p) < pos(j));
            }
        }
    }

    fn clip_from(frames: usize, joints: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> PoseClip {
        let mut v = Vec::new();
        for t in 0..frames {
            for j in 0..joints {
                v.push(f(t, j));
            }
        }
        PoseClip::new(frames, joints, v, vec![true; joints]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        // already spanning [-1,1]^3
        let c = clip_from(1, 2, |_, j| if j == 0 { [-1.0; 3] } else { [1.0; 3] });
        let (n, tr) = normalize_clip(&c).unwrap();
        assert_eq!(tr.scale, 1.0);
        assert_eq!(tr.offset, [0.0; 3]);
        assert_eq!(n, c);

        let c = clip_from(3, 1, |_, _| [5.0; 3]);
        let (n, tr) = normalize_clip(&c).unwrap();
        assert_eq!(tr.scale, 1.0);
        assert_eq!(n.at(2, 0), Vec3::zeros());

        let c = clip_from(1, 2, |_, j| if j == 0 { [0.0; 3] } else { [2.0; 3] });
        let (_, tr) = normalize_clip(&c).unwrap();
        assert_eq!(tr.scale, 1.0);
        assert_eq!(tr.offset, [-1.0; 3]);
    }

    #[test]
    fn normalize_uses_uniform_scale_and_skips_masked() {
        let c = clip_from(2, 3, |t, j| match j {
            0 => [0.0, 0.0, 0.0],
            1 => [4.0, 1.0 + t as f64, 0.0],
            _ => [1000.0, 0.0, 0.0],
        })
        .with_mask(vec![true, true, false])
        .unwrap();
        let (n, tr) = normalize_clip(&c).unwrap();
        assert_eq!(tr.scale, 0.5);
        assert_eq!(n.at(0, 0), Vec3::new(-1.0, -0.5, 0.0));
        assert_eq!(n.at(1, 1), Vec3::new(1.0, 0.5, 0.0));
        let empty = c.with_mask(vec![false; 3]).unwrap();
        assert!(matches!(normalize_clip(&empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn eval_rescale() {
        let c = clip_from(1, 3, |_, j| match j {
            0 => [1.0, 0.0, 0.0],
            1 => [0.0; 3],
            _ => [-1.0; 3],
        });
        let cm = rescale_for_eval(&c);
        assert_eq!(cm.at(0, 0), Vec3::new(50.0, 0.0, 0.0));
        assert_eq!(cm.at(0, 1), Vec3::zeros());
        assert_eq!(cm.at(0, 2), Vec3::repeat(-50.0));
    }

    #[test]
    fn clip_shape_errors() {
        assert!(PoseClip::new(0, 1, vec![], vec![true]).is_err());
        assert!(PoseClip::new(1, 2, vec![[0.0; 3]], vec![true; 2]).is_err());
        assert!(PoseClip::new(1, 1, vec![[f64::NAN; 3]], vec![true]).is_err());
        assert!(RotationClip::new(1, 1, vec![Rot6D::IDENTITY], vec![], vec![true]).is_err());
    }

    #[test]
    fn constant_clip_is_all_static() {
        let s = skel(vec![None, Some(0), Some(1)]);
        let pose = clip_from(4, 3, |_, j| [j as f64, 0.0, 0.0]);
        let rot = RotationClip::identity(4, 3);
        let flags = detect_static_joints(&s, &pose, &rot, DEFAULT_EPS_POS, DEFAULT_EPS_ROT_DEG)
            .unwrap();
        assert_eq!(flags.position_static, vec![true; 3]);
        assert_eq!(flags.rotation_static, vec![true; 3]);
    }

    #[test]
    fn static_detection_shape_mismatch() {
        let s = skel(vec![None, Some(0)]);
        let pose = clip_from(2, 2, |_, _| [0.0; 3]);
        let rot = RotationClip::identity(3, 2);
        assert!(matches!(
            detect_static_joints(&s, &pose, &rot, 1e-4, 0.1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rotation_flag_independent_of_position_flag() {
        // joint 1 spins about z; its position never changes.
        let s = skel(vec![None, Some(0)]);
        let pose = clip_from(3, 2, |_, j| [j as f64, 0.0, 0.0]);
        let mut rot = RotationClip::identity(3, 2);
        for t in 0..3 {
            rot.set(t, 1, RotMatrix::rz(t as f64 * 0.3).to_rot6d());
        }
        let flags = detect_static_joints(&s, &pose, &rot, 1e-4, 0.1).unwrap();
        assert_eq!(flags.position_static, vec![true, true]);
        assert_eq!(flags.rotation_static, vec![true, false]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_invertible(
                pts in proptest::collection::vec(
                    (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..40)
            ) {
                let n = pts.len();
                let clip = PoseClip::new(
                    1, n, pts.iter().map(|&(x, y, z)| [x, y, z]).collect(), vec![true; n],
                ).unwrap();
                let (normalized, tr) = normalize_clip(&clip).unwrap();
                for p in normalized.positions() {
                    for v in p {
                        prop_assert!(v.abs() <= 1.0 + 1e-12);
                    }
                }
                let back = tr.invert_clip(&normalized);
                for (a, b) in back.positions().iter().zip(clip.positions()) {
                    for k in 0..3 {
                        prop_assert!((a[k] - b[k]).abs() <= 1e-9 * b[k].abs().max(1.0));
                    }
                }
            }
        }
    }
}
