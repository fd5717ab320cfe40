//! Forward kinematics, the reference-anchored pose-to-rotation solver, and
//! axis-convention re-rigging.
//!
//! Joint positions pin down each bone's direction but not the rotation about
//! it, and not the axes of the joint's local frame. [`rerig_axis_convention`]
//! makes the second point concrete: it produces a different skeleton and
//! different local rotations with identical joint positions.
//! [`analytic_ik_reference`] resolves both ambiguities by measuring every
//! rotation as a delta from one known [`ReferenceFrame`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rotation::{
    procrustes_with_fallback, shortest_arc_unchecked, swing_twist, Rot6D, RotMatrix, Vec3,
};
use crate::skeleton::{PoseClip, ReferenceFrame, RotationClip, Skeleton, Topology};

/// Bones shorter than this (normalized units) have no usable direction.
pub const EPS_BONE_LENGTH: f64 = 1e-6;
/// Tolerance for [`ReferenceFrame::check_consistency`].
pub const REFERENCE_TOLERANCE: f64 = 1e-6;
/// Default clip length used by generators.
pub const DEFAULT_FRAMES: usize = 48;

/// Per-frame, per-joint global rotations and positions.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTransforms {
    frames: usize,
    joints: usize,
    rotations: Vec<RotMatrix>,
    positions: Vec<[f64; 3]>,
}

impl GlobalTransforms {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn rotation(&self, t: usize, j: usize) -> &RotMatrix {
        &self.rotations[t * self.joints + j]
    }

    pub fn position(&self, t: usize, j: usize) -> Vec3 {
        Vec3::from(self.positions[t * self.joints + j])
    }
}

/// FK for a single frame of already-decoded local rotations.
fn fk_frame(
    skeleton: &Skeleton,
    topo: &Topology,
    locals: &[RotMatrix],
    root_translation: Vec3,
) -> (Vec<RotMatrix>, Vec<Vec3>) {
    let n = skeleton.joint_count();
    let mut globals = vec![RotMatrix::identity(); n];
    let mut positions = vec![Vec3::zeros(); n];
    for &j in &topo.order {
        match skeleton.parents[j] {
            None => {
                globals[j] = locals[j];
                positions[j] = root_translation;
            }
            Some(p) => {
                globals[j] = globals[p] * locals[j];
                positions[j] = positions[p] + globals[p].rotate(&skeleton.offset(j));
            }
        }
    }
    (globals, positions)
}

fn decode_frame(motion: &RotationClip, t: usize) -> Result<Vec<RotMatrix>> {
    let mask = motion.joint_mask();
    (0..motion.joints())
        .map(|j| {
            if mask[j] {
                motion.matrix(t, j)
            } else {
                Ok(RotMatrix::identity())
            }
        })
        .collect()
}

fn check_motion_shape(skeleton: &Skeleton, joints: usize) -> Result<()> {
    if joints != skeleton.joint_count() {
        return Err(Error::Shape(format!(
            "skeleton has {} joints, clip has {joints}",
            skeleton.joint_count()
        )));
    }
    Ok(())
}

/// Positions and global transforms for every frame. Masked joints use the
/// identity as their local rotation.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    motion: &RotationClip,
) -> Result<(PoseClip, GlobalTransforms)> {
    let topo = skeleton.topology()?;
    check_motion_shape(skeleton, motion.joints())?;
    let n = skeleton.joint_count();
    let frames = motion.frames();
    let mut rotations = Vec::with_capacity(frames * n);
    let mut positions = Vec::with_capacity(frames * n);
    for t in 0..frames {
        let locals = decode_frame(motion, t)?;
        let root = Vec3::from(motion.root_translation()[t]);
        let (g, p) = fk_frame(skeleton, &topo, &locals, root);
        rotations.extend(g);
        positions.extend(p.into_iter().map(<[f64; 3]>::from));
    }
    let pose = PoseClip::new(frames, n, positions.clone(), motion.joint_mask().to_vec())?;
    Ok((
        pose,
        GlobalTransforms {
            frames,
            joints: n,
            rotations,
            positions,
        },
    ))
}

impl ReferenceFrame {
    /// Takes frame `t` of `motion` and computes its positions by FK, so the
    /// result is self-consistent by construction.
    pub fn from_motion(skeleton: &Skeleton, motion: &RotationClip, t: usize) -> Result<Self> {
        let topo = skeleton.topology()?;
        check_motion_shape(skeleton, motion.joints())?;
        if t >= motion.frames() {
            return Err(Error::InvalidArgument(format!(
                "reference frame {t} out of range (clip has {} frames)",
                motion.frames()
            )));
        }
        let locals = decode_frame(motion, t)?;
        let root = motion.root_translation()[t];
        let (_, positions) = fk_frame(skeleton, &topo, &locals, Vec3::from(root));
        Ok(ReferenceFrame {
            ref_positions: positions.into_iter().map(Into::into).collect(),
            ref_rot6d: motion.frame(t).to_vec(),
            ref_root_translation: root,
        })
    }

    pub fn local_matrices(&self) -> Result<Vec<RotMatrix>> {
        self.ref_rot6d
            .iter()
            .enumerate()
            .map(|(j, r)| {
                r.to_matrix().map_err(|source| Error::Decode {
                    frame: 0,
                    joint: j,
                    source,
                })
            })
            .collect()
    }

    /// FK of the stored rotations must reproduce the stored positions.
    pub fn check_consistency(&self, skeleton: &Skeleton) -> Result<()> {
        let topo = skeleton.topology()?;
        let n = skeleton.joint_count();
        if self.ref_positions.len() != n || self.ref_rot6d.len() != n {
            return Err(Error::Shape(format!(
                "reference has {} positions and {} rotations for {n} joints",
                self.ref_positions.len(),
                self.ref_rot6d.len()
            )));
        }
        let locals = self.local_matrices()?;
        let (_, positions) = fk_frame(
            skeleton,
            &topo,
            &locals,
            Vec3::from(self.ref_root_translation),
        );
        for (j, p) in positions.iter().enumerate() {
            let error = (p - Vec3::from(self.ref_positions[j])).norm();
            if !(error <= REFERENCE_TOLERANCE) {
                return Err(Error::InconsistentReference { joint: j, error });
            }
        }
        Ok(())
    }
}

/// Everything about the reference that does not depend on the frame being
/// solved.
struct ReferenceData {
    globals: Vec<RotMatrix>,
    locals: Vec<RotMatrix>,
    positions: Vec<Vec3>,
    /// Children whose reference bone is long enough to define a direction.
    aligned_children: Vec<Vec<usize>>,
    /// Children with a zero-length reference bone.
    degenerate_children: Vec<Vec<usize>>,
    /// Reference direction of the bone ending at each joint (zero if none).
    incoming_axis: Vec<Vec3>,
}

impl ReferenceData {
    fn new(skeleton: &Skeleton, topo: &Topology, reference: &ReferenceFrame) -> Result<Self> {
        let locals = reference.local_matrices()?;
        let (globals, _) = fk_frame(
            skeleton,
            topo,
            &locals,
            Vec3::from(reference.ref_root_translation),
        );
        let positions: Vec<Vec3> = reference.ref_positions.iter().map(|p| Vec3::from(*p)).collect();
        let n = skeleton.joint_count();
        let mut aligned_children = vec![Vec::new(); n];
        let mut degenerate_children = vec![Vec::new(); n];
        let mut incoming_axis = vec![Vec3::zeros(); n];
        for j in 0..n {
            for &c in &topo.children[j] {
                let bone = positions[c] - positions[j];
                let len = bone.norm();
                if len > EPS_BONE_LENGTH {
                    aligned_children[j].push(c);
                    incoming_axis[c] = bone / len;
                } else {
                    degenerate_children[j].push(c);
                }
            }
        }
        Ok(ReferenceData {
            globals,
            locals,
            positions,
            aligned_children,
            degenerate_children,
            incoming_axis,
        })
    }
}

/// Recovers local rotations from joint positions, anchored on a reference
/// pose/rotation pair.
///
/// For each joint the solver finds a global delta `D` that carries the
/// reference child-bone directions onto the observed ones: a shortest arc for
/// one child (so no twist relative to the reference is introduced), a
/// weighted Procrustes fit for several. Leaves inherit their parent's delta,
/// and the new global rotation is `D · G_ref`. Rotation-static joints keep
/// their reference local rotation.
///
/// FK of the result reproduces the input positions whenever the pose has the
/// reference's bone lengths. Rotation about a single-child bone is not
/// observable from positions and is returned as it was in the reference.
pub fn analytic_ik_reference(
    skeleton: &Skeleton,
    pose: &PoseClip,
    reference: &ReferenceFrame,
) -> Result<RotationClip> {
    let topo = skeleton.topology()?;
    check_motion_shape(skeleton, pose.joints())?;
    reference.check_consistency(skeleton)?;
    let data = ReferenceData::new(skeleton, &topo, reference)?;

    let frames: Vec<(Vec<Rot6D>, [f64; 3])> = (0..pose.frames())
        .into_par_iter()
        .map(|t| solve_frame(skeleton, &topo, &data, pose, t))
        .collect::<Result<_>>()?;

    let mut rot6d = Vec::with_capacity(pose.frames() * skeleton.joint_count());
    let mut root_translation = Vec::with_capacity(pose.frames());
    for (r, root) in frames {
        rot6d.extend(r);
        root_translation.push(root);
    }
    RotationClip::new(
        pose.frames(),
        skeleton.joint_count(),
        rot6d,
        root_translation,
        pose.joint_mask().to_vec(),
    )
}

fn solve_frame(
    skeleton: &Skeleton,
    topo: &Topology,
    data: &ReferenceData,
    pose: &PoseClip,
    t: usize,
) -> Result<(Vec<Rot6D>, [f64; 3])> {
    let n = skeleton.joint_count();
    let mask = pose.joint_mask();
    let mut delta = vec![RotMatrix::identity(); n];
    let mut globals = vec![RotMatrix::identity(); n];
    let mut locals = vec![Rot6D::IDENTITY; n];

    for &j in &topo.order {
        let parent = skeleton.parents[j];
        let p_j = pose.at(t, j);

        for &c in &data.degenerate_children[j] {
            if mask[j] && mask[c] && (pose.at(t, c) - p_j).norm() > EPS_BONE_LENGTH {
                return Err(Error::ZeroReferenceBone { joint: c });
            }
        }

        let mut from = Vec::new();
        let mut to = Vec::new();
        if mask[j] {
            for &c in &data.aligned_children[j] {
                if !mask[c] {
                    continue;
                }
                let bone = pose.at(t, c) - p_j;
                let len = bone.norm();
                if len > EPS_BONE_LENGTH {
                    from.push((data.positions[c] - data.positions[j]).normalize());
                    to.push(bone / len);
                }
            }
        }

        let d = if data.aligned_children[j].is_empty() {
            parent.map(|p| delta[p]).unwrap_or_else(RotMatrix::identity)
        } else if from.is_empty() {
            RotMatrix::identity()
        } else {
            let fallback = data.incoming_axis[j];
            if from.len() == 1 {
                shortest_arc_unchecked(&from[0], &to[0], &fallback)
            } else {
                procrustes_with_fallback(&from, &to, &vec![1.0; from.len()], &fallback)?
            }
        };

        let global = if skeleton.rotation_static.get(j).copied().unwrap_or(false) {
            match parent {
                Some(p) => globals[p] * data.locals[j],
                None => data.locals[j],
            }
        } else {
            d * data.globals[j]
        };
        delta[j] = global * data.globals[j].transpose();
        globals[j] = global;
        let local = match parent {
            Some(p) => globals[p].transpose() * global,
            None => global,
        };
        locals[j] = local.to_rot6d();
    }
    Ok((locals, pose.at(t, topo.root).into()))
}

/// Per-joint change of local axes. Entry `j` maps joint `j`'s new frame into
/// its old one.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisConvention {
    frames: Vec<RotMatrix>,
}

impl AxisConvention {
    pub fn new(frames: Vec<RotMatrix>) -> Self {
        AxisConvention { frames }
    }

    pub fn identity(joints: usize) -> Self {
        AxisConvention {
            frames: vec![RotMatrix::identity(); joints],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, j: usize) -> &RotMatrix {
        &self.frames[j]
    }

    pub fn frames(&self) -> &[RotMatrix] {
        &self.frames
    }

    pub fn inverse(&self) -> Self {
        AxisConvention {
            frames: self.frames.iter().map(RotMatrix::transpose).collect(),
        }
    }

    pub fn compose(&self, other: &AxisConvention) -> Self {
        AxisConvention {
            frames: self
                .frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

/// Re-expresses a rig under new local axes:
/// `o'_j = C_pᵀ·o_j` and `R'_j = C_pᵀ·R_j·C_j` (identity on the root's
/// parent side). Every FK position is unchanged; the local rotations are not.
pub fn rerig_axis_convention(
    skeleton: &Skeleton,
    motion: &RotationClip,
    conv: &AxisConvention,
) -> Result<(Skeleton, RotationClip)> {
    skeleton.topology()?;
    check_motion_shape(skeleton, motion.joints())?;
    let n = skeleton.joint_count();
    if conv.len() != n {
        return Err(Error::Shape(format!(
            "axis convention has {} entries for {n} joints",
            conv.len()
        )));
    }
    let parent_side = |j: usize| -> RotMatrix {
        match skeleton.parents[j] {
            Some(p) => conv.get(p).transpose(),
            None => RotMatrix::identity(),
        }
    };

    let mut rerigged = skeleton.clone();
    for j in 0..n {
        rerigged.offsets[j] = parent_side(j).rotate(&skeleton.offset(j)).into();
    }

    let mut out = motion.clone();
    let mask = motion.joint_mask();
    for t in 0..motion.frames() {
        for j in 0..n {
            let (left, right) = (parent_side(j), *conv.get(j));
            if mask[j] && left == RotMatrix::identity() && right == RotMatrix::identity() {
                // Re-encoding would re-normalize; keep the entry bit-exact.
                continue;
            }
            let r = if mask[j] {
                motion.matrix(t, j)?
            } else {
                RotMatrix::identity()
            };
            out.set(t, j, (left * r * right).to_rot6d());
        }
    }
    Ok((rerigged, out))
}

/// Swing/twist split of a convention change about each single-child bone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneTwist {
    pub joint: usize,
    pub child: usize,
    pub twist_deg: f64,
    pub swing_deg: f64,
}

/// For every joint with exactly one child and a non-degenerate bone, splits
/// `C_j` about the bone axis (expressed in the joint's original frame).
pub fn convention_bone_twists(skeleton: &Skeleton, conv: &AxisConvention) -> Result<Vec<BoneTwist>> {
    let topo = skeleton.topology()?;
    let mut out = Vec::new();
    for (j, children) in topo.children.iter().enumerate() {
        if children.len() != 1 {
            continue;
        }
        let c = children[0];
        let bone = skeleton.offset(c);
        if bone.norm() <= EPS_BONE_LENGTH {
            continue;
        }
        let axis = bone.normalize();
        let st = swing_twist(conv.get(j), &axis)?;
        out.push(BoneTwist {
            joint: j,
            child: c,
            twist_deg: st.twist_angle(&axis).to_degrees(),
            swing_deg: st.swing.angle().to_degrees(),
        });
    }
    Ok(out)
}
