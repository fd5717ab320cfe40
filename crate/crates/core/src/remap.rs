//! Whole-rig changes of world axes and units.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::rotation::{RotMatrix, Vec3};
use crate::skeleton::{PoseClip, RotationClip, Skeleton};

/// A signed axis permutation with determinant +1, written as the source of
/// each new axis: `x,-z,y` maps new x = old x, new y = -old z, new z = old y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRemap {
    /// `(source axis, sign)` for each new axis.
    axes: [(usize, f64); 3],
}

impl AxisRemap {
    pub const IDENTITY: AxisRemap = AxisRemap {
        axes: [(0, 1.0), (1, 1.0), (2, 1.0)],
    };

    fn from_axes(axes: [(usize, f64); 3]) -> Result<Self> {
        let r = AxisRemap { axes };
        let det = r.matrix().determinant();
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "axis remap '{r}' is not a rotation (determinant {det})"
            )));
        }
        Ok(r)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for (row, &(src, sign)) in self.axes.iter().enumerate() {
            m[(row, src)] = sign;
        }
        m
    }

    pub fn rotation(&self) -> RotMatrix {
        RotMatrix::new(self.matrix()).expect("signed permutation with det +1")
    }

    pub fn inverse(&self) -> Self {
        let mut axes = [(0, 1.0); 3];
        for (row, &(src, sign)) in self.axes.iter().enumerate() {
            axes[src] = (row, sign);
        }
        AxisRemap { axes }
    }

    pub fn apply_vec(&self, v: [f64; 3]) -> [f64; 3] {
        self.axes.map(|(src, sign)| sign * v[src])
    }
}

impl FromStr for AxisRemap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad axis remap '{s}' (expected e.g. x,-z,y)"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut axes = [(0, 1.0); 3];
        let mut seen = [false; 3];
        for (i, p) in parts.iter().enumerate() {
            let (sign, name) = match p.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, p.strip_prefix('+').unwrap_or(p)),
            };
            let axis = match name.to_ascii_lowercase().as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => return Err(bad()),
            };
            if seen[axis] {
                return Err(bad());
            }
            seen[axis] = true;
            axes[i] = (axis, sign);
        }
        Self::from_axes(axes)
    }
}

impl fmt::Display for AxisRemap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .axes
            .iter()
            .map(|&(src, sign)| format!("{}{}", if sign < 0.0 { "-" } else { "" }, ["x", "y", "z"][src]))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Re-expresses a rig in remapped world axes: offsets and the root track are
/// rotated by `M` and every local rotation becomes `M R Mᵀ`, so FK positions
/// come out as `M p`.
pub fn remap_rig(skeleton: &Skeleton, clip: &RotationClip, remap: &AxisRemap) -> Result<(Skeleton, RotationClip)> {
    let m = remap.rotation();
    let mt = m.transpose();
    let mut s = skeleton.clone();
    for o in &mut s.offsets {
        *o = remap.apply_vec(*o);
    }
    let mut out = clip.clone();
    for t in 0..clip.frames() {
        for j in 0..clip.joints() {
            if clip.joint_mask()[j] {
                let r = clip.matrix(t, j)?;
                out.set(t, j, (m * r * mt).to_rot6d());
            }
        }
        out.set_root_translation(t, remap.apply_vec(clip.root_translation()[t]));
    }
    Ok((s, out))
}

pub fn remap_pose(pose: &PoseClip, remap: &AxisRemap) -> PoseClip {
    let m = remap.matrix();
    pose.map_positions(|p| m * p)
}

/// Multiplies offsets and root translation by `scale`.
pub fn scale_rig(skeleton: &Skeleton, clip: &RotationClip, scale: f64) -> Result<(Skeleton, RotationClip)> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("unit scale {scale} must be positive")));
    }
    let mut s = skeleton.clone();
    for o in &mut s.offsets {
        *o = o.map(|v| v * scale);
    }
    let mut out = clip.clone();
    for t in 0..clip.frames() {
        out.set_root_translation(t, clip.root_translation()[t].map(|v| v * scale));
    }
    Ok((s, out))
}

pub fn scale_pose(pose: &PoseClip, scale: f64) -> PoseClip {
    pose.map_positions(|p: Vec3| p * scale)
}
