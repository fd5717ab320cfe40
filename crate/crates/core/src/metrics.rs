//! Evaluation metrics, the four-term training loss, and the mixed-pose
//! schedule.
//!
//! Metrics report centimeters and degrees; losses use normalized units and
//! radians. Every reduction walks frames then joints in index order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rotation::{geodesic_angle, relative_rotation, RotMatrix};
use crate::skeleton::{PoseClip, RotationClip, CM_PER_UNIT};

fn check_pose_pair(pred: &PoseClip, gt: &PoseClip, mask: &[bool]) -> Result<()> {
    if pred.frames() != gt.frames() || pred.joints() != gt.joints() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.frames(),
            pred.joints(),
            gt.frames(),
            gt.joints()
        )));
    }
    check_mask(mask, pred.joints())
}

fn check_rot_pair(pred: &RotationClip, gt: &RotationClip, mask: &[bool]) -> Result<()> {
    if pred.frames() != gt.frames() || pred.joints() != gt.joints() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.frames(),
            pred.joints(),
            gt.frames(),
            gt.joints()
        )));
    }
    check_mask(mask, pred.joints())
}

fn check_mask(mask: &[bool], joints: usize) -> Result<()> {
    if mask.len() != joints {
        return Err(Error::Shape(format!(
            "mask has {} entries for {joints} joints",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

fn need_frames(frames: usize, needed: usize) -> Result<()> {
    if frames < needed {
        return Err(Error::TooFewFrames {
            needed,
            got: frames,
        });
    }
    Ok(())
}

/// Per-joint means; `None` for masked joints.
fn per_joint_position_error(
    pred: &PoseClip,
    gt: &PoseClip,
    mask: &[bool],
    velocity: bool,
) -> Vec<Option<f64>> {
    let start = usize::from(velocity);
    let count = (pred.frames() - start) as f64;
    (0..pred.joints())
        .map(|j| {
            if !mask[j] {
                return None;
            }
            let mut sum = 0.0;
            for t in start..pred.frames() {
                let d = if velocity {
                    (pred.at(t, j) - pred.at(t - 1, j)) - (gt.at(t, j) - gt.at(t - 1, j))
                } else {
                    pred.at(t, j) - gt.at(t, j)
                };
                sum += d.norm();
            }
            Some(sum / count)
        })
        .collect()
}

fn decode_all(clip: &RotationClip, mask: &[bool]) -> Result<Vec<RotMatrix>> {
    let mut out = Vec::with_capacity(clip.frames() * clip.joints());
    for t in 0..clip.frames() {
        for j in 0..clip.joints() {
            out.push(if mask[j] {
                clip.matrix(t, j)?
            } else {
                RotMatrix::identity()
            });
        }
    }
    Ok(out)
}

/// Per-joint mean geodesic (radians); `None` for masked joints.
fn per_joint_angle_error(
    pred: &RotationClip,
    gt: &RotationClip,
    mask: &[bool],
    velocity: bool,
) -> Result<Vec<Option<f64>>> {
    let a = decode_all(pred, mask)?;
    let b = decode_all(gt, mask)?;
    let n = pred.joints();
    let start = usize::from(velocity);
    let count = (pred.frames() - start) as f64;
    Ok((0..n)
        .map(|j| {
            if !mask[j] {
                return None;
            }
            let mut sum = 0.0;
            for t in start..pred.frames() {
                let i = t * n + j;
                sum += if velocity {
                    let dp = relative_rotation(&a[i - n], &a[i]);
                    let dg = relative_rotation(&b[i - n], &b[i]);
                    geodesic_angle(&dp, &dg)
                } else {
                    geodesic_angle(&a[i], &b[i])
                };
            }
            Some(sum / count)
        })
        .collect())
}

/// Mean over unmasked joints of per-joint means. Every joint contributes the
/// same number of frames, so this equals the flat mean over all entries.
fn masked_mean(per_joint: &[Option<f64>]) -> f64 {
    let (sum, n) = per_joint
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Mean per-joint position error in centimeters.
pub fn mpjpe(pred: &PoseClip, gt: &PoseClip, mask: &[bool]) -> Result<f64> {
    check_pose_pair(pred, gt, mask)?;
    Ok(masked_mean(&per_joint_position_error(pred, gt, mask, false)) * CM_PER_UNIT)
}

/// Mean per-joint velocity error in centimeters per frame.
pub fn mpjve(pred: &PoseClip, gt: &PoseClip, mask: &[bool]) -> Result<f64> {
    check_pose_pair(pred, gt, mask)?;
    need_frames(pred.frames(), 2)?;
    Ok(masked_mean(&per_joint_position_error(pred, gt, mask, true)) * CM_PER_UNIT)
}

/// Mean geodesic rotation error in degrees.
pub fn angle_error(pred: &RotationClip, gt: &RotationClip, mask: &[bool]) -> Result<f64> {
    check_rot_pair(pred, gt, mask)?;
    Ok(masked_mean(&per_joint_angle_error(pred, gt, mask, false)?).to_degrees())
}

/// Mean geodesic between predicted and true frame-to-frame relative
/// rotations, in degrees.
pub fn angular_velocity_error(pred: &RotationClip, gt: &RotationClip, mask: &[bool]) -> Result<f64> {
    check_rot_pair(pred, gt, mask)?;
    need_frames(pred.frames(), 2)?;
    Ok(masked_mean(&per_joint_angle_error(pred, gt, mask, true)?).to_degrees())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerJointMetrics {
    pub mpjpe_cm: Vec<Option<f64>>,
    pub mpjve_cm: Vec<Option<f64>>,
    pub ang_err_deg: Vec<Option<f64>>,
    pub angv_err_deg: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mpjpe_cm: f64,
    pub mpjve_cm: f64,
    pub ang_err_deg: f64,
    pub angv_err_deg: f64,
    pub per_joint: PerJointMetrics,
}

impl MetricReport {
    /// Flat `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "mpjpe_cm: {:.9}\nmpjve_cm: {:.9}\nang_err_deg: {:.9}\nangv_err_deg: {:.9}\n",
            self.mpjpe_cm, self.mpjve_cm, self.ang_err_deg, self.angv_err_deg
        );
        let fmt = |v: &Option<f64>| v.map_or_else(|| "masked".to_string(), |v| format!("{v:.9}"));
        for j in 0..self.per_joint.mpjpe_cm.len() {
            s.push_str(&format!(
                "joint {j}: mpjpe_cm={} mpjve_cm={} ang_err_deg={} angv_err_deg={}\n",
                fmt(&self.per_joint.mpjpe_cm[j]),
                fmt(&self.per_joint.mpjve_cm[j]),
                fmt(&self.per_joint.ang_err_deg[j]),
                fmt(&self.per_joint.angv_err_deg[j]),
            ));
        }
        s
    }
}

/// All four metrics plus per-joint breakdowns. Needs at least two frames.
pub fn evaluate(
    pred_pose: &PoseClip,
    gt_pose: &PoseClip,
    pred_rot: &RotationClip,
    gt_rot: &RotationClip,
    mask: &[bool],
) -> Result<MetricReport> {
    check_pose_pair(pred_pose, gt_pose, mask)?;
    check_rot_pair(pred_rot, gt_rot, mask)?;
    if pred_pose.frames() != pred_rot.frames() || pred_pose.joints() != pred_rot.joints() {
        return Err(Error::Shape("pose and rotation clips disagree".into()));
    }
    need_frames(pred_pose.frames(), 2)?;
    let cm = |v: Vec<Option<f64>>| -> Vec<Option<f64>> {
        v.into_iter().map(|x| x.map(|x| x * CM_PER_UNIT)).collect()
    };
    let deg = |v: Vec<Option<f64>>| -> Vec<Option<f64>> {
        v.into_iter().map(|x| x.map(f64::to_degrees)).collect()
    };
    let per_joint = PerJointMetrics {
        mpjpe_cm: cm(per_joint_position_error(pred_pose, gt_pose, mask, false)),
        mpjve_cm: cm(per_joint_position_error(pred_pose, gt_pose, mask, true)),
        ang_err_deg: deg(per_joint_angle_error(pred_rot, gt_rot, mask, false)?),
        angv_err_deg: deg(per_joint_angle_error(pred_rot, gt_rot, mask, true)?),
    };
    Ok(MetricReport {
        mpjpe_cm: masked_mean(&per_joint.mpjpe_cm),
        mpjve_cm: masked_mean(&per_joint.mpjve_cm),
        ang_err_deg: masked_mean(&per_joint.ang_err_deg),
        angv_err_deg: masked_mean(&per_joint.angv_err_deg),
        per_joint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pos: f64,
    pub rot: f64,
    pub rot_v: f64,
    pub root: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pos: 1.0,
            rot: 1.0,
            rot_v: 1.0,
            root: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for w in [self.pos, self.rot, self.rot_v, self.root] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(
                    "loss weights must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Loss terms in normalized units / radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub pos: f64,
    pub rot: f64,
    pub rot_v: f64,
    pub root: f64,
}

impl LossComponents {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.pos * self.pos + w.rot * self.rot + w.rot_v * self.rot_v + w.root * self.root
    }
}

/// `λ_pos·L_pos + λ_rot·L_rot + λ_rot_v·L_rot_v + λ_root·L_root`.
///
/// `L_rot_v` is zero for single-frame clips. `root` indexes the joint whose
/// rotation error is re-weighted; it must be unmasked.
pub fn total_loss(
    pred_pose: &PoseClip,
    gt_pose: &PoseClip,
    pred_rot: &RotationClip,
    gt_rot: &RotationClip,
    weights: &LossWeights,
    mask: &[bool],
    root: usize,
) -> Result<(f64, LossComponents)> {
    weights.validate()?;
    check_pose_pair(pred_pose, gt_pose, mask)?;
    check_rot_pair(pred_rot, gt_rot, mask)?;
    if root >= mask.len() || !mask[root] {
        return Err(Error::InvalidArgument(format!(
            "root joint {root} is out of range or masked"
        )));
    }
    let rot = per_joint_angle_error(pred_rot, gt_rot, mask, false)?;
    let components = LossComponents {
        pos: masked_mean(&per_joint_position_error(pred_pose, gt_pose, mask, false)),
        rot: masked_mean(&rot),
        rot_v: if pred_rot.frames() >= 2 {
            masked_mean(&per_joint_angle_error(pred_rot, gt_rot, mask, true)?)
        } else {
            0.0
        },
        root: rot[root].unwrap_or(0.0),
    };
    Ok((components.weighted_total(weights), components))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSchedule {
    pub p_start: f64,
    pub p_end: f64,
    pub warmup_epochs: u32,
}

impl Default for MixSchedule {
    fn default() -> Self {
        MixSchedule {
            p_start: 0.1,
            p_end: 1.0,
            warmup_epochs: 30,
        }
    }
}

impl MixSchedule {
    pub fn new(p_start: f64, p_end: f64, warmup_epochs: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_start) || !(0.0..=1.0).contains(&p_end) || p_start > p_end {
            return Err(Error::InvalidArgument(
                "schedule needs 0 <= p_start <= p_end <= 1".into(),
            ));
        }
        if warmup_epochs == 0 {
            return Err(Error::InvalidArgument("warm-up must be at least one epoch".into()));
        }
        Ok(MixSchedule {
            p_start,
            p_end,
            warmup_epochs,
        })
    }
}

/// Probability of feeding predicted (rather than ground-truth) poses to the
/// rotation stage at `epoch`: a linear ramp that saturates after warm-up.
pub fn mixed_pose_probability(epoch: u32, schedule: &MixSchedule) -> f64 {
    let progress = (epoch as f64 / schedule.warmup_epochs as f64).min(1.0);
    schedule.p_start + (schedule.p_end - schedule.p_start) * progress
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{RotMatrix, UnitQuat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng, t: usize, j: usize) -> PoseClip {
        let v = (0..t * j)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        PoseClip::new(t, j, v, vec![true; j]).unwrap()
    }

    fn random_rot(rng: &mut impl Rng, t: usize, j: usize) -> RotationClip {
        let mut clip = RotationClip::identity(t, j);
        for f in 0..t {
            for k in 0..j {
                let q = UnitQuat::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .unwrap();
                clip.set(f, k, q.to_matrix().to_rot6d());
            }
        }
        clip
    }

    fn half_mask(rng: &mut impl Rng, j: usize) -> Vec<bool> {
        let mut m: Vec<bool> = (0..j).map(|_| rng.random_bool(0.5)).collect();
        m[0] = true;
        m
    }

    #[test]
    fn zero_error_on_identical_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng, 4, 5);
        let r = random_rot(&mut rng, 4, 5);
        let m = vec![true; 5];
        assert_eq!(mpjpe(&p, &p, &m).unwrap(), 0.0);
        assert_eq!(mpjve(&p, &p, &m).unwrap(), 0.0);
        assert_eq!(angle_error(&r, &r, &m).unwrap(), 0.0);
        assert_eq!(angular_velocity_error(&r, &r, &m).unwrap(), 0.0);
        let (total, c) = total_loss(&p, &p, &r, &r, &LossWeights::default(), &m, 0).unwrap();
        assert_eq!(total, 0.0);
        assert_eq!(c, LossComponents::default());
    }

    #[test]
    fn fixed_offset_is_one_centimeter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_pose(&mut rng, 3, 4);
        let pred = gt.map_positions(|p| p + crate::rotation::Vec3::new(0.02, 0.0, 0.0));
        let m = vec![true; 4];
        assert!((mpjpe(&pred, &gt, &m).unwrap() - 1.0).abs() < 1e-12);
        // constant bias cancels in velocities
        assert!(mpjve(&pred, &gt, &m).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_rotation_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_rot(&mut rng, 3, 4);
        let off = RotMatrix::rz(10f64.to_radians());
        let mut pred = gt.clone();
        for t in 0..3 {
            for j in 0..4 {
                pred.set(t, j, (gt.matrix(t, j).unwrap() * off).to_rot6d());
            }
        }
        let m = vec![true; 4];
        assert!((angle_error(&pred, &gt, &m).unwrap() - 10.0).abs() < 1e-9);

        // constant left factor cancels in relative rotations
        let mut left = gt.clone();
        for t in 0..3 {
            for j in 0..4 {
                left.set(t, j, (off * gt.matrix(t, j).unwrap()).to_rot6d());
            }
        }
        assert!(angular_velocity_error(&left, &gt, &m).unwrap() < 1e-9);
    }

    #[test]
    fn metrics_match_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (t, j) = (rng.random_range(2..6), rng.random_range(1..8));
            let m = half_mask(&mut rng, j);
            let (p, g) = (random_pose(&mut rng, t, j), random_pose(&mut rng, t, j));
            let (rp, rg) = (random_rot(&mut rng, t, j), random_rot(&mut rng, t, j));

            let (mut sp, mut sv, mut sa, mut sav, mut n, mut nv) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for f in 0..t {
                for k in (0..j).filter(|&k| m[k]) {
                    sp += (p.at(f, k) - g.at(f, k)).norm();
                    let qa = rp.matrix(f, k).unwrap().to_quat();
                    let qb = rg.matrix(f, k).unwrap().to_quat();
                    sa += 2.0 * qa.dot(&qb).abs().min(1.0).acos();
                    n += 1.0;
                    if f > 0 {
                        let vp = p.at(f, k) - p.at(f - 1, k);
                        let vg = g.at(f, k) - g.at(f - 1, k);
                        sv += (vp - vg).norm();
                        let dp = rp.matrix(f - 1, k).unwrap().transpose() * rp.matrix(f, k).unwrap();
                        let dg = rg.matrix(f - 1, k).unwrap().transpose() * rg.matrix(f, k).unwrap();
                        sav += 2.0 * dp.to_quat().dot(&dg.to_quat()).abs().min(1.0).acos();
                        nv += 1.0;
                    }
                }
            }
            assert!((mpjpe(&p, &g, &m).unwrap() - sp / n * 50.0).abs() < 1e-9);
            assert!((mpjve(&p, &g, &m).unwrap() - sv / nv * 50.0).abs() < 1e-9);
            assert!((angle_error(&rp, &rg, &m).unwrap() - (sa / n).to_degrees()).abs() < 1e-9);
            assert!(
                (angular_velocity_error(&rp, &rg, &m).unwrap() - (sav / nv).to_degrees()).abs()
                    < 1e-9
            );
        }
    }

    #[test]
    fn metric_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_pose(&mut rng, 1, 3);
        let b = random_pose(&mut rng, 1, 4);
        assert!(matches!(mpjpe(&a, &b, &[true; 3]), Err(Error::Shape(_))));
        assert!(matches!(mpjpe(&a, &a, &[false; 3]), Err(Error::EmptyMask)));
        assert!(matches!(
            mpjve(&a, &a, &[true; 3]),
            Err(Error::TooFewFrames { needed: 2, got: 1 })
        ));
        let r = random_rot(&mut rng, 1, 3);
        assert!(angular_velocity_error(&r, &r, &[true; 3]).is_err());
        let mut bad = r.clone();
        bad.set(0, 1, crate::rotation::Rot6D([0.0; 6]));
        assert!(matches!(
            angle_error(&bad, &r, &[true; 3]),
            Err(Error::Decode { frame: 0, joint: 1, .. })
        ));
    }

    #[test]
    fn loss_is_weighted_sum_of_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = LossWeights::default();
        for _ in 0..20 {
            let (t, j) = (rng.random_range(1..5), rng.random_range(1..6));
            let m = half_mask(&mut rng, j);
            let (p, g) = (random_pose(&mut rng, t, j), random_pose(&mut rng, t, j));
            let (rp, rg) = (random_rot(&mut rng, t, j), random_rot(&mut rng, t, j));
            let (total, c) = total_loss(&p, &g, &rp, &rg, &w, &m, 0).unwrap();
            let pos = mpjpe(&p, &g, &m).unwrap() / 50.0;
            let rot = angle_error(&rp, &rg, &m).unwrap().to_radians();
            let rot_v = if t >= 2 {
                angular_velocity_error(&rp, &rg, &m).unwrap().to_radians()
            } else {
                0.0
            };
            let root_mask: Vec<bool> = (0..j).map(|k| k == 0).collect();
            let root = angle_error(&rp, &rg, &root_mask).unwrap().to_radians();
            assert!((c.pos - pos).abs() < 1e-12);
            assert!((c.rot - rot).abs() < 1e-12);
            assert!((c.rot_v - rot_v).abs() < 1e-12);
            assert!((c.root - root).abs() < 1e-12);
            assert!((total - (pos + rot + rot_v + 0.1 * root)).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_values() {
        let s = MixSchedule::default();
        assert_eq!(mixed_pose_probability(0, &s), 0.1);
        assert_eq!(mixed_pose_probability(30, &s), 1.0);
        assert_eq!(mixed_pose_probability(100, &s), 1.0);
        assert!((mixed_pose_probability(15, &s) - 0.55).abs() < 1e-15);
        let mut prev = 0.0;
        for e in 0..60 {
            let p = mixed_pose_probability(e, &s);
            assert!(p >= prev);
            prev = p;
        }
        assert!(MixSchedule::new(0.5, 0.2, 10).is_err());
        assert!(MixSchedule::new(0.1, 1.0, 0).is_err());
    }
}
