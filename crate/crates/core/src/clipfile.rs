//! JSON clip and reference files.
//!
//! A clip file holds a skeleton plus any of: local rotations (6D) with a root
//! translation track, joint positions, and per-joint masks. Parents use `-1`
//! for the root. Arrays are nested frame → joint → component.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::Rot6D;
use crate::skeleton::{PoseClip, ReferenceFrame, RotationClip, Skeleton};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonJson {
    parents: Vec<i64>,
    offsets: Vec<[f64; 3]>,
    #[serde(default)]
    names: Option<Vec<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MasksJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joint_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position_static: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_static: Option<Vec<bool>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipJson {
    skeleton: SkeletonJson,
    frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rot6d: Option<Vec<Vec<[f64; 6]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_translation: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<Vec<[f64; 3]>>>,
    #[serde(default)]
    masks: MasksJson,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceJson {
    ref_positions: Vec<[f64; 3]>,
    ref_rot6d: Vec<[f64; 6]>,
    ref_root_translation: [f64; 3],
}

/// Contents of a clip file. At least one of `rotations` and `positions` is
/// present; both share the skeleton's joint mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDocument {
    pub skeleton: Skeleton,
    pub rotations: Option<RotationClip>,
    pub positions: Option<PoseClip>,
}

impl ClipDocument {
    pub fn frames(&self) -> usize {
        self.rotations
            .as_ref()
            .map(RotationClip::frames)
            .or(self.positions.as_ref().map(PoseClip::frames))
            .unwrap_or(0)
    }

    pub fn joint_mask(&self) -> Vec<bool> {
        self.rotations
            .as_ref()
            .map(|r| r.joint_mask().to_vec())
            .or(self.positions.as_ref().map(|p| p.joint_mask().to_vec()))
            .unwrap_or_else(|| vec![true; self.skeleton.joint_count()])
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ClipFormat(msg.into())
}

fn check_len<T>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(format_err(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

/// Parses a clip. The skeleton is not validated here, so a file with a
/// malformed hierarchy still loads and can be reported on.
pub fn parse_clip(text: &str) -> Result<ClipDocument> {
    let raw: ClipJson = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
    let n = raw.skeleton.parents.len();
    let parents = raw
        .skeleton
        .parents
        .iter()
        .map(|&p| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(format_err(format!("parent index {p} is invalid"))),
        })
        .collect::<Result<Vec<_>>>()?;
    check_len(&raw.skeleton.offsets, n, "skeleton.offsets")?;
    let names = match raw.skeleton.names {
        Some(names) => {
            check_len(&names, n, "skeleton.names")?;
            names
        }
        None => (0..n).map(|j| format!("joint{j}")).collect(),
    };
    let mut skeleton = Skeleton::new(parents, raw.skeleton.offsets, names);
    if let Some(ps) = raw.masks.position_static {
        check_len(&ps, n, "masks.position_static")?;
        skeleton.position_static = ps;
    }
    if let Some(rs) = raw.masks.rotation_static {
        check_len(&rs, n, "masks.rotation_static")?;
        skeleton.rotation_static = rs;
    }
    let joint_mask = match raw.masks.joint_mask {
        Some(m) => {
            check_len(&m, n, "masks.joint_mask")?;
            m
        }
        None => vec![true; n],
    };
    let frames = raw.frames;
    if frames == 0 {
        return Err(format_err("frames must be at least 1"));
    }

    let rotations = match (raw.rot6d, raw.root_translation) {
        (Some(rot), Some(root)) => {
            check_len(&rot, frames, "rot6d")?;
            check_len(&root, frames, "root_translation")?;
            let mut flat = Vec::with_capacity(frames * n);
            for (t, row) in rot.into_iter().enumerate() {
                check_len(&row, n, &format!("rot6d[{t}]"))?;
                flat.extend(row.into_iter().map(Rot6D));
            }
            Some(RotationClip::new(frames, n, flat, root, joint_mask.clone())?)
        }
        (None, None) => None,
        (Some(_), None) => return Err(format_err("rot6d given without root_translation")),
        (None, Some(_)) => return Err(format_err("root_translation given without rot6d")),
    };
    let positions = match raw.positions {
        Some(pos) => {
            check_len(&pos, frames, "positions")?;
            let mut flat = Vec::with_capacity(frames * n);
            for (t, row) in pos.into_iter().enumerate() {
                check_len(&row, n, &format!("positions[{t}]"))?;
                flat.extend(row);
            }
            Some(PoseClip::new(frames, n, flat, joint_mask)?)
        }
        None => None,
    };
    if rotations.is_none() && positions.is_none() {
        return Err(format_err("clip has neither rot6d nor positions"));
    }
    Ok(ClipDocument {
        skeleton,
        rotations,
        positions,
    })
}

pub fn clip_to_json(doc: &ClipDocument) -> Result<String> {
    let s = &doc.skeleton;
    let n = s.joint_count();
    let frames = doc.frames();
    for clip_joints in [
        doc.rotations.as_ref().map(RotationClip::joints),
        doc.positions.as_ref().map(PoseClip::joints),
    ]
    .into_iter()
    .flatten()
    {
        if clip_joints != n {
            return Err(Error::Shape(format!("skeleton has {n} joints, clip has {clip_joints}")));
        }
    }
    if let (Some(r), Some(p)) = (&doc.rotations, &doc.positions) {
        if r.frames() != p.frames() {
            return Err(Error::Shape("rotation and position clips differ in length".into()));
        }
    }
    let joint_mask = doc.joint_mask();
    let raw = ClipJson {
        skeleton: SkeletonJson {
            parents: s.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            offsets: s.offsets.clone(),
            names: Some(s.names.clone()),
        },
        frames,
        rot6d: doc.rotations.as_ref().map(|r| {
            (0..r.frames())
                .map(|t| r.frame(t).iter().map(|x| x.0).collect())
                .collect()
        }),
        root_translation: doc.rotations.as_ref().map(|r| r.root_translation().to_vec()),
        positions: doc
            .positions
            .as_ref()
            .map(|p| (0..p.frames()).map(|t| p.frame(t).to_vec()).collect()),
        masks: MasksJson {
            joint_mask: Some(joint_mask),
            position_static: Some(s.position_static.clone()),
            rotation_static: Some(s.rotation_static.clone()),
        },
    };
    let mut text = serde_json::to_string_pretty(&raw).map_err(|e| format_err(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn parse_reference(text: &str) -> Result<ReferenceFrame> {
    let raw: ReferenceJson = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
    check_len(&raw.ref_rot6d, raw.ref_positions.len(), "ref_rot6d")?;
    Ok(ReferenceFrame {
        ref_positions: raw.ref_positions,
        ref_rot6d: raw.ref_rot6d.into_iter().map(Rot6D).collect(),
        ref_root_translation: raw.ref_root_translation,
    })
}

pub fn reference_to_json(r: &ReferenceFrame) -> Result<String> {
    let raw = ReferenceJson {
        ref_positions: r.ref_positions.clone(),
        ref_rot6d: r.ref_rot6d.iter().map(|x| x.0).collect(),
        ref_root_translation: r.ref_root_translation,
    };
    let mut text = serde_json::to_string_pretty(&raw).map_err(|e| format_err(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// True if the text looks like a standalone reference file rather than a
/// clip.
pub fn is_reference_json(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .map(|v| v.get("ref_rot6d").is_some())
        .unwrap_or(false)
}

pub fn read_clip(path: &Path) -> Result<ClipDocument> {
    parse_clip(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
}

pub fn write_clip(path: &Path, doc: &ClipDocument) -> Result<()> {
    write_atomic(path, clip_to_json(doc)?.as_bytes())
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("'{}' is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::file(path, e))
}
