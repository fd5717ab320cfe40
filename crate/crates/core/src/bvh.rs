//! BVH reading, writing, and conversion to the skeleton/rotation model.
//!
//! Rotation channels are composed as intrinsic rotations in the order they
//! are listed, so `Zrotation Xrotation Yrotation` means `Rz · Rx · Ry`.
//! Values are degrees. End Sites become zero-channel leaf joints named
//! `<parent>_end` so the last bone of each limb keeps its direction.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::rotation::{RotMatrix, Vec3};
use crate::skeleton::{RotationClip, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn axis(self) -> usize {
        match self {
            Channel::Xposition | Channel::Xrotation => 0,
            Channel::Yposition | Channel::Yrotation => 1,
            Channel::Zposition | Channel::Zrotation => 2,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(
            self,
            Channel::Xrotation | Channel::Yrotation | Channel::Zrotation
        )
    }

    fn rotation(axis: usize) -> Self {
        [Channel::Xrotation, Channel::Yrotation, Channel::Zrotation][axis]
    }

    fn position(axis: usize) -> Self {
        [Channel::Xposition, Channel::Yposition, Channel::Zposition][axis]
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        };
        f.write_str(s)
    }
}

impl FromStr for Channel {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub channels: Vec<Channel>,
    pub end_site: Option<[f64; 3]>,
}

/// Joints are stored in file (depth-first) order; motion rows hold every
/// joint's channels in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct BvhDocument {
    pub joints: Vec<BvhJoint>,
    pub frame_count: usize,
    pub frame_time: f64,
    pub motion: Vec<Vec<f64>>,
}

impl BvhDocument {
    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    pub fn validate(&self) -> std::result::Result<(), BvhError> {
        let invalid = |m: String| Err(BvhError::Invalid(m));
        if self.joints.is_empty() {
            return invalid("document has no joints".into());
        }
        if self.joints[0].parent.is_some() {
            return invalid("first joint must be the root".into());
        }
        for (i, j) in self.joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {}
                _ => return invalid(format!("joint {i} must have an earlier parent")),
            }
        }
        for j in &self.joints {
            if j.name.trim().is_empty() || j.name.contains(['{', '}', '\n']) {
                return invalid(format!("joint name {:?} cannot be written", j.name));
            }
            if j.channels.len() > 6 {
                return invalid(format!("joint {} has more than 6 channels", j.name));
            }
        }
        if self.motion.len() != self.frame_count {
            return invalid(format!(
                "frame count {} but {} motion rows",
                self.frame_count,
                self.motion.len()
            ));
        }
        let width = self.channel_count();
        for (r, row) in self.motion.iter().enumerate() {
            if row.len() != width {
                return invalid(format!("row {r} has {} values, expected {width}", row.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntaxError {
    #[error("expected {expected}, found '{found}'")]
    Expected { expected: String, found: String },
    #[error("unexpected end of input, expected {expected}")]
    UnexpectedEof { expected: String },
    #[error("invalid number '{0}'")]
    BadNumber(String),
    #[error("unknown channel '{0}'")]
    UnknownChannel(String),
    #[error("channel count {0} is not in 0..=6")]
    BadChannelCount(String),
    #[error("motion row {row} has {found} values, expected {expected}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("header declares {declared} frames but {found} rows follow")]
    FrameCountMismatch { declared: usize, found: usize },
    #[error("block for joint '{joint}' is never closed")]
    UnterminatedBlock { joint: String },
    #[error("duplicate {0}")]
    Duplicate(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvhError {
    #[error("line {line}, column {column}: {kind}")]
    Syntax {
        line: usize,
        column: usize,
        kind: SyntaxError,
    },
    #[error("invalid BVH document: {0}")]
    Invalid(String),
}

impl BvhError {
    /// `(line, column)` of a syntax error.
    pub fn position(&self) -> Option<(usize, usize)> {
        match self {
            BvhError::Syntax { line, column, .. } => Some((*line, *column)),
            BvhError::Invalid(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

/// Whitespace-separated tokens; braces are always their own token and a
/// colon ends a token (`Frames:10` is `Frames:` `10`).
fn tokenize(text: &str) -> Vec<Token<'_>> {
    fn push<'a>(out: &mut Vec<Token<'a>>, line: &'a str, li: usize, s: usize, e: usize) {
        out.push(Token {
            text: &line[s..e],
            line: li + 1,
            column: line[..s].chars().count() + 1,
        });
    }
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let mut start: Option<usize> = None;
        for (i, c) in line.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    push(&mut out, line, li, s, i);
                }
            } else if c == '{' || c == '}' {
                if let Some(s) = start.take() {
                    push(&mut out, line, li, s, i);
                }
                push(&mut out, line, li, i, i + 1);
            } else if c == ':' {
                let s = start.take().unwrap_or(i);
                push(&mut out, line, li, s, i + 1);
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            push(&mut out, line, li, s, line.len());
        }
    }
    out
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn err_at(&self, tok: Option<&Token<'_>>, kind: SyntaxError) -> BvhError {
        let (line, column) = tok.map_or((self.last_line + 1, 1), |t| (t.line, t.column));
        BvhError::Syntax { line, column, kind }
    }

    fn next(&mut self, expected: &str) -> std::result::Result<Token<'a>, BvhError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.err_at(
                None,
                SyntaxError::UnexpectedEof {
                    expected: expected.to_string(),
                },
            )),
        }
    }

    fn expect(&mut self, word: &str) -> std::result::Result<Token<'a>, BvhError> {
        let t = self.next(&format!("'{word}'"))?;
        if t.text != word {
            return Err(self.err_at(
                Some(&t),
                SyntaxError::Expected {
                    expected: format!("'{word}'"),
                    found: t.text.to_string(),
                },
            ));
        }
        Ok(t)
    }

    fn number(&mut self) -> std::result::Result<f64, BvhError> {
        let t = self.next("a number")?;
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err_at(Some(&t), SyntaxError::BadNumber(t.text.to_string()))),
        }
    }

    fn vec3(&mut self) -> std::result::Result<[f64; 3], BvhError> {
        Ok([self.number()?, self.number()?, self.number()?])
    }

    /// Joint names run to the end of the line or the opening brace.
    fn name(&mut self, keyword: &Token<'_>) -> std::result::Result<String, BvhError> {
        let mut parts = Vec::new();
        while let Some(t) = self.peek() {
            if t.line != keyword.line || t.text == "{" {
                break;
            }
            parts.push(t.text);
            self.pos += 1;
        }
        if parts.is_empty() {
            let found = self.peek().map(|t| t.text.to_string()).unwrap_or_default();
            return Err(self.err_at(
                self.peek(),
                SyntaxError::Expected {
                    expected: "a joint name".into(),
                    found,
                },
            ));
        }
        Ok(parts.join(" "))
    }

    fn joint(
        &mut self,
        keyword: Token<'a>,
        parent: Option<usize>,
        joints: &mut Vec<BvhJoint>,
    ) -> std::result::Result<(), BvhError> {
        let name = self.name(&keyword)?;
        self.expect("{")?;
        let index = joints.len();
        joints.push(BvhJoint {
            name: name.clone(),
            parent,
            offset: [0.0; 3],
            channels: Vec::new(),
            end_site: None,
        });
        let mut seen_offset = false;
        let mut seen_channels = false;
        loop {
            let Some(t) = self.peek().cloned() else {
                return Err(BvhError::Syntax {
                    line: keyword.line,
                    column: keyword.column,
                    kind: SyntaxError::UnterminatedBlock { joint: name },
                });
            };
            self.pos += 1;
            match t.text {
                "OFFSET" => {
                    if seen_offset {
                        return Err(self.err_at(Some(&t), SyntaxError::Duplicate("OFFSET")));
                    }
                    seen_offset = true;
                    joints[index].offset = self.vec3()?;
                }
                "CHANNELS" => {
                    if seen_channels {
                        return Err(self.err_at(Some(&t), SyntaxError::Duplicate("CHANNELS")));
                    }
                    seen_channels = true;
                    let ct = self.next("a channel count")?;
                    let count = match ct.text.parse::<usize>() {
                        Ok(n) if n <= 6 => n,
                        _ => {
                            return Err(self.err_at(
                                Some(&ct),
                                SyntaxError::BadChannelCount(ct.text.to_string()),
                            ))
                        }
                    };
                    for _ in 0..count {
                        let c = self.next("a channel name")?;
                        let ch = c.text.parse::<Channel>().map_err(|_| {
                            self.err_at(Some(&c), SyntaxError::UnknownChannel(c.text.to_string()))
                        })?;
                        joints[index].channels.push(ch);
                    }
                }
                "JOINT" => {
                    if !seen_offset {
                        return Err(self.err_at(
                            Some(&t),
                            SyntaxError::Expected {
                                expected: "'OFFSET'".into(),
                                found: t.text.to_string(),
                            },
                        ));
                    }
                    self.joint(t, Some(index), joints)?;
                }
                "End" => {
                    self.expect("Site")?;
                    self.expect("{")?;
                    self.expect("OFFSET")?;
                    let site = self.vec3()?;
                    self.expect("}")?;
                    if joints[index].end_site.is_some() {
                        return Err(self.err_at(Some(&t), SyntaxError::Duplicate("End Site")));
                    }
                    joints[index].end_site = Some(site);
                }
                "}" => {
                    if !seen_offset {
                        return Err(self.err_at(
                            Some(&t),
                            SyntaxError::Expected {
                                expected: "'OFFSET'".into(),
                                found: "}".into(),
                            },
                        ));
                    }
                    return Ok(());
                }
                other => {
                    return Err(self.err_at(
                        Some(&t),
                        SyntaxError::Expected {
                            expected: "OFFSET, CHANNELS, JOINT, End Site or '}'".into(),
                            found: other.to_string(),
                        },
                    ))
                }
            }
        }
    }
}

/// Parses a BVH document. Every failure carries a line and column.
pub fn parse_bvh(text: &str) -> std::result::Result<BvhDocument, BvhError> {
    let tokens = tokenize(text);
    let last_line = text.lines().count();
    let mut p = Parser {
        tokens,
        pos: 0,
        last_line,
    };
    p.expect("HIERARCHY")?;
    let root = p.expect("ROOT")?;
    let mut joints = Vec::new();
    p.joint(root, None, &mut joints)?;
    p.expect("MOTION")?;
    p.expect("Frames:")?;
    let ft = p.next("a frame count")?;
    let frame_count = ft
        .text
        .parse::<usize>()
        .map_err(|_| p.err_at(Some(&ft), SyntaxError::BadNumber(ft.text.to_string())))?;
    p.expect("Frame")?;
    p.expect("Time:")?;
    let frame_time = p.number()?;

    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut motion: Vec<Vec<f64>> = Vec::new();
    while let Some(first) = p.peek().cloned() {
        let mut row = Vec::with_capacity(width);
        while let Some(t) = p.peek().cloned() {
            if t.line != first.line {
                break;
            }
            p.pos += 1;
            match t.text.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => return Err(p.err_at(Some(&t), SyntaxError::BadNumber(t.text.to_string()))),
            }
        }
        if row.len() != width {
            return Err(BvhError::Syntax {
                line: first.line,
                column: first.column,
                kind: SyntaxError::RowArity {
                    row: motion.len(),
                    expected: width,
                    found: row.len(),
                },
            });
        }
        motion.push(row);
    }
    if width == 0 && motion.is_empty() {
        motion = vec![Vec::new(); frame_count];
    }
    if motion.len() != frame_count {
        return Err(p.err_at(
            None,
            SyntaxError::FrameCountMismatch {
                declared: frame_count,
                found: motion.len(),
            },
        ));
    }
    Ok(BvhDocument {
        joints,
        frame_count,
        frame_time,
        motion,
    })
}

/// Tab-indented hierarchy, six-decimal fixed-point numbers.
pub fn write_bvh(doc: &BvhDocument) -> std::result::Result<String, BvhError> {
    doc.validate()?;
    let mut children = vec![Vec::new(); doc.joints.len()];
    for (i, j) in doc.joints.iter().enumerate() {
        if let Some(p) = j.parent {
            children[p].push(i);
        }
    }
    let mut out = String::from("HIERARCHY\n");
    write_joint(doc, &children, 0, 0, &mut out);
    out.push_str("MOTION\n");
    out.push_str(&format!("Frames: {}\n", doc.frame_count));
    out.push_str(&format!("Frame Time: {:.6}\n", doc.frame_time));
    for row in &doc.motion {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn write_joint(doc: &BvhDocument, children: &[Vec<usize>], i: usize, depth: usize, out: &mut String) {
    let pad = "\t".repeat(depth);
    let j = &doc.joints[i];
    let keyword = if j.parent.is_none() { "ROOT" } else { "JOINT" };
    let v3 = |v: &[f64; 3]| format!("{:.6} {:.6} {:.6}", v[0], v[1], v[2]);
    out.push_str(&format!("{pad}{keyword} {}\n{pad}{{\n", j.name));
    out.push_str(&format!("{pad}\tOFFSET {}\n", v3(&j.offset)));
    out.push_str(&format!("{pad}\tCHANNELS {}", j.channels.len()));
    for c in &j.channels {
        out.push_str(&format!(" {c}"));
    }
    out.push('\n');
    for &c in &children[i] {
        write_joint(doc, children, c, depth + 1, out);
    }
    if let Some(site) = &j.end_site {
        out.push_str(&format!(
            "{pad}\tEnd Site\n{pad}\t{{\n{pad}\t\tOFFSET {}\n{pad}\t}}\n",
            v3(site)
        ));
    }
    out.push_str(&format!("{pad}}}\n"));
}

/// A permutation of the three rotation axes, listed in composition order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EulerOrder(pub [usize; 3]);

impl EulerOrder {
    pub const ZXY: EulerOrder = EulerOrder([2, 0, 1]);
    pub const XYZ: EulerOrder = EulerOrder([0, 1, 2]);

    pub const ALL: [EulerOrder; 6] = [
        EulerOrder([0, 1, 2]),
        EulerOrder([0, 2, 1]),
        EulerOrder([1, 0, 2]),
        EulerOrder([1, 2, 0]),
        EulerOrder([2, 0, 1]),
        EulerOrder([2, 1, 0]),
    ];

    /// `+1` for cyclic orders (XYZ, YZX, ZXY), `-1` otherwise.
    fn parity(&self) -> f64 {
        let [i, j, _] = self.0;
        if (i + 1) % 3 == j {
            1.0
        } else {
            -1.0
        }
    }

    pub fn channels(&self) -> [Channel; 3] {
        self.0.map(Channel::rotation)
    }
}

impl FromStr for EulerOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let axes: Vec<usize> = s
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'X' => Ok(0),
                'Y' => Ok(1),
                'Z' => Ok(2),
                _ => Err(Error::InvalidArgument(format!("bad channel order '{s}'"))),
            })
            .collect::<Result<_>>()?;
        if axes.len() != 3 || axes[0] == axes[1] || axes[1] == axes[2] || axes[0] == axes[2] {
            return Err(Error::InvalidArgument(format!(
                "channel order '{s}' must be a permutation of XYZ"
            )));
        }
        Ok(EulerOrder([axes[0], axes[1], axes[2]]))
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            f.write_str(["X", "Y", "Z"][a])?;
        }
        Ok(())
    }
}

fn axis_rotation(axis: usize, degrees: f64) -> RotMatrix {
    let mut v = Vec3::zeros();
    v[axis] = 1.0;
    RotMatrix::from_axis_angle(&v, degrees.to_radians())
}

/// `R_a(θ1) · R_b(θ2) · R_c(θ3)` for order `(a, b, c)`, angles in degrees.
pub fn euler_to_matrix(order: EulerOrder, degrees: [f64; 3]) -> RotMatrix {
    let [a, b, c] = order.0;
    axis_rotation(a, degrees[0]) * axis_rotation(b, degrees[1]) * axis_rotation(c, degrees[2])
}

/// Inverse of [`euler_to_matrix`] on the branch with the middle angle in
/// `[-90°, 90°]`. At gimbal lock the third angle is zeroed and the flag is
/// set.
pub fn matrix_to_euler(order: EulerOrder, r: &RotMatrix) -> ([f64; 3], bool) {
    let m = r.matrix();
    let [i, j, k] = order.0;
    let s = order.parity();
    let sin_b = (s * m[(i, k)]).clamp(-1.0, 1.0);
    let cos_b = (m[(i, i)].powi(2) + m[(i, j)].powi(2)).sqrt();
    let b = sin_b.atan2(cos_b);
    if cos_b > 1e-9 {
        let a = (-s * m[(j, k)]).atan2(m[(k, k)]);
        let c = (-s * m[(i, j)]).atan2(m[(i, i)]);
        ([a.to_degrees(), b.to_degrees(), c.to_degrees()], false)
    } else {
        let rest = *r.matrix() * axis_rotation(j, b.to_degrees()).matrix().transpose();
        let (j2, k2) = ((i + 1) % 3, (i + 2) % 3);
        let a = rest[(k2, j2)].atan2(rest[(j2, j2)]);
        ([a.to_degrees(), b.to_degrees(), 0.0], true)
    }
}

struct JointChannels {
    rotation: Option<(EulerOrder, usize)>,
    position: Option<[usize; 3]>,
}

/// Checks a joint's channel set and returns where its values sit in a row.
fn joint_channels(joint: &BvhJoint, start: usize, is_root: bool) -> Result<JointChannels> {
    let unsupported = |detail: &str| Error::UnsupportedChannels {
        joint: joint.name.clone(),
        detail: detail.to_string(),
    };
    let mut rot = Vec::new();
    let mut pos = [usize::MAX; 3];
    let mut pos_count = 0;
    for (k, c) in joint.channels.iter().enumerate() {
        if c.is_rotation() {
            if rot.iter().any(|(a, _)| *a == c.axis()) {
                return Err(unsupported("repeated rotation channel"));
            }
            rot.push((c.axis(), start + k));
        } else {
            if !is_root {
                return Err(unsupported("position channels are only supported on the root"));
            }
            if pos[c.axis()] != usize::MAX {
                return Err(unsupported("repeated position channel"));
            }
            pos[c.axis()] = start + k;
            pos_count += 1;
        }
    }
    let rotation = match rot.len() {
        0 => None,
        3 => {
            // Rotation channels must be contiguous in the row.
            let first = rot[0].1;
            if rot.iter().enumerate().any(|(n, (_, idx))| *idx != first + n) {
                return Err(unsupported("rotation channels must be contiguous"));
            }
            Some((EulerOrder([rot[0].0, rot[1].0, rot[2].0]), first))
        }
        _ => return Err(unsupported("need all three rotation channels or none")),
    };
    let position = match pos_count {
        0 => None,
        3 => Some(pos),
        _ => return Err(unsupported("need all three position channels or none")),
    };
    Ok(JointChannels { rotation, position })
}

/// Converts a document to the internal model. End Sites become leaf joints
/// named `<parent>_end`. A root without position channels is placed at its
/// OFFSET.
pub fn bvh_to_model(doc: &BvhDocument) -> Result<(Skeleton, RotationClip)> {
    doc.validate()?;
    let n_bvh = doc.joints.len();
    let mut layout = Vec::with_capacity(n_bvh);
    let mut start = 0;
    for (i, j) in doc.joints.iter().enumerate() {
        layout.push(joint_channels(j, start, i == 0)?);
        start += j.channels.len();
    }
    let mut bvh_children = vec![Vec::new(); n_bvh];
    for (i, j) in doc.joints.iter().enumerate() {
        if let Some(p) = j.parent {
            bvh_children[p].push(i);
        }
    }

    // Model joint list: depth-first, End Site after the joint's children.
    enum Source {
        Joint(usize),
        EndSite,
    }
    let mut sources = Vec::new();
    let mut parents = Vec::new();
    let mut offsets = Vec::new();
    let mut names = Vec::new();
    fn visit(
        doc: &BvhDocument,
        children: &[Vec<usize>],
        i: usize,
        parent: Option<usize>,
        out: &mut (
            &mut Vec<Source>,
            &mut Vec<Option<usize>>,
            &mut Vec<[f64; 3]>,
            &mut Vec<String>,
        ),
    ) {
        let me = out.0.len();
        out.0.push(Source::Joint(i));
        out.1.push(parent);
        out.2.push(doc.joints[i].offset);
        out.3.push(doc.joints[i].name.clone());
        for &c in &children[i] {
            visit(doc, children, c, Some(me), out);
        }
        if let Some(site) = doc.joints[i].end_site {
            out.0.push(Source::EndSite);
            out.1.push(Some(me));
            out.2.push(site);
            out.3.push(format!("{}_end", doc.joints[i].name));
        }
    }
    visit(
        doc,
        &bvh_children,
        0,
        None,
        &mut (&mut sources, &mut parents, &mut offsets, &mut names),
    );
    let skeleton = Skeleton::new(parents, offsets, names);
    let report = skeleton.validate();
    if !report.is_ok() {
        return Err(Error::InvalidSkeleton(report));
    }

    let n = sources.len();
    let frames = doc.frame_count;
    if frames == 0 {
        return Err(Error::Shape("BVH document has no frames".into()));
    }
    let mut clip = RotationClip::identity(frames, n);
    for (t, row) in doc.motion.iter().enumerate() {
        for (m, src) in sources.iter().enumerate() {
            if let Source::Joint(i) = src {
                if let Some((order, at)) = layout[*i].rotation {
                    let r = euler_to_matrix(order, [row[at], row[at + 1], row[at + 2]]);
                    clip.set(t, m, r.to_rot6d());
                }
            }
        }
        let root_pos = match layout[0].position {
            Some(idx) => [row[idx[0]], row[idx[1]], row[idx[2]]],
            None => doc.joints[0].offset,
        };
        clip.set_root_translation(t, root_pos);
    }
    Ok((skeleton, clip))
}

/// A frame/joint pair whose Euler conversion hit gimbal lock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GimbalWarning {
    pub frame: usize,
    pub joint: String,
}

/// Converts the model to BVH with the given rotation channel order. Leaf
/// joints named `<parent>_end` are written back as End Sites; the root gets
/// three position channels followed by its rotation channels.
pub fn model_to_bvh(
    skeleton: &Skeleton,
    clip: &RotationClip,
    order: EulerOrder,
    frame_time: f64,
) -> Result<(BvhDocument, Vec<GimbalWarning>)> {
    let topo = skeleton.topology()?;
    if clip.joints() != skeleton.joint_count() {
        return Err(Error::Shape(format!(
            "skeleton has {} joints, clip has {}",
            skeleton.joint_count(),
            clip.joints()
        )));
    }
    let is_end_site = |j: usize| -> bool {
        match skeleton.parents[j] {
            Some(p) => {
                topo.children[j].is_empty() && skeleton.names[j] == format!("{}_end", skeleton.names[p])
            }
            None => false,
        }
    };

    let mut joints: Vec<BvhJoint> = Vec::new();
    let mut model_of: Vec<usize> = Vec::new();
    fn visit(
        skeleton: &Skeleton,
        children: &[Vec<usize>],
        is_end_site: &dyn Fn(usize) -> bool,
        order: EulerOrder,
        m: usize,
        parent: Option<usize>,
        joints: &mut Vec<BvhJoint>,
        model_of: &mut Vec<usize>,
    ) {
        let me = joints.len();
        let mut channels = Vec::new();
        if parent.is_none() {
            channels.extend((0..3).map(Channel::position));
        }
        channels.extend(order.channels());
        joints.push(BvhJoint {
            name: skeleton.names[m].clone(),
            parent,
            offset: skeleton.offsets[m],
            channels,
            end_site: None,
        });
        model_of.push(m);
        for &c in &children[m] {
            if is_end_site(c) && joints[me].end_site.is_none() {
                joints[me].end_site = Some(skeleton.offsets[c]);
            } else {
                visit(skeleton, children, is_end_site, order, c, Some(me), joints, model_of);
            }
        }
    }
    visit(
        skeleton,
        &topo.children,
        &is_end_site,
        order,
        topo.root,
        None,
        &mut joints,
        &mut model_of,
    );

    let mask = clip.joint_mask();
    let mut warnings = Vec::new();
    let mut motion = Vec::with_capacity(clip.frames());
    for t in 0..clip.frames() {
        let mut row = Vec::new();
        for (b, &m) in model_of.iter().enumerate() {
            if b == 0 {
                row.extend(clip.root_translation()[t]);
            }
            let r = if mask[m] {
                clip.matrix(t, m)?
            } else {
                RotMatrix::identity()
            };
            let (angles, locked) = matrix_to_euler(order, &r);
            if locked {
                warnings.push(GimbalWarning {
                    frame: t,
                    joint: skeleton.names[m].clone(),
                });
            }
            row.extend(angles);
        }
        motion.push(row);
    }
    let doc = BvhDocument {
        joints,
        frame_count: clip.frames(),
        frame_time,
        motion,
    };
    doc.validate()?;
    Ok((doc, warnings))
}
