//! Tree relations between joints and the alternating LOCAL/GLOBAL masks.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::skeleton::Skeleton;

/// Largest distance bucket; farther pairs share bucket `D_MAX`.
pub const D_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphRelations {
    joints: usize,
    dist: Vec<usize>,
    ancestor: Vec<bool>,
    adjacency: Vec<bool>,
}

impl GraphRelations {
    pub fn joints(&self) -> usize {
        self.joints
    }

    /// Path length between `i` and `j` in the undirected tree.
    pub fn dist(&self, i: usize, j: usize) -> usize {
        self.dist[i * self.joints + j]
    }

    /// True iff `j` is a strict ancestor of `i`.
    pub fn ancestor(&self, i: usize, j: usize) -> bool {
        self.ancestor[i * self.joints + j]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.joints + j]
    }
}

pub fn build_graph_relations(skeleton: &Skeleton) -> Result<GraphRelations> {
    skeleton.topology()?;
    let n = skeleton.joint_count();
    let mut neighbors = vec![Vec::new(); n];
    let mut adjacency = vec![false; n * n];
    for (c, p) in skeleton.parents.iter().enumerate() {
        if let Some(p) = *p {
            neighbors[p].push(c);
            neighbors[c].push(p);
            adjacency[p * n + c] = true;
            adjacency[c * n + p] = true;
        }
    }
    let mut dist = vec![usize::MAX; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if row[v] == usize::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let mut ancestor = vec![false; n * n];
    for i in 0..n {
        let mut cur = skeleton.parents[i];
        while let Some(a) = cur {
            ancestor[i * n + a] = true;
            cur = skeleton.parents[a];
        }
    }
    Ok(GraphRelations {
        joints: n,
        dist,
        ancestor,
        adjacency,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Local,
    Global,
}

impl MaskKind {
    /// LOCAL on even layers, GLOBAL on odd.
    pub fn for_layer(layer_index: usize) -> Self {
        if layer_index.is_multiple_of(2) {
            MaskKind::Local
        } else {
            MaskKind::Global
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MaskKind::Local => "LOCAL",
            MaskKind::Global => "GLOBAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    joints: usize,
    kind: MaskKind,
    allowed: Vec<bool>,
    bucket: Vec<usize>,
}

impl AttentionMask {
    /// A mask where every pair is allowed and every bucket is `bucket`.
    pub fn full(joints: usize, bucket: usize) -> Self {
        AttentionMask {
            joints,
            kind: MaskKind::Global,
            allowed: vec![true; joints * joints],
            bucket: vec![bucket.min(D_MAX); joints * joints],
        }
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.joints + j]
    }

    pub fn bucket(&self, i: usize, j: usize) -> usize {
        self.bucket[i * self.joints + j]
    }

    pub fn allowed_count(&self) -> usize {
        self.allowed.iter().filter(|a| **a).count()
    }

    pub fn is_subset_of(&self, other: &AttentionMask) -> bool {
        self.joints == other.joints
            && self
                .allowed
                .iter()
                .zip(&other.allowed)
                .all(|(a, b)| !*a || *b)
    }

    /// Rows of `0`/`1` separated by spaces.
    pub fn grid(&self) -> String {
        let mut out = String::new();
        for i in 0..self.joints {
            let row: Vec<&str> = (0..self.joints)
                .map(|j| if self.allowed(i, j) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Builds the mask for one layer. Padded joints (`joint_mask[j] == false`)
/// are forbidden in both directions, including their own diagonal.
pub fn build_gl_mask(
    relations: &GraphRelations,
    layer_index: usize,
    joint_mask: &[bool],
) -> Result<AttentionMask> {
    let n = relations.joints();
    if joint_mask.len() != n {
        return Err(Error::Shape(format!(
            "joint mask has {} entries for {n} joints",
            joint_mask.len()
        )));
    }
    let kind = MaskKind::for_layer(layer_index);
    let mut allowed = vec![false; n * n];
    let mut bucket = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            bucket[i * n + j] = relations.dist(i, j).min(D_MAX);
            if !joint_mask[i] || !joint_mask[j] {
                continue;
            }
            allowed[i * n + j] = match kind {
                MaskKind::Global => true,
                MaskKind::Local => {
                    i == j || relations.ancestor(i, j) || relations.ancestor(j, i)
                }
            };
        }
    }
    Ok(AttentionMask {
        joints: n,
        kind,
        allowed,
        bucket,
    })
}

/// One section per layer: a `layer <i> <KIND>` header, the grid, and a blank
/// line between sections. Zero layers give an empty string.
pub fn mask_dump(relations: &GraphRelations, layers: usize, joint_mask: &[bool]) -> Result<String> {
    let mut out = String::new();
    for layer in 0..layers {
        let mask = build_gl_mask(relations, layer, joint_mask)?;
        if layer > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "layer {layer} {}", mask.kind().label());
        out.push_str(&mask.grid());
    }
    Ok(out)
}
