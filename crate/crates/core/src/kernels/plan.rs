//! Sub-layer order of the decoder blocks.

use std::fmt;

use super::graph::MaskKind;
use crate::error::{Error, Result};

pub const DEFAULT_LAYERS: usize = 8;
pub const DEFAULT_CROSS_LAYERS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubLayer {
    Film,
    TemporalAttention,
    GlGmha(MaskKind),
    CrossAttention,
    FeedForward,
}

impl fmt::Display for SubLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubLayer::Film => f.write_str("film"),
            SubLayer::TemporalAttention => f.write_str("temporal"),
            SubLayer::GlGmha(k) => write!(f, "gmha-{}", k.label().to_lowercase()),
            SubLayer::CrossAttention => f.write_str("cross"),
            SubLayer::FeedForward => f.write_str("ffn"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    pub index: usize,
    pub mask: MaskKind,
    pub sublayers: Vec<SubLayer>,
}

impl BlockPlan {
    pub fn has_cross_attention(&self) -> bool {
        self.sublayers.contains(&SubLayer::CrossAttention)
    }
}

/// `layers` blocks; cross-attention only in the first `cross_layers`.
pub fn layer_stack_plan(layers: usize, cross_layers: usize) -> Result<Vec<BlockPlan>> {
    if cross_layers > layers {
        return Err(Error::InvalidArgument(format!(
            "cross-attention layers ({cross_layers}) exceed total layers ({layers})"
        )));
    }
    Ok((0..layers)
        .map(|index| {
            let mask = MaskKind::for_layer(index);
            let mut sublayers = vec![SubLayer::Film, SubLayer::TemporalAttention, SubLayer::GlGmha(mask)];
            if index < cross_layers {
                sublayers.push(SubLayer::CrossAttention);
            }
            sublayers.push(SubLayer::FeedForward);
            BlockPlan { index, mask, sublayers }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan() {
        let plan = layer_stack_plan(DEFAULT_LAYERS, DEFAULT_CROSS_LAYERS).unwrap();
        assert_eq!(plan.len(), 8);
        assert!(plan[..6].iter().all(BlockPlan::has_cross_attention));
        assert!(!plan[6].has_cross_attention() && !plan[7].has_cross_attention());
        assert_eq!(
            plan[0].sublayers,
            vec![
                SubLayer::Film,
                SubLayer::TemporalAttention,
                SubLayer::GlGmha(MaskKind::Local),
                SubLayer::CrossAttention,
                SubLayer::FeedForward
            ]
        );
    }

    #[test]
    fn small_plans() {
        let p = layer_stack_plan(1, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].mask, MaskKind::Local);
        assert!(!p[0].has_cross_attention());
        let p = layer_stack_plan(2, 2).unwrap();
        assert_eq!([p[0].mask, p[1].mask], [MaskKind::Local, MaskKind::Global]);
        assert!(p.iter().all(BlockPlan::has_cross_attention));
        assert!(layer_stack_plan(2, 3).is_err());
    }
}
