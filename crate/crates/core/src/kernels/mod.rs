//! Graph relations, GL-GMHA masks, and small attention/conditioning kernels
//! with exact backward passes.

mod attention;
pub mod cross;
pub mod film;
pub mod gmha;
pub mod gradcheck;
pub mod graph;
pub mod plan;
pub mod rope;

pub use attention::{GmhaGrads, GmhaParams};
pub use cross::{reference_cross_attention, reference_cross_attention_backward, CrossCache};
pub use film::{film_backward, film_forward, frequency_positional_embedding, FilmGrads, FilmParams, DEFAULT_BANDS};
pub use gmha::{gmha_backward, gmha_forward, GmhaCache};
pub use gradcheck::{run_gradcheck, GradCheckReport, Kernel};
pub use graph::{build_gl_mask, build_graph_relations, mask_dump, AttentionMask, GraphRelations, MaskKind, D_MAX};
pub use plan::{layer_stack_plan, BlockPlan, SubLayer, DEFAULT_CROSS_LAYERS, DEFAULT_LAYERS};
pub use rope::{rope, rope_temporal_backward, rope_temporal_forward, TemporalCache, DEFAULT_ROPE_BASE, DEFAULT_WINDOW};
