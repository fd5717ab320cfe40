//! Kinematics, rotation math, attention kernels and BVH tools for
//! skeletons of any shape.

pub mod bvh;
pub mod cli;
pub mod clipfile;
pub mod error;
pub mod kernels;
pub mod kinematics;
pub mod metrics;
pub mod remap;
pub mod rotation;
pub mod skeleton;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/skeletons.md")]
    mod skeletons {}
    #[doc = include_str!("../../../book/src/rotations.md")]
    mod rotations {}
    #[doc = include_str!("../../../book/src/ik.md")]
    mod ik {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    mod conventions {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/bvh.md")]
    mod bvh {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
