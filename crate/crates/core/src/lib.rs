//! Short-to-long preference optimization (SoLoPO) laboratory core.
//!
//! * [`gpo`]: convex links, bound functions, rewards and the short-to-long loss family.
//! * [`bounds`]: brute-force certification of the long-context loss bounds.
//! * [`policy`]: a tiny differentiable autoregressive scorer.
//! * [`forge`]: haystack context synthesis and preference-pair curation.
//! * [`train`]: AdamW training loop, evaluation and comparisons.
//! * [`efficiency`]: FLOPs model of vanilla vs short-to-long training.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod efficiency;
pub mod forge;
pub mod gpo;
pub mod policy;
pub mod rng;
pub mod train;
