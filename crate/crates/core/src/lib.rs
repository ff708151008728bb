//! Verification-gated iterative code generation.
//!
//! A forward engine drafts a program, a backward engine reviews it along four
//! axes, the review is parsed into an ordered list of edit directives, and
//! each revision is accepted only if mechanical invariant checks pass and the
//! accompanying per-invariant proof claims every strict invariant holds.

pub mod bench;
pub mod canonical;
pub mod engine;
pub mod fence;
pub mod gradient;
pub mod sandbox;
pub mod refine;
pub mod task;
pub mod verify;

pub use fence::extract_code_fence;
