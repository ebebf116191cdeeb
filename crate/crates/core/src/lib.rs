//! Out-of-context image-caption misinformation detection through structured
//! debates between multimodal chat agents, grounded in reverse image search
//! evidence.

pub mod backend;
pub mod clock;
pub mod dataset;
pub mod debate;
pub mod eval;
pub mod evidence;
pub mod image;
pub mod prompt;
