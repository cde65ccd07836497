//! Toolkit for layered design documents: an immutable layer-tree model, a
//! PSD subset reader/writer, a pixel-exact compositor, a tool-call executor,
//! training-tuple synthesis for asset integration and layer refinement,
//! GRPO reward math, and the iterative design loop.

pub mod dataset;
pub mod doc;
pub mod fixtures;
pub mod io;
pub mod raster;
pub mod render;
pub mod rl;
pub mod tools;
pub mod workflow;
