//! Simulation core for a gaze- and language-driven robot-to-human handover
//! pipeline: scene synthesis, gaze geometry, command parsing, object
//! selection, grasp planning and arm motion.

// `!(x > 0.0)` is how the validators reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Joint and axis loops index several arrays in step.
#![allow(clippy::needless_range_loop)]

pub mod gaze;
pub mod parser;
pub mod geometry;
pub mod grasp;
pub mod motion;
pub mod scene;
pub mod selection;
pub mod spatial;
pub mod pipeline;
