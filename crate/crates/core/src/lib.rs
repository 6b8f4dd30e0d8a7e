//! Event causality identification over AMR semantic graphs.
//!
//! Events are located in a sentence's AMR graph. The classifier runs graph
//! convolution over each event's neighborhood and pools the shortest role
//! paths between the pair with attention, then adds a marker-based context
//! encoding before a softmax layer trained with focal loss.

pub mod cli;
pub mod data;
pub mod evaluation;
pub mod features;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod penman;
pub mod training;
