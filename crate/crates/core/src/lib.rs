//! Cropping-inside residual backbones for fully-convolutional Siamese
//! matching, with static geometry analysis and an evaluation harness.

pub mod analyzer;
pub mod experiment;
pub mod graph;
pub mod matcher;
pub mod synth;
pub mod tensor;
