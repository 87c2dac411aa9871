//! Skeleton-based gesture segmentation and classification.
//!
//! The pipeline turns 11-joint upper-body skeleton streams into per-frame
//! gesture labels:
//!
//! * [`descriptor`] builds the 183-component per-frame pose descriptor.
//! * [`segmenter`] detects periods of activity with a frame-wise network.
//! * [`window`] classifies activity periods from sliding-window dynamic poses
//!   (single scale or fused over three temporal scales).
//! * [`recurrent`] labels whole sequences with a bidirectional LSTM stack.
//! * [`evaluation`] scores predictions with the Jaccard index.
//!
//! [`nn`] holds the from-scratch network engine shared by all three models and
//! [`pipeline`] wires everything together for the `gesture` binary.

pub mod descriptor;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod pipeline;
pub mod recurrent;
pub mod rng;
pub mod segmenter;
pub mod skeleton;
pub mod smoothing;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use skeleton::{FrameLabels, GestureAnnotation, JointId, SkeletonSequence};

/// Number of gesture classes in the vocabulary.
pub const N_GESTURES: usize = 20;
/// Number of frame classes including rest (label 0).
pub const N_CLASSES: usize = N_GESTURES + 1;
