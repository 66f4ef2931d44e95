//! Pose-aligned signed distance fields for joint hand-object reconstruction
//! on synthetic grasp scenes.
//!
//! The pipeline: a scene render is encoded into a feature vector, pose heads
//! estimate the hand pose and the object translation, query points are pulled
//! back into the hand and object frames, and two decoders regress signed
//! distances from which meshes are extracted and scored.

pub mod autodiff;
pub mod exec;
pub mod geom;
pub mod handkin;
pub mod meshops;
pub mod metrics;
pub mod nn;
pub mod objpose;
pub mod scenegen;
pub mod sdfnet;
pub mod training;

pub use exec::Exec;
