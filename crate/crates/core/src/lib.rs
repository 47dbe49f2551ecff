//! Tip-tail air-signature pipeline.
//!
//! A pen carrying an orange ball at its tip and a green ball at its tail is
//! observed by a rectified stereo rig. This crate covers every stage from
//! frames to verdicts: ball detection, stereo triangulation, trajectory
//! resampling and augmentation, a spatio-temporal CNN trained from scratch,
//! and recognition / verification evaluation. A seeded synthetic signer
//! model stands in for the capture hardware and doubles as ground truth.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod detection;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod slitcnn;
pub mod stereo;
pub mod synth;
pub mod trajectory;
