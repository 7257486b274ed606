//! Object-aware stereo bundle adjustment.
//!
//! Cameras, rigid-object trajectories, object twists, object points and static
//! map points are optimized jointly. Dynamic points are stored once in their
//! object's frame while the object pose is estimated per frame; a constant
//! velocity model ties consecutive poses together.
//!
//! The crate also ships a synthetic stereo scene generator with ground truth,
//! 3D bounding-box estimation and trajectory / tracking metrics, so that the
//! whole pipeline can be exercised end to end. See the `examples/` directory
//! for one runnable program per capability.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod bbox;
pub mod camera;
pub mod factors;
pub mod graph;
pub mod manifold;
pub mod metrics;
pub mod simulator;
pub mod solver;

pub use camera::{StereoIntrinsics, StereoObservation};
pub use graph::{Factor, Problem, VariableKey};
pub use manifold::{Pose, Rotation, Twist};
