//! Egomotion, flow and planar structure from event-camera normal flow.
//!
//! The crate turns a raw event stream into sparse normal-flow observations
//! and estimates motion and structure from them with linear solvers, a
//! RANSAC wrapper, a differential-homography decomposition and a continuous
//! B-spline velocity fit. A synthetic data generator supports evaluation.

pub mod bench;
pub mod error;
pub mod events;
pub mod geometry;
pub mod homography;
pub mod io;
pub mod normal_flow;
pub mod solvers;
pub mod spline;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
