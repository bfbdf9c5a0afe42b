//! Core library for degradation-aware selection of local feature detectors.
//!
//! The pipeline works on pairs of 8-bit grayscale images (a pristine
//! reference and a degraded target):
//!
//! 1. [`features`] condenses a pair into three global statistics
//!    (light ratio, blur ratio, JPEG quality index).
//! 2. [`classify`] predicts which degradation was applied and how much of
//!    it, using linear classifiers trained on a synthetic dataset built by
//!    [`transforms`] and [`dataset`].
//! 3. [`characterize`] measures detector repeatability per operating
//!    condition offline, and [`select`] turns those measurements into an
//!    argmax rule table consulted at runtime.
//!
//! All numeric kernels are generic over the scalar type through [`Real`];
//! `f64` is the default used by the command-line tool, with `f32` available
//! for memory-constrained callers.

pub mod characterize;
pub mod classify;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod features;
pub mod image;
pub mod matching;
pub mod select;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};
use std::str::FromStr;

/// Floating-point scalar the numeric kernels compute in: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + FromStr + Display + Debug + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + FromStr
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("f64 is representable in any Real scalar")
}

/// Feature vector over `f64`, the default scalar of the CLI.
pub type FeatureVector64 = features::FeatureVector<f64>;
/// Feature vector over `f32`.
pub type FeatureVector32 = features::FeatureVector<f32>;
/// Linear model over `f64`.
pub type LinearModel64 = classify::LinearModel<f64>;
/// Keypoint over `f64`.
pub type Keypoint64 = detect::Keypoint<f64>;
/// Characterization table over `f64`.
pub type CharacterizationTable64 = characterize::CharacterizationTable<f64>;
/// Selection table over `f64`.
pub type SelectionTable64 = select::SelectionTable<f64>;
