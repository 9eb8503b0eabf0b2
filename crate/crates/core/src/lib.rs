//! Uncertainty attribution for small dense networks, and the metrics and
//! sanity checks used to evaluate it.
//!
//! An uncertainty attribution splits an ensemble's predictive variance over
//! the input features: each of the `K` stochastic members (MC dropout or MC
//! dropconnect) is explained with a feature-attribution method, and the
//! per-feature variance of those `K` explanations is the attribution.

pub mod attrib;
pub mod error;
pub mod metrics;
pub mod net;
pub mod numstat;
pub mod pipeline;
pub mod sanity;
pub mod seed;

pub use error::{Error, Result};
pub use net::{
    Activation, ActivationOverride, DenseLayer, DenseNetwork, DropoutScaling, ForwardPass,
    MaskSet, PredictiveEnsemble, TrainConfig, UqKind,
};
pub use numstat::{RankVector, ScoreVector};
