//! Toolkit for turning raw multi-view-stereo depth into supervision for
//! single-image depth prediction: refinement of noisy depth maps, curation
//! into Euclidean or ordinal training data, the scale-invariant training
//! objective with analytic gradients, evaluation metrics, a direct
//! log-depth fitting harness and a synthetic scene generator.

pub mod components;
pub mod curate;
pub mod depth;
pub mod error;
pub mod fitkit;
pub mod io;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod ordinal;
pub mod refine;
pub mod rng;
pub mod semantic;
pub mod synth;

pub use depth::{DepthMap, LogDepthMap};
pub use error::{Error, Result};
pub use manifest::{ImageRecord, Verdict};
pub use ordinal::{OrdinalPair, PairRecord, Relation};
pub use semantic::{Category, CategoryMapping, SemanticCategoryMask};
