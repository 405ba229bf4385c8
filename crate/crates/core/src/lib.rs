//! Early Parkinson's disease screening from speech.
//!
//! Two classifiers share one front-end: a class-conditional GMM baseline on
//! MFCC + deltas, and x-vectors from a TDNN embedding network scored against
//! class centroids with cosine, LDA + cosine or PLDA back-ends. Both are
//! evaluated with repeated random subsampling and score aggregation.

pub mod augment;
pub mod backend;
pub mod demo;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod frontend;
pub mod gmm;
pub mod linalg;
pub mod manifest;
pub mod math;
pub mod persist;
pub mod scalar;
pub mod seed;
pub mod tdnn;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type AudioBuffer = frontend::AudioBuffer<f64>;
pub type FeatureMatrix = frontend::FeatureMatrix<f64>;
pub type GmmModel = gmm::GmmModel<f64>;
pub type TdnnWeights = tdnn::TdnnWeights<f32>;
pub type TdnnWeightsF64 = tdnn::TdnnWeights<f64>;
pub type LdaProjection = backend::LdaProjection<f64>;
pub type PldaModel = backend::PldaModel<f64>;
pub type Matrix = linalg::Matrix<f64>;
