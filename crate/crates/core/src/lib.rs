//! Deep-belief-network malicious application detector.
//!
//! Apps are described by permission, sensitive-API and behavior name sets plus
//! the location zone they were observed in ([`features`]). Each app becomes a
//! bit vector that feeds a stack of RBMs pre-trained by contrastive divergence
//! ([`rbm`]), unrolled into a feed-forward net with a softmax head and
//! fine-tuned by backpropagation ([`dbn`]). Four baseline classifiers
//! ([`baselines`]), a synthetic corpus generator with planted location-dependent
//! rules ([`datagen`]) and an experiment harness ([`bench`]) complete the
//! pipeline.

pub mod baselines;
pub mod bench;
pub mod curve;
pub mod datagen;
pub mod dbn;
pub mod error;
pub mod features;
pub mod model;
pub mod rbm;
pub mod tensor;

pub use curve::{Curve, CurvePoint, ErrorCurve, LossCurve};
pub use error::{Error, Result};
pub use tensor::{Matrix, SeededRng};
