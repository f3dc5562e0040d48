//! Comparison classifiers sharing the detector's fit/predict contract.

pub mod forest;
pub mod softmax_reg;
pub mod svm;
pub mod tree;

pub use forest::{fit_forest, ForestConfig, ForestModel};
pub use softmax_reg::{fit_softmax_regression, SoftmaxRegModel};
pub use svm::{fit_linear_svm, LinearSvmModel, SvmConfig};
pub use tree::{fit_tree, TreeConfig, TreeModel};
