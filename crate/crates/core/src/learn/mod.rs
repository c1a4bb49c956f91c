//! Random forest and logistic classifiers over categorical predictors.

pub mod forest;
pub mod logistic;
pub mod matrix;

pub use forest::{adjusted_rank_ratio, forest_predict, permutation_importance, train_forest, ForestConfig, ForestModel, ImportanceReport, Node, Tree};
pub use logistic::{train_logistic, LogisticConfig, LogisticModel};
pub use matrix::{PredictorMatrix, CLASSES};
