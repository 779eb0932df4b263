//! Hallucination detector over attribution features: exact-greedy
//! gradient-boosted trees, ranking and threshold metrics, randomised
//! hyperparameter search and three leakage-guarded evaluation protocols.

pub mod dataset;
pub mod error;
pub mod folds;
pub mod gbdt;
pub mod metrics;
pub mod protocol;
pub mod search;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use folds::{stratified_folds, IsolationGuard};
pub use gbdt::{
    feature_importance, train, train_all, ClassWeight, DetectorConfig, DetectorModel, Node, Tree,
};
pub use metrics::{auc, f1_recall, Confusion};
pub use protocol::{
    protocol_nested_loocv, protocol_standard, search_and_fit, protocol_stratified_kfold, EvalReport, FoldReport,
    ProtocolOptions,
};
pub use search::{random_search, SearchGrid, SearchOptions, SearchResult};
