//! Cross-validated top-k evaluation: Pre@k / Rec@k, continuous baselines,
//! paired significance tests and code/criterion alignment.

mod alignment;
mod ami;
mod cv;
mod metrics;
mod pca;
mod report;
mod ttest;

pub use alignment::{alignment_csv, code_alignment, CodeAlignment};
pub use ami::adjusted_mutual_info;
pub use cv::{
    cross_validate, fold_metrics, predict_fold, train_fold_models, CellPredictions,
    CrossValidation, EvalConfig, FoldModels, FoldOutcome, FoldScores, Metric,
};
pub use metrics::{precision_at_k, recall_at_k};
pub use pca::{pca_project, Pca};
pub use report::{EvalReport, FoldUsers, ReportRow};
pub use ttest::{
    is_significant, ln_gamma, paired_significance, regularized_incomplete_beta,
    student_t_two_sided, ALPHA,
};
