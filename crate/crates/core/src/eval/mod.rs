//! Cross-validation, metrics, and experiment orchestration.

mod experiment;
mod metrics;
mod report;
mod split;

pub use experiment::{
    fold_window, label_indices, plot_features, prepare_fold, run_experiment, run_experiment_with_labels, sweep,
    ClassSummary, ClassifierConfig, ClassifierId, CvConfig, CvScheme, EvalReport, FoldResult, GroupKey, PcaScope, Pipeline,
    PreprocessConfig, SweepResult, DEFAULT_PCA_COMPONENTS,
};
pub use metrics::{boxplot_stats, confusion_matrix, overall_accuracy, per_class_accuracy, BoxplotStats};
pub use report::{confusion_csv, folds_csv, per_class_csv, results_table, ResultsRow};
pub use split::{logo_split, stratified_kfold_split, Split};
