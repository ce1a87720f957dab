use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::metrics::{boxplot_stats, confusion_matrix, overall_accuracy, per_class_accuracy, BoxplotStats};
use super::split::{logo_split, stratified_kfold_split, Split};
use crate::classical::{knn_fit, knn_predict, lda_fit, lda_predict, Shrinkage};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neural::{
    build_cnn_with, build_lstm_with, build_mlp_with, train, CnnShape, LstmShape, MlpShape, Tensor, TrainConfig,
    TrainingHistory,
};
use crate::pca::{pca_fit, pca_transform, PcaModel, PcaTarget};
use crate::preprocess::{
    clip_and_normalize, mean_plot, row_entropy, select_roi, IndexWindow, RoiRule, RoiWindow, DEFAULT_ENTROPY_BINS,
};
use crate::stats;
use crate::trees::{etc_fit, etc_predict, ExtraTreesConfig};

pub const DEFAULT_PCA_COMPONENTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    #[default]
    RepeatedStratifiedKfold,
    LeaveOneGroupOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    #[default]
    FlowRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub scheme: CvScheme,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub group_key: GroupKey,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            scheme: CvScheme::RepeatedStratifiedKfold,
            k: 10,
            repeats: 5,
            seed: 0,
            group_key: GroupKey::FlowRate,
        }
    }
}

impl CvConfig {
    pub fn stratified(k: usize, repeats: usize, seed: u64) -> Self {
        Self {
            scheme: CvScheme::RepeatedStratifiedKfold,
            k,
            repeats,
            seed,
            group_key: GroupKey::FlowRate,
        }
    }

    pub fn by_group(group_key: GroupKey) -> Self {
        Self {
            scheme: CvScheme::LeaveOneGroupOut,
            group_key,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == CvScheme::RepeatedStratifiedKfold {
            if self.k < 2 {
                return Err(Error::Config(format!("k-fold needs k >= 2, got {}", self.k)));
            }
            if self.repeats == 0 {
                return Err(Error::Config("repeats must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Column label in result tables, e.g. `CV10` or `GCV`.
    pub fn label(&self) -> String {
        match self.scheme {
            CvScheme::RepeatedStratifiedKfold => format!("CV{}", self.k),
            CvScheme::LeaveOneGroupOut => "GCV".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierId {
    Knn,
    Lda,
    Etc,
    Mlp,
    Cnn,
    Lstm,
}

impl ClassifierId {
    pub const ALL: [ClassifierId; 6] = [
        ClassifierId::Knn,
        ClassifierId::Lda,
        ClassifierId::Etc,
        ClassifierId::Mlp,
        ClassifierId::Cnn,
        ClassifierId::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierId::Knn => "KNN",
            ClassifierId::Lda => "LDA",
            ClassifierId::Etc => "ETC",
            ClassifierId::Mlp => "MLP",
            ClassifierId::Cnn => "CNN",
            ClassifierId::Lstm => "LSTM",
        }
    }

    /// Whether the classifier consumes the plot image instead of PCA scores.
    pub fn takes_plots(self) -> bool {
        matches!(self, ClassifierId::Cnn | ClassifierId::Lstm)
    }
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierId::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Knn {
        k: usize,
    },
    Lda {
        shrinkage: Shrinkage,
    },
    Etc(ExtraTreesConfig),
    Mlp {
        #[serde(default)]
        shape: MlpShape,
        #[serde(default)]
        train: TrainConfig,
    },
    Cnn {
        #[serde(default)]
        shape: CnnShape,
        #[serde(default)]
        train: TrainConfig,
    },
    Lstm {
        #[serde(default)]
        shape: LstmShape,
        #[serde(default)]
        train: TrainConfig,
    },
}

impl ClassifierConfig {
    /// Reference settings: three neighbours, automatic shrinkage, a hundred
    /// gini trees, and default network shapes.
    pub fn default_for(id: ClassifierId) -> Self {
        match id {
            ClassifierId::Knn => ClassifierConfig::Knn { k: 3 },
            ClassifierId::Lda => ClassifierConfig::Lda {
                shrinkage: Shrinkage::Auto,
            },
            ClassifierId::Etc => ClassifierConfig::Etc(ExtraTreesConfig::default()),
            ClassifierId::Mlp => ClassifierConfig::Mlp {
                shape: MlpShape::default(),
                train: TrainConfig::default(),
            },
            ClassifierId::Cnn => ClassifierConfig::Cnn {
                shape: CnnShape::default(),
                train: TrainConfig::default(),
            },
            ClassifierId::Lstm => ClassifierConfig::Lstm {
                shape: LstmShape::default(),
                train: TrainConfig::default(),
            },
        }
    }

    pub fn id(&self) -> ClassifierId {
        match self {
            ClassifierConfig::Knn { .. } => ClassifierId::Knn,
            ClassifierConfig::Lda { .. } => ClassifierId::Lda,
            ClassifierConfig::Etc(_) => ClassifierId::Etc,
            ClassifierConfig::Mlp { .. } => ClassifierId::Mlp,
            ClassifierConfig::Cnn { .. } => ClassifierId::Cnn,
            ClassifierConfig::Lstm { .. } => ClassifierId::Lstm,
        }
    }

    /// Training settings of a network classifier.
    pub fn train_config_mut(&mut self) -> Option<&mut TrainConfig> {
        match self {
            ClassifierConfig::Mlp { train, .. }
            | ClassifierConfig::Cnn { train, .. }
            | ClassifierConfig::Lstm { train, .. } => Some(train),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub roi: RoiRule,
    pub entropy_bins: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            roi: RoiRule::Paper,
            entropy_bins: DEFAULT_ENTROPY_BINS,
        }
    }
}

/// Which rows the PCA basis is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaScope {
    /// Training rows of each fold only.
    #[default]
    PerFold,
    /// Every record, test rows included. Leaks test information into the
    /// basis; kept for comparison with whole-dataset projections.
    FullData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    /// `None` feeds the flattened plots directly.
    pub pca: Option<PcaTarget>,
    #[serde(default)]
    pub pca_scope: PcaScope,
    pub classifier: ClassifierConfig,
}

impl Pipeline {
    /// Default settings: PCA to 25 components for score-based classifiers,
    /// raw plots for the convolutional and recurrent networks.
    pub fn default_for(id: ClassifierId) -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            pca: (!id.takes_plots()).then_some(PcaTarget::Components(DEFAULT_PCA_COMPONENTS)),
            pca_scope: PcaScope::PerFold,
            classifier: ClassifierConfig::default_for(id),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.classifier.id();
        if id.takes_plots() && self.pca.is_some() {
            return Err(Error::Config(format!(
                "{id} consumes the clipped plots directly; disable PCA"
            )));
        }
        if self.preprocess.entropy_bins < 2 {
            return Err(Error::Config("entropy_bins must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub repeat: usize,
    /// Held-out group value for leave-one-group-out folds.
    pub group: Option<String>,
    pub accuracy: f64,
    pub per_class_correct: Vec<u64>,
    pub per_class_total: Vec<u64>,
    pub confusion: Array2<u64>,
    pub history: Option<TrainingHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: String,
    /// Over folds where the class had test samples.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: ClassifierId,
    pub cv: CvConfig,
    pub classes: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub accuracy_mean: f64,
    /// Population deviation over folds.
    pub accuracy_std: f64,
    pub per_class: Vec<ClassSummary>,
    pub confusion: Array2<u64>,
    pub boxplot: BoxplotStats,
}

impl EvalReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }
}

/// Class index per record, against the sorted class list of the dataset.
pub fn label_indices(dataset: &Dataset) -> (Vec<String>, Vec<usize>) {
    let classes = dataset.classes();
    let labels = dataset
        .records()
        .iter()
        .map(|r| classes.iter().position(|c| *c == r.chemical).expect("class present"))
        .collect();
    (classes.iter().map(|c| c.name().to_string()).collect(), labels)
}

pub fn run_experiment(dataset: &Dataset, pipeline: &Pipeline, cv: &CvConfig) -> Result<EvalReport> {
    let (classes, labels) = label_indices(dataset);
    run_experiment_with_labels(dataset, &labels, &classes, pipeline, cv)
}

/// As [`run_experiment`] with caller-supplied labels, e.g. a permuted
/// control. `labels[i]` indexes `classes` for record `i`.
pub fn run_experiment_with_labels(
    dataset: &Dataset,
    labels: &[usize],
    classes: &[String],
    pipeline: &Pipeline,
    cv: &CvConfig,
) -> Result<EvalReport> {
    pipeline.validate()?;
    cv.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if labels.len() != dataset.len() || labels.iter().any(|&l| l >= classes.len()) {
        return Err(Error::InvalidArgument(format!(
            "{} labels over {} classes for {} records",
            labels.len(),
            classes.len(),
            dataset.len()
        )));
    }
    let folds = cv_folds(dataset, labels, classes, cv)?;
    let mut cached: Option<(IndexWindow, Array2<f64>)> = None;
    let mut results = Vec::with_capacity(folds.len());
    for (fold, fold_split) in folds.iter().enumerate() {
        let (repeat, group, split) = fold_split;
        let window = fold_window(dataset, &split.train, &pipeline.preprocess)?;
        if cached.as_ref().is_none_or(|(w, _)| *w != window) {
            let features = plot_features(dataset, &window);
            cached = Some((window.clone(), features));
        }
        let features = &cached.as_ref().expect("just filled").1;
        let seed = fold_seed(cv.seed, fold);
        let (predicted, history) = fit_predict(features, &window, labels, classes.len(), split, pipeline, seed)?;
        let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
        let class_idx: Vec<usize> = (0..classes.len()).collect();
        let confusion = confusion_matrix(&truth, &predicted, &class_idx)?;
        results.push(FoldResult {
            fold,
            repeat: *repeat,
            group: group.clone(),
            accuracy: overall_accuracy(&confusion),
            per_class_correct: confusion.diag().to_vec(),
            per_class_total: confusion.sum_axis(Axis(1)).to_vec(),
            confusion,
            history,
        });
    }
    Ok(aggregate(pipeline.classifier.id(), cv, classes, results))
}

type FoldSpec = (usize, Option<String>, Split);

fn cv_folds(dataset: &Dataset, labels: &[usize], classes: &[String], cv: &CvConfig) -> Result<Vec<FoldSpec>> {
    match cv.scheme {
        CvScheme::RepeatedStratifiedKfold => {
            let named: Vec<&str> = labels.iter().map(|&l| classes[l].as_str()).collect();
            let splits = stratified_kfold_split(&named, cv.k, cv.repeats, cv.seed)?;
            Ok(splits
                .into_iter()
                .enumerate()
                .map(|(i, s)| (i / cv.k, None, s))
                .collect())
        }
        CvScheme::LeaveOneGroupOut => {
            let GroupKey::FlowRate = cv.group_key;
            let groups: Vec<FlowKey> = dataset.records().iter().map(|r| FlowKey(r.flow_rate)).collect();
            Ok(logo_split(&groups)?
                .into_iter()
                .map(|(g, s)| (0, Some(format!("{}", g.0)), s))
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FlowKey(f64);

impl Eq for FlowKey {}

impl PartialOrd for FlowKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FlowKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn fold_seed(base: u64, fold: usize) -> u64 {
    base.wrapping_add((fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Row and column window for a fold. The entropy rule looks only at the
/// mean of the training plots.
pub fn fold_window(dataset: &Dataset, train: &[usize], config: &PreprocessConfig) -> Result<IndexWindow> {
    let records = dataset.records();
    let grid = &records[0].plot;
    let roi = match &config.roi {
        RoiRule::Paper => RoiWindow::PAPER,
        rule => {
            let mean = mean_plot(train.iter().map(|&i| &records[i].plot))
                .ok_or_else(|| Error::InvalidArgument("fold without training records".into()))?;
            let profile = row_entropy(&mean, config.entropy_bins)?;
            select_roi(&profile, mean.usv_grid(), rule)?
        }
    };
    roi.resolve(grid.usv_grid(), grid.ucv_grid())
}

/// Clipped, row-normalised plots flattened to one row per record.
pub fn plot_features(dataset: &Dataset, window: &IndexWindow) -> Array2<f64> {
    let rows = window.rows.len();
    let cols = window.cols.len();
    let mut out = Array2::zeros((dataset.len(), rows * cols));
    for (mut dst, r) in out.rows_mut().into_iter().zip(dataset.records()) {
        let p = clip_and_normalize(&r.plot, window);
        dst.assign(&p.intensity().view().into_shape_with_order(rows * cols).expect("contiguous"));
    }
    out
}

/// Training and test matrices for a split, projected onto a PCA basis
/// when `target` is set.
pub fn prepare_fold(
    features: &Array2<f64>,
    split: &Split,
    target: Option<PcaTarget>,
    scope: PcaScope,
) -> Result<(Option<PcaModel>, Array2<f64>, Array2<f64>)> {
    let train = features.select(Axis(0), &split.train);
    let test = features.select(Axis(0), &split.test);
    match target {
        None => Ok((None, train, test)),
        Some(t) => {
            let model = match scope {
                PcaScope::PerFold => pca_fit(train.view(), t)?,
                PcaScope::FullData => pca_fit(features.view(), t)?,
            };
            let tr = pca_transform(&model, train.view())?;
            let te = pca_transform(&model, test.view())?;
            Ok((Some(model), tr, te))
        }
    }
}

fn fit_predict(
    features: &Array2<f64>,
    window: &IndexWindow,
    labels: &[usize],
    n_classes: usize,
    split: &Split,
    pipeline: &Pipeline,
    seed: u64,
) -> Result<(Vec<usize>, Option<TrainingHistory>)> {
    let (_, train_x, test_x) = prepare_fold(features, split, pipeline.pca, pipeline.pca_scope)?;
    let train_y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let rows = window.rows.len();
    let cols = window.cols.len();
    let with_seed = |c: &TrainConfig| TrainConfig {
        seed: c.seed ^ seed,
        ..c.clone()
    };
    match &pipeline.classifier {
        ClassifierConfig::Knn { k } => {
            let model = knn_fit(train_x.view(), &train_y, *k)?;
            let pred = test_x
                .rows()
                .into_iter()
                .map(|q| knn_predict(&model, q))
                .collect::<Result<_>>()?;
            Ok((pred, None))
        }
        ClassifierConfig::Lda { shrinkage } => {
            let model = lda_fit(train_x.view(), &train_y, *shrinkage)?;
            let pred = test_x
                .rows()
                .into_iter()
                .map(|q| lda_predict(&model, q))
                .collect::<Result<_>>()?;
            Ok((pred, None))
        }
        ClassifierConfig::Etc(config) => {
            let config = ExtraTreesConfig {
                seed: config.seed ^ seed,
                ..config.clone()
            };
            let model = etc_fit(train_x.view(), &train_y, &config)?;
            let pred = test_x
                .rows()
                .into_iter()
                .map(|q| etc_predict(&model, q))
                .collect::<Result<_>>()?;
            Ok((pred, None))
        }
        ClassifierConfig::Mlp { shape, train: tc } => {
            let shape = MlpShape {
                seed: shape.seed ^ seed,
                ..shape.clone()
            };
            let spec = build_mlp_with(train_x.ncols(), n_classes, &shape)?;
            let shape_of = |m: &Array2<f64>| vec![m.nrows(), m.ncols()];
            run_network(&spec, train_x, test_x, shape_of, &train_y, n_classes, &with_seed(tc))
        }
        ClassifierConfig::Cnn { shape, train: tc } => {
            let shape = CnnShape {
                seed: shape.seed ^ seed,
                ..shape.clone()
            };
            let spec = build_cnn_with(rows, cols, n_classes, &shape)?;
            let shape_of = |m: &Array2<f64>| vec![m.nrows(), 1, rows, cols];
            run_network(&spec, train_x, test_x, shape_of, &train_y, n_classes, &with_seed(tc))
        }
        ClassifierConfig::Lstm { shape, train: tc } => {
            let shape = LstmShape {
                seed: shape.seed ^ seed,
                ..shape.clone()
            };
            let spec = build_lstm_with(rows, cols, n_classes, &shape)?;
            let shape_of = |m: &Array2<f64>| vec![m.nrows(), rows, cols];
            run_network(&spec, train_x, test_x, shape_of, &train_y, n_classes, &with_seed(tc))
        }
    }
}

fn run_network(
    spec: &crate::neural::NetworkSpec,
    train_x: Array2<f64>,
    test_x: Array2<f64>,
    shape_of: impl Fn(&Array2<f64>) -> Vec<usize>,
    train_y: &[usize],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<(Vec<usize>, Option<TrainingHistory>)> {
    let to_tensor = |m: Array2<f64>| {
        let shape = shape_of(&m);
        Tensor::new(&shape, m.into_raw_vec_and_offset().0)
    };
    let (model, history) = train(spec, &to_tensor(train_x)?, train_y, n_classes, config)?;
    let pred = model.predict(&to_tensor(test_x)?)?;
    Ok((pred, Some(history)))
}

fn aggregate(classifier: ClassifierId, cv: &CvConfig, classes: &[String], folds: Vec<FoldResult>) -> EvalReport {
    let n = classes.len();
    let mut confusion = Array2::<u64>::zeros((n, n));
    for f in &folds {
        confusion += &f.confusion;
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let per_class = (0..n)
        .map(|c| {
            let vals: Vec<f64> = folds
                .iter()
                .filter_map(|f| per_class_accuracy(&f.confusion)[c])
                .collect();
            ClassSummary {
                class: classes[c].clone(),
                mean: (!vals.is_empty()).then(|| stats::mean(&vals)),
                std: (!vals.is_empty()).then(|| stats::population_std(&vals)),
                folds: vals.len(),
            }
        })
        .collect();
    EvalReport {
        classifier,
        cv: cv.clone(),
        classes: classes.to_vec(),
        accuracy_mean: stats::mean(&accs),
        accuracy_std: stats::population_std(&accs),
        boxplot: boxplot_stats(&accs).expect("at least one fold"),
        per_class,
        confusion,
        folds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reports: Vec<EvalReport>,
    /// Index of the highest mean accuracy; the first wins ties.
    pub best: usize,
}

/// Runs every pipeline under the same folds and keeps the best.
pub fn sweep(dataset: &Dataset, pipelines: &[Pipeline], cv: &CvConfig) -> Result<SweepResult> {
    if pipelines.is_empty() {
        return Err(Error::InvalidArgument("empty configuration grid".into()));
    }
    let reports = pipelines
        .iter()
        .map(|p| run_experiment(dataset, p, cv))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.accuracy_mean > reports[best].accuracy_mean {
            best = i;
        }
    }
    Ok(SweepResult { reports, best })
}
