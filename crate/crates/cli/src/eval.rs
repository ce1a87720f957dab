use std::path::PathBuf;

use clap::{Args, ValueEnum};
use dmsclass::dataset::load_dataset;
use dmsclass::eval::{
    boxplot_stats, confusion_csv, folds_csv, per_class_csv, results_table, run_experiment, ClassifierConfig,
    ClassifierId, CvConfig, EvalReport, GroupKey, PcaScope, Pipeline, ResultsRow, DEFAULT_PCA_COMPONENTS,
};
use dmsclass::pca::PcaTarget;
use dmsclass::eval::PreprocessConfig;
use dmsclass::render::boxplot_svg;
use serde::Deserialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::roi::RoiArgs;
use crate::run::{read_json, resolve_seed, Run};
use crate::OutputArgs;

pub const REPORTS_FILE: &str = "reports.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvChoice {
    Stratified,
    Group,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupKeyChoice {
    FlowRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PcaChoice {
    /// On for score-based classifiers, off for the image networks.
    Auto,
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    /// Classifiers, comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub clf: Vec<String>,
    #[arg(long, value_enum, default_value_t = CvChoice::Stratified)]
    pub cv: CvChoice,
    /// Folds per repeat [default: 10].
    #[arg(long)]
    pub k: Option<usize>,
    /// Repeats of the k-fold split [default: 5].
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_enum, default_value_t = GroupKeyChoice::FlowRate)]
    pub group_key: GroupKeyChoice,
    #[arg(long, value_enum, default_value_t = PcaChoice::Auto)]
    pub pca: PcaChoice,
    /// Principal components kept when PCA is on [default: 25].
    #[arg(long)]
    pub components: Option<usize>,
    /// Fit PCA on all records instead of each training fold.
    #[arg(long)]
    pub pca_full_data: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Network epoch limit.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience for networks; 0 disables it.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Pipeline configuration (JSON); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub roi: RoiArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Optional settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFile {
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub pca_components: Option<usize>,
    pub pca_scope: Option<PcaScope>,
    pub preprocess: Option<PreprocessConfig>,
    /// Replaces the default configuration of the matching classifier.
    pub classifiers: Vec<ClassifierConfig>,
}

fn classifier_ids(names: &[String]) -> CliResult<Vec<ClassifierId>> {
    let mut ids = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            ids.extend(ClassifierId::ALL);
        } else {
            ids.push(name.parse()?);
        }
    }
    let mut seen = Vec::new();
    ids.retain(|id| {
        let fresh = !seen.contains(id);
        seen.push(*id);
        fresh
    });
    if ids.is_empty() {
        return Err(CliError::Usage("--clf names no classifier".into()));
    }
    Ok(ids)
}

fn pipeline_for(id: ClassifierId, args: &EvalArgs, file: &EvalFile, preprocess: &PreprocessConfig) -> Pipeline {
    let mut p = Pipeline::default_for(id);
    if let Some(c) = file.classifiers.iter().find(|c| c.id() == id) {
        p.classifier = c.clone();
    }
    p.preprocess = preprocess.clone();
    let components = args
        .components
        .or(file.pca_components)
        .unwrap_or(DEFAULT_PCA_COMPONENTS);
    p.pca = match args.pca {
        PcaChoice::Auto => (!id.takes_plots()).then_some(PcaTarget::Components(components)),
        PcaChoice::On => Some(PcaTarget::Components(components)),
        PcaChoice::Off => None,
    };
    p.pca_scope = if args.pca_full_data {
        PcaScope::FullData
    } else {
        file.pca_scope.unwrap_or_default()
    };
    if let Some(tc) = p.classifier.train_config_mut() {
        if let Some(e) = args.epochs {
            tc.epochs = e;
        }
        if let Some(pat) = args.patience {
            tc.patience = (pat > 0).then_some(pat);
        }
    }
    p
}

fn write_report(run: &mut Run, report: &EvalReport) -> CliResult<()> {
    let prefix = format!("{}_{}", report.cv.label().to_lowercase(), report.classifier.name().to_lowercase());
    run.write(&format!("{prefix}_folds.csv"), &folds_csv(report))?;
    run.write(&format!("{prefix}_per_class.csv"), &per_class_csv(report))?;
    run.write(&format!("{prefix}_confusion.csv"), &confusion_csv(report))?;
    for f in &report.folds {
        if let Some(h) = &f.history {
            run.write(&format!("{prefix}_history_fold{:03}.csv", f.fold), &h.to_csv())?;
        }
    }
    Ok(())
}

pub fn run(args: EvalArgs) -> CliResult<PathBuf> {
    let file: EvalFile = match &args.config {
        Some(p) => read_json(p)?,
        None => EvalFile::default(),
    };
    let ids = classifier_ids(&args.clf)?;
    let seed = resolve_seed(args.seed, file.seed)?.unwrap_or(0);
    let k = args.k.or(file.k).unwrap_or(10);
    let repeats = args.repeats.or(file.repeats).unwrap_or(5);
    let GroupKeyChoice::FlowRate = args.group_key;
    let mut schemes = Vec::new();
    if matches!(args.cv, CvChoice::Stratified | CvChoice::Both) {
        schemes.push(CvConfig::stratified(k, repeats, seed));
    }
    if matches!(args.cv, CvChoice::Group | CvChoice::Both) {
        schemes.push(CvConfig {
            seed,
            ..CvConfig::by_group(GroupKey::FlowRate)
        });
    }
    for cv in &schemes {
        cv.validate()?;
    }

    let dataset = load_dataset(&args.dataset)?;
    let preprocess = args.roi.config(&dataset, file.preprocess.as_ref());
    let pipelines: Vec<Pipeline> = ids.iter().map(|&id| pipeline_for(id, &args, &file, &preprocess)).collect();
    for p in &pipelines {
        p.validate()?;
    }

    let mut run = Run::create("eval", &args.output.out, args.output.run_dir.as_deref())?;
    let mut reports = Vec::new();
    for cv in &schemes {
        let mut boxes = Vec::new();
        for p in &pipelines {
            eprintln!("{} {} ...", cv.label(), p.classifier.id());
            let report = run_experiment(&dataset, p, cv)?;
            eprintln!(
                "{} {}: {:.1} % ± {:.1}",
                cv.label(),
                report.classifier,
                100.0 * report.accuracy_mean,
                100.0 * report.accuracy_std
            );
            write_report(&mut run, &report)?;
            boxes.push((report.classifier.to_string(), boxplot_stats(&report.fold_accuracies())?));
            reports.push(report);
        }
        let svg = boxplot_svg(&boxes, &format!("{} accuracy per fold", cv.label()), "accuracy");
        run.write(&format!("{}_boxplot.svg", cv.label().to_lowercase()), &svg)?;
    }

    let table = results_table(&merge_rows(&reports));
    run.write("summary.txt", &table)?;
    let text = serde_json::to_string(&reports).map_err(dmsclass::Error::from)?;
    run.write(REPORTS_FILE, &text)?;
    print!("{table}");

    let config = json!({
        "dataset": args.dataset,
        "cv": schemes,
        "pipelines": pipelines,
    });
    let classifier_seeds: Vec<_> = pipelines
        .iter()
        .map(|p| json!({ "classifier": p.classifier.id(), "config": p.classifier }))
        .collect();
    run.finish(config, json!({ "cv": seed, "classifiers": classifier_seeds }))
}

/// One row per classifier holding its last k-fold and last grouped report.
pub fn merge_rows(reports: &[EvalReport]) -> Vec<ResultsRow<'_>> {
    let mut rows: Vec<(ClassifierId, ResultsRow)> = Vec::new();
    for r in reports {
        let idx = match rows.iter().position(|(id, _)| *id == r.classifier) {
            Some(i) => i,
            None => {
                rows.push((r.classifier, ResultsRow::default()));
                rows.len() - 1
            }
        };
        let row = &mut rows[idx].1;
        match r.cv.scheme {
            dmsclass::eval::CvScheme::RepeatedStratifiedKfold => row.cv = Some(r),
            dmsclass::eval::CvScheme::LeaveOneGroupOut => row.gcv = Some(r),
        }
    }
    rows.sort_by_key(|(id, _)| *id);
    rows.into_iter().map(|(_, r)| r).collect()
}
