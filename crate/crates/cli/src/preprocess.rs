use std::path::PathBuf;

use clap::Args;
use dmsclass::dataset::{load_dataset, save_dataset, Dataset, DispersionPlot, InstrumentConfig, MeasurementRecord};
use dmsclass::eval::fold_window;
use dmsclass::preprocess::clip_and_normalize;
use serde_json::json;

use crate::error::CliResult;
use crate::roi::RoiArgs;
use crate::run::Run;
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub roi: RoiArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Window chosen on the mean of all plots; every record is clipped to it
/// and row-normalised, and the result is saved as a dataset on the
/// clipped grid.
pub fn run(args: PreprocessArgs) -> CliResult<PathBuf> {
    let dataset = load_dataset(&args.dataset)?;
    let preprocess = args.roi.config(&dataset, None);
    let all: Vec<usize> = (0..dataset.len()).collect();
    let window = fold_window(&dataset, &all, &preprocess)?;
    let clipped: Vec<MeasurementRecord> = dataset
        .records()
        .iter()
        .map(|r| MeasurementRecord {
            plot: clip_and_normalize(&r.plot, &window),
            ..r.clone()
        })
        .collect();
    let config = match clipped.first() {
        Some(r) => clipped_config(dataset.config(), &r.plot),
        None => dataset.config().clone(),
    };
    let out = Dataset::new(config, clipped)?;

    let mut run = Run::create("preprocess", &args.output.out, args.output.run_dir.as_deref())?;
    save_dataset(&out, &run.path("dataset"))?;
    run.record("dataset/manifest.json");
    let grid = dataset.config();
    let roi = json!({
        "rows": [window.rows.start, window.rows.end],
        "cols": [window.cols.start, window.cols.end],
        "usv": [grid.usv_grid()[window.rows.start], grid.usv_grid()[window.rows.end - 1]],
        "ucv": [grid.ucv_grid()[window.cols.start], grid.ucv_grid()[window.cols.end - 1]],
    });
    let mut text = serde_json::to_string_pretty(&roi).map_err(dmsclass::Error::from)?;
    text.push('\n');
    run.write("roi.json", &text)?;
    eprintln!(
        "clipped {} records to {}x{}",
        out.len(),
        window.rows.len(),
        window.cols.len()
    );
    run.finish(
        json!({ "dataset": args.dataset, "preprocess": preprocess, "window": roi }),
        json!({}),
    )
}

fn clipped_config(base: &InstrumentConfig, plot: &DispersionPlot) -> InstrumentConfig {
    let usv = plot.usv_grid();
    let ucv = plot.ucv_grid();
    InstrumentConfig {
        usv_min: usv[0],
        usv_max: usv[usv.len() - 1],
        n_usv: usv.len(),
        ucv_min: ucv[0],
        ucv_max: ucv[ucv.len() - 1],
        n_ucv: ucv.len(),
        ..base.clone()
    }
}
