use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use dmsclass::dataset::{load_dataset, Chemical, Dataset};
use dmsclass::preprocess::{
    drift_row, drift_series, mean_plot, row_entropy, select_roi, signed_cube_root, stack_stats, RoiWindow,
};
use dmsclass::render::{heatmap_svg, line_svg};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::roi::RoiArgs;
use crate::run::Run;
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    /// Record id to render as a cube-rooted heatmap; repeatable.
    #[arg(long = "plot", value_name = "ID")]
    pub plots: Vec<String>,
    /// Mean intensity of one sweep across the campaign.
    #[arg(long, requires = "usv")]
    pub drift: bool,
    /// Separation voltage of the drift sweep.
    #[arg(long)]
    pub usv: Option<f64>,
    /// Pixelwise mean and standard deviation of one chemical at one flow
    /// rate, e.g. `nBuOH:32`; repeatable.
    #[arg(long = "stack", value_name = "CHEM:FLOW")]
    pub stacks: Vec<String>,
    /// Record id whose per-sweep entropy is plotted with the selected
    /// window shaded; repeatable.
    #[arg(long = "entropy", value_name = "ID")]
    pub entropy: Vec<String>,
    #[command(flatten)]
    pub roi: RoiArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn record<'a>(dataset: &'a Dataset, id: &str) -> CliResult<&'a dmsclass::dataset::MeasurementRecord> {
    dataset
        .get(id)
        .ok_or_else(|| CliError::Config(format!("no record with id `{id}`")))
}

fn parse_stack(spec: &str) -> CliResult<(Chemical, f64)> {
    let (chem, flow) = spec
        .rsplit_once(':')
        .ok_or_else(|| CliError::Usage(format!("--stack expects CHEM:FLOW, got `{spec}`")))?;
    let flow: f64 = flow
        .parse()
        .map_err(|_| CliError::Usage(format!("--stack flow rate `{flow}` is not a number")))?;
    Ok((chem.parse().expect("infallible"), flow))
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub fn run(args: InspectArgs) -> CliResult<PathBuf> {
    let dataset = load_dataset(&args.dataset)?;
    let stacks = args.stacks.iter().map(|s| parse_stack(s)).collect::<CliResult<Vec<_>>>()?;
    let preprocess = args.roi.config(&dataset, None);
    let mut run = Run::create("inspect", &args.output.out, args.output.run_dir.as_deref())?;

    // Resolve every selection before writing, so an invalid one leaves no
    // half-finished output behind.
    let plot_records = args.plots.iter().map(|id| record(&dataset, id)).collect::<CliResult<Vec<_>>>()?;
    let entropy_records = args.entropy.iter().map(|id| record(&dataset, id)).collect::<CliResult<Vec<_>>>()?;
    let stack_stats_all = stacks
        .iter()
        .map(|(c, f)| stack_stats(&dataset, c, *f).map(|s| (c, *f, s)))
        .collect::<Result<Vec<_>, _>>()?;

    for r in plot_records {
        let svg = heatmap_svg(
            &signed_cube_root(&r.plot),
            Some(&RoiWindow::PAPER),
            &format!("{} ({}, {} sccm), cube root", r.id, r.chemical, r.flow_rate),
        );
        run.write(&format!("plot_{}.svg", file_safe(&r.id)), &svg)?;
    }

    if args.drift {
        let usv = args.usv.expect("clap enforces --usv with --drift");
        let series = drift_series(&dataset, usv)?;
        let row = drift_row(&dataset, usv)?;
        let actual = dataset.config().usv_grid()[row];
        let mut csv = String::from("seq_timestamp,id,mean_intensity\n");
        for ((t, v), r) in series.iter().zip(dataset.records()) {
            let _ = writeln!(csv, "{t},{},{v}", r.id);
        }
        run.write("drift.csv", &csv)?;
        let points: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t as f64, v)).collect();
        let svg = line_svg(&points, None, &format!("Mean intensity at {actual:.2} V"), "measurement", "intensity");
        run.write("drift.svg", &svg)?;
    }

    for (chem, flow, (mean, std)) in &stack_stats_all {
        let tag = file_safe(&format!("{chem}_{flow}"));
        let name = format!("{chem} at {flow} sccm");
        run.write(
            &format!("stack_{tag}_mean.svg"),
            &heatmap_svg(&signed_cube_root(mean), None, &format!("{name}: mean, cube root")),
        )?;
        run.write(
            &format!("stack_{tag}_std.svg"),
            &heatmap_svg(std, None, &format!("{name}: standard deviation")),
        )?;
    }

    for r in entropy_records {
        let profile = row_entropy(&r.plot, preprocess.entropy_bins)?;
        let window = select_roi(&profile, r.plot.usv_grid(), &preprocess.roi)?;
        let points: Vec<(f64, f64)> = r
            .plot
            .usv_grid()
            .iter()
            .copied()
            .zip(profile.per_row_entropy.iter().copied())
            .collect();
        let mut csv = String::from("usv,entropy_bits\n");
        for (u, h) in &points {
            let _ = writeln!(csv, "{u},{h}");
        }
        let tag = file_safe(&r.id);
        run.write(&format!("entropy_{tag}.csv"), &csv)?;
        let svg = line_svg(
            &points,
            Some((window.usv_lo, window.usv_hi)),
            &format!("Sweep entropy of {} ({} bins)", r.id, profile.bin_count),
            "separation voltage [V]",
            "entropy [bits]",
        );
        run.write(&format!("entropy_{tag}.svg"), &svg)?;
    }

    let summary = summary(&dataset);
    let mut text = serde_json::to_string_pretty(&summary).map_err(dmsclass::Error::from)?;
    text.push('\n');
    run.write("summary.json", &text)?;
    println!("{text}");
    let config = json!({
        "dataset": args.dataset,
        "plots": args.plots,
        "drift_usv": args.drift.then_some(args.usv).flatten(),
        "stacks": args.stacks,
        "entropy": args.entropy,
        "preprocess": preprocess,
    });
    run.finish(config, json!({}))
}

fn summary(dataset: &Dataset) -> serde_json::Value {
    let mut flows: Vec<f64> = dataset.records().iter().map(|r| r.flow_rate).collect();
    flows.sort_by(f64::total_cmp);
    flows.dedup();
    let classes: Vec<serde_json::Value> = dataset
        .classes()
        .iter()
        .map(|c| {
            json!({
                "class": c.name(),
                "records": dataset.records().iter().filter(|r| &r.chemical == c).count(),
            })
        })
        .collect();
    let mean = mean_plot(dataset.records().iter().map(|r| &r.plot));
    json!({
        "records": dataset.len(),
        "classes": classes,
        "flow_rates": flows,
        "grid": dataset.config(),
        "mean_intensity": mean.map(|m| m.intensity().mean().unwrap_or(0.0)),
    })
}
