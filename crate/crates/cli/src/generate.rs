use std::path::PathBuf;

use clap::Args;
use dmsclass::dataset::save_dataset;
use dmsclass::synth::{generate_dataset, GeneratorConfig};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::run::{resolve_seed, Run};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator configuration (JSON). Without it the built-in five-analyte
    /// campaign is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub days: Option<u32>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Standard deviation of the per-record compensation-voltage shift.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Standard deviation of the per-curve log amplitude.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn resolve_config(args: &GenerateArgs) -> CliResult<GeneratorConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let file: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let Value::Object(file) = file else {
                return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
            };
            // Absent fields fall back to the built-in campaign, except the
            // seed, which must come from the file, --seed or DMS_SEED.
            let mut merged = serde_json::to_value(GeneratorConfig::campaign(0, 12, 0.2)).map_err(dmsclass::Error::from)?;
            let obj = merged.as_object_mut().expect("struct serializes to an object");
            obj.remove("seed");
            let file_seed = file.get("seed").and_then(Value::as_u64);
            obj.extend(file);
            if let Some(seed) = resolve_seed(args.seed, file_seed)? {
                obj.insert("seed".into(), json!(seed));
            }
            serde_json::from_value::<GeneratorConfig>(merged)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let seed = resolve_seed(args.seed, None)?.unwrap_or(0);
            GeneratorConfig::campaign(seed, 12, 0.2)
        }
    };
    if let Some(d) = args.days {
        config.days = d;
    }
    if let Some(n) = args.noise {
        config.noise_sigma = n;
    }
    if let Some(s) = args.shift {
        config.peak_shift_sigma = s;
    }
    if let Some(a) = args.amplitude {
        config.amplitude_sigma = a;
    }
    config.validate()?;
    Ok(config)
}

pub fn run(args: GenerateArgs) -> CliResult<PathBuf> {
    let config = resolve_config(&args)?;
    let dataset = generate_dataset(&config)?;
    let mut run = Run::create("generate", &args.output.out, args.output.run_dir.as_deref())?;
    save_dataset(&dataset, &run.path("dataset"))?;
    run.record("dataset/manifest.json");
    let resolved = serde_json::to_value(&config).map_err(dmsclass::Error::from)?;
    let mut text = serde_json::to_string_pretty(&resolved).map_err(dmsclass::Error::from)?;
    text.push('\n');
    run.write("generator.json", &text)?;
    eprintln!("generated {} records", dataset.len());
    run.finish(resolved, json!({ "generator": config.seed }))
}
