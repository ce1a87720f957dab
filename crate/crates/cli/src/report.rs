use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dmsclass::eval::{results_table, EvalReport};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::eval::{merge_rows, REPORTS_FILE};
use crate::run::{read_json, Run, RunManifest, MANIFEST};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Eval run directories, or directories containing them.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn eval_runs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut candidates = vec![dir.to_path_buf()];
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut children: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    candidates.extend(children);
    let mut runs = Vec::new();
    for c in candidates {
        let manifest = c.join(MANIFEST);
        if manifest.is_file() {
            let m: RunManifest = read_json(&manifest)?;
            if m.command == "eval" {
                runs.push(c);
            }
        }
    }
    Ok(runs)
}

pub fn run(args: ReportArgs) -> CliResult<PathBuf> {
    let mut runs = Vec::new();
    for d in &args.dirs {
        runs.extend(eval_runs(d)?);
    }
    if runs.is_empty() {
        return Err(CliError::Missing(format!(
            "no eval runs (directories with {MANIFEST} and {REPORTS_FILE}) under {}",
            args.dirs
                .iter()
                .map(|d| d.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for r in &runs {
        let path = r.join(REPORTS_FILE);
        if !path.is_file() {
            return Err(CliError::Missing(format!("{} is missing", path.display())));
        }
        reports.extend(read_json::<Vec<EvalReport>>(&path)?);
    }
    let table = results_table(&merge_rows(&reports));
    let mut run = Run::create("report", &args.output.out, args.output.run_dir.as_deref())?;
    run.write("summary.txt", &table)?;
    print!("{table}");
    run.finish(json!({ "sources": runs }), json!({}))
}
