use clap::{Args, ValueEnum};
use dmsclass::dataset::Dataset;
use dmsclass::eval::PreprocessConfig;
use dmsclass::preprocess::{RoiRule, RoiWindow, DEFAULT_ENTROPY_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoiChoice {
    /// Fixed window: top 20 sweeps, first 100 compensation steps.
    Paper,
    /// Longest run of high-entropy sweeps.
    Entropy,
    /// The whole plot.
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct RoiArgs {
    /// Region of interest [default: paper].
    #[arg(long, value_enum)]
    pub roi: Option<RoiChoice>,
    /// Sweep-entropy quantile used by `--roi entropy` [default: 0.5].
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Histogram bins for sweep entropy [default: 32].
    #[arg(long)]
    pub bins: Option<usize>,
}

impl RoiArgs {
    fn any(&self) -> bool {
        self.roi.is_some() || self.quantile.is_some() || self.bins.is_some()
    }

    /// Flags win over `file`, which wins over the defaults.
    pub fn config(&self, dataset: &Dataset, file: Option<&PreprocessConfig>) -> PreprocessConfig {
        if let (false, Some(f)) = (self.any(), file) {
            return f.clone();
        }
        let c = dataset.config();
        let rule = match self.roi.unwrap_or(RoiChoice::Paper) {
            RoiChoice::Paper => RoiRule::Paper,
            RoiChoice::Entropy => RoiRule::Quantile {
                quantile: self.quantile.unwrap_or(0.5),
                ucv_lo: RoiWindow::PAPER.ucv_lo,
                ucv_hi: RoiWindow::PAPER.ucv_hi,
            },
            // Every row reaches the minimum entropy.
            RoiChoice::Full => RoiRule::Quantile {
                quantile: 0.0,
                ucv_lo: c.ucv_min,
                ucv_hi: c.ucv_max,
            },
        };
        PreprocessConfig {
            roi: rule,
            entropy_bins: self.bins.unwrap_or(DEFAULT_ENTROPY_BINS),
        }
    }
}
