//! Region-of-interest selection, clipping, row normalisation and the
//! diagnostic transforms (cube root, drift series, stack statistics).
//!
//! The training pipeline always clips first and normalises the clipped rows
//! second; see [`clip_and_normalize`].

use std::ops::Range;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Chemical, Dataset, DispersionPlot};
use crate::error::{Error, Result};
use crate::stats;

/// Default number of equal-width histogram bins for row entropy.
pub const DEFAULT_ENTROPY_BINS: usize = 32;

/// Voltage bounds are snapped to grid points within this distance, which
/// absorbs the two-decimal rounding of published window limits.
pub const ROI_SNAP_VOLTS: f64 = 0.01;

/// Rows with a standard deviation below this are normalised to zeros.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiWindow {
    pub usv_lo: f64,
    pub usv_hi: f64,
    pub ucv_lo: f64,
    pub ucv_hi: f64,
}

/// Grid index ranges of a resolved [`RoiWindow`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexWindow {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl RoiWindow {
    /// Separation 456.41 V to 700 V, compensation -1 V to 3.97 V: the top 20
    /// sweeps and the first 100 compensation steps of the default grid.
    pub const PAPER: RoiWindow = RoiWindow {
        usv_lo: 456.41,
        usv_hi: 700.0,
        ucv_lo: -1.0,
        ucv_hi: 3.97,
    };

    pub fn full(plot: &DispersionPlot) -> Self {
        Self {
            usv_lo: plot.usv_grid()[0],
            usv_hi: *plot.usv_grid().last().expect("non-empty grid"),
            ucv_lo: plot.ucv_grid()[0],
            ucv_hi: *plot.ucv_grid().last().expect("non-empty grid"),
        }
    }

    pub fn resolve(&self, usv_grid: &[f64], ucv_grid: &[f64]) -> Result<IndexWindow> {
        if !(self.usv_lo <= self.usv_hi) || !(self.ucv_lo <= self.ucv_hi) {
            return Err(Error::Range(format!(
                "window bounds are inverted: usv [{}, {}], ucv [{}, {}]",
                self.usv_lo, self.usv_hi, self.ucv_lo, self.ucv_hi
            )));
        }
        Ok(IndexWindow {
            rows: resolve_axis("usv", self.usv_lo, self.usv_hi, usv_grid)?,
            cols: resolve_axis("ucv", self.ucv_lo, self.ucv_hi, ucv_grid)?,
        })
    }
}

fn resolve_axis(axis: &str, lo: f64, hi: f64, grid: &[f64]) -> Result<Range<usize>> {
    let first = grid[0];
    let last = *grid.last().expect("non-empty grid");
    if lo < first - ROI_SNAP_VOLTS || hi > last + ROI_SNAP_VOLTS {
        return Err(Error::Range(format!(
            "{axis} window [{lo}, {hi}] V exceeds grid [{first}, {last}] V"
        )));
    }
    let start = grid.iter().position(|&g| g >= lo - ROI_SNAP_VOLTS);
    let end = grid.iter().rposition(|&g| g <= hi + ROI_SNAP_VOLTS);
    match (start, end) {
        (Some(s), Some(e)) if s <= e => Ok(s..e + 1),
        _ => Err(Error::Range(format!(
            "{axis} window [{lo}, {hi}] V contains no grid points of [{first}, {last}] V"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    /// Shannon entropy in bits of each row's value histogram.
    pub per_row_entropy: Vec<f64>,
    pub bin_count: usize,
}

impl EntropyProfile {
    pub fn max_entropy(&self) -> f64 {
        (self.bin_count as f64).log2()
    }
}

/// `x -> sign(x) * |x|^(1/3)`, used only for display.
pub fn signed_cube_root(plot: &DispersionPlot) -> DispersionPlot {
    plot.map(f64::cbrt)
}

/// Histogram entropy of one set of values over `bins` equal-width bins
/// spanning its own range.
pub fn histogram_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(hi > lo) {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    let scale = bins as f64 / (hi - lo);
    for &v in values {
        let b = (((v - lo) * scale) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

pub fn row_entropy(plot: &DispersionPlot, bin_count: usize) -> Result<EntropyProfile> {
    if bin_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "entropy needs at least 2 bins, got {bin_count}"
        )));
    }
    let per_row_entropy = plot
        .intensity()
        .rows()
        .into_iter()
        .map(|row| histogram_entropy(&row.to_vec(), bin_count))
        .collect();
    Ok(EntropyProfile {
        per_row_entropy,
        bin_count,
    })
}

/// How a region of interest is chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RoiRule {
    /// The fixed published window, [`RoiWindow::PAPER`].
    #[default]
    Paper,
    /// Longest contiguous run of rows whose entropy is at least the
    /// `quantile` of the profile, over the given compensation range.
    Quantile { quantile: f64, ucv_lo: f64, ucv_hi: f64 },
}

pub fn select_roi(profile: &EntropyProfile, usv_grid: &[f64], rule: &RoiRule) -> Result<RoiWindow> {
    if profile.per_row_entropy.len() != usv_grid.len() {
        return Err(Error::Dimension {
            expected: usv_grid.len(),
            got: profile.per_row_entropy.len(),
        });
    }
    let (quantile, ucv_lo, ucv_hi) = match *rule {
        RoiRule::Paper => return Ok(RoiWindow::PAPER),
        RoiRule::Quantile {
            quantile,
            ucv_lo,
            ucv_hi,
        } => (quantile, ucv_lo, ucv_hi),
    };
    let h = &profile.per_row_entropy;
    let threshold = stats::quantile(h, quantile);
    let mut best: Option<Range<usize>> = None;
    let mut start = None;
    for i in 0..=h.len() {
        let inside = i < h.len() && h[i] >= threshold;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.as_ref().is_none_or(|b| i - s > b.len()) {
                    best = Some(s..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    let rows = best.ok_or_else(|| {
        Error::Range(format!(
            "entropy quantile {quantile} selects no rows; use the default window instead"
        ))
    })?;
    Ok(RoiWindow {
        usv_lo: usv_grid[rows.start],
        usv_hi: usv_grid[rows.end - 1],
        ucv_lo,
        ucv_hi,
    })
}

pub fn clip(plot: &DispersionPlot, roi: &RoiWindow) -> Result<DispersionPlot> {
    let w = roi.resolve(plot.usv_grid(), plot.ucv_grid())?;
    Ok(clip_indices(plot, &w))
}

pub fn clip_indices(plot: &DispersionPlot, w: &IndexWindow) -> DispersionPlot {
    let sub = plot
        .intensity()
        .slice(s![w.rows.clone(), w.cols.clone()])
        .to_owned();
    DispersionPlot::new(
        plot.usv_grid()[w.rows.clone()].to_vec(),
        plot.ucv_grid()[w.cols.clone()].to_vec(),
        sub,
    )
    .expect("sub-grid of a valid plot")
}

/// Z-scores each row using the population standard deviation. Rows whose
/// deviation is below [`DEGENERATE_STD`] become zeros.
pub fn normalize_rows(plot: &DispersionPlot) -> DispersionPlot {
    let mut m = plot.intensity().clone();
    for mut row in m.rows_mut() {
        let values = row.to_vec();
        let mean = stats::mean(&values);
        let std = stats::population_std(&values);
        if std < DEGENERATE_STD {
            row.fill(0.0);
        } else {
            row.mapv_inplace(|x| (x - mean) / std);
        }
    }
    plot.with_intensity(m)
}

/// The training-time transform: clip to the window, then normalise rows.
pub fn clip_and_normalize(plot: &DispersionPlot, window: &IndexWindow) -> DispersionPlot {
    normalize_rows(&clip_indices(plot, window))
}

fn nearest_row(usv_grid: &[f64], usv: f64) -> Result<usize> {
    let (idx, dist) = usv_grid
        .iter()
        .enumerate()
        .map(|(i, g)| (i, (g - usv).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let half_step = if usv_grid.len() > 1 {
        (usv_grid[1] - usv_grid[0]).abs() / 2.0
    } else {
        0.0
    };
    if dist > half_step {
        return Err(Error::Range(format!(
            "separation voltage {usv} V is more than half a step from the grid"
        )));
    }
    Ok(idx)
}

/// Mean intensity of the sweep nearest `usv_row` for each record, in
/// campaign order.
pub fn drift_series(dataset: &Dataset, usv_row: f64) -> Result<Vec<(u64, f64)>> {
    let grid = dataset.config().usv_grid();
    let row = nearest_row(&grid, usv_row)?;
    Ok(dataset
        .records()
        .iter()
        .map(|r| {
            let values = r.plot.intensity().row(row).to_vec();
            (r.seq_timestamp, stats::mean(&values))
        })
        .collect())
}

/// Index of the grid row nearest `usv_row`, within half a step.
pub fn drift_row(dataset: &Dataset, usv_row: f64) -> Result<usize> {
    nearest_row(&dataset.config().usv_grid(), usv_row)
}

/// Element-wise mean of several plots on the same grid.
pub fn mean_plot<'a>(plots: impl IntoIterator<Item = &'a DispersionPlot>) -> Option<DispersionPlot> {
    let mut iter = plots.into_iter();
    let first = iter.next()?;
    let mut sum = first.intensity().clone();
    let mut n = 1.0;
    for p in iter {
        sum += p.intensity();
        n += 1.0;
    }
    Some(first.with_intensity(sum / n))
}

/// Pixelwise mean and population standard deviation over the records of
/// one chemical at one flow rate.
pub fn stack_stats(
    dataset: &Dataset,
    chemical: &Chemical,
    flow_rate: f64,
) -> Result<(DispersionPlot, DispersionPlot)> {
    let plots: Vec<&DispersionPlot> = dataset
        .records()
        .iter()
        .filter(|r| &r.chemical == chemical && (r.flow_rate - flow_rate).abs() < 1e-9)
        .map(|r| &r.plot)
        .collect();
    if plots.len() < 2 {
        return Err(Error::NoMatch(format!(
            "{chemical} at {flow_rate} sccm: {} record(s), at least 2 needed",
            plots.len()
        )));
    }
    let (rows, cols) = plots[0].intensity().dim();
    let mut stack = ndarray::Array3::<f64>::zeros((plots.len(), rows, cols));
    for (k, p) in plots.iter().enumerate() {
        stack.index_axis_mut(Axis(0), k).assign(p.intensity());
    }
    let mean: Array2<f64> = stack.mean_axis(Axis(0)).expect("non-empty stack");
    let std: Array2<f64> = stack.std_axis(Axis(0), 0.0);
    Ok((plots[0].with_intensity(mean), plots[0].with_intensity(std)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InstrumentConfig;
    use proptest::prelude::*;

    fn plot_from(rows: Vec<Vec<f64>>) -> DispersionPlot {
        let n = rows.len();
        let m = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        DispersionPlot::new(
            (0..n).map(|i| i as f64).collect(),
            (0..m).map(|j| j as f64).collect(),
            Array2::from_shape_vec((n, m), flat).unwrap(),
        )
        .unwrap()
    }

    fn paper_plot() -> DispersionPlot {
        let c = InstrumentConfig::default();
        DispersionPlot::on_config(
            &c,
            Array2::from_shape_fn((40, 200), |(i, j)| ((i * 7 + j * 3) % 11) as f64),
        )
        .unwrap()
    }

    #[test]
    fn cube_root_values() {
        let p = signed_cube_root(&plot_from(vec![vec![8.0, -27.0, 0.0]]));
        assert_eq!(p.intensity().row(0).to_vec(), vec![2.0, -3.0, 0.0]);
    }

    #[test]
    fn entropy_examples() {
        let p = plot_from(vec![vec![5.0; 8], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]]);
        let e = row_entropy(&p, 2).unwrap();
        assert_eq!(e.per_row_entropy[0], 0.0);
        assert!((e.per_row_entropy[1] - 1.0).abs() < 1e-15);
        let uniform: Vec<f64> = (0..16).flat_map(|k| [k as f64; 3]).collect();
        let e = row_entropy(&plot_from(vec![uniform]), 16).unwrap();
        assert!((e.per_row_entropy[0] - 4.0).abs() < 1e-12);
        assert!(row_entropy(&p, 1).is_err());
    }

    #[test]
    fn paper_window_is_20_by_100() {
        let p = paper_plot();
        let w = RoiWindow::PAPER.resolve(p.usv_grid(), p.ucv_grid()).unwrap();
        assert_eq!(w.rows, 20..40);
        assert_eq!(w.cols, 0..100);
        let c = clip(&p, &RoiWindow::PAPER).unwrap();
        assert_eq!(c.intensity().dim(), (20, 100));
        assert_eq!(c.intensity()[(0, 0)], p.intensity()[(20, 0)]);
    }

    #[test]
    fn full_window_is_identity_and_outside_is_error() {
        let p = paper_plot();
        assert_eq!(clip(&p, &RoiWindow::full(&p)).unwrap(), p);
        let bad = RoiWindow {
            usv_lo: 710.0,
            usv_hi: 720.0,
            ..RoiWindow::PAPER
        };
        assert!(matches!(clip(&p, &bad), Err(Error::Range(_))));
    }

    #[test]
    fn quantile_rule_finds_high_entropy_block() {
        let grid = InstrumentConfig::default().usv_grid();
        let h: Vec<f64> = (0..40).map(|i| if i >= 30 { 4.0 + 0.01 * i as f64 } else { 1.0 }).collect();
        let profile = EntropyProfile {
            per_row_entropy: h,
            bin_count: 32,
        };
        let rule = RoiRule::Quantile {
            quantile: 0.75,
            ucv_lo: -1.0,
            ucv_hi: 3.97,
        };
        let roi = select_roi(&profile, &grid, &rule).unwrap();
        let w = roi.resolve(&grid, &InstrumentConfig::default().ucv_grid()).unwrap();
        assert_eq!(w.rows, 30..40);

        let flat = EntropyProfile {
            per_row_entropy: vec![2.0; 40],
            bin_count: 32,
        };
        let rule = RoiRule::Quantile {
            quantile: 0.0,
            ucv_lo: -1.0,
            ucv_hi: 9.0,
        };
        let roi = select_roi(&flat, &grid, &rule).unwrap();
        assert_eq!(roi.resolve(&grid, &InstrumentConfig::default().ucv_grid()).unwrap().rows, 0..40);
        assert_eq!(select_roi(&flat, &grid, &RoiRule::Paper).unwrap(), RoiWindow::PAPER);
    }

    #[test]
    fn normalize_examples() {
        let p = normalize_rows(&plot_from(vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]));
        let r0 = p.intensity().row(0).to_vec();
        assert!((r0[0] + 1.224_744_871_391_589).abs() < 1e-12);
        assert_eq!(r0[1], 0.0);
        assert!((r0[2] - 1.224_744_871_391_589).abs() < 1e-12);
        assert_eq!(p.intensity().row(1).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn nearest_row_for_drift() {
        let grid = InstrumentConfig::default().usv_grid();
        assert_eq!(nearest_row(&grid, 200.0).unwrap(), 0);
        assert_eq!(nearest_row(&grid, 205.0).unwrap(), 0);
        assert_eq!(nearest_row(&grid, 207.0).unwrap(), 1);
        assert!(nearest_row(&grid, 190.0).is_err());
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(values in prop::collection::vec(-1e3f64..1e3, 2..60), bins in 2usize..40) {
            let p = plot_from(vec![values]);
            let e = row_entropy(&p, bins).unwrap();
            let h = e.per_row_entropy[0];
            prop_assert!(h >= 0.0 && h <= e.max_entropy() + 1e-12);
        }

        #[test]
        fn normalized_rows_are_standard(values in prop::collection::vec(-1e3f64..1e3, 2..80)) {
            let p = plot_from(vec![values.clone()]);
            prop_assume!(stats::population_std(&values) > 1e-6);
            let n = normalize_rows(&p);
            let row = n.intensity().row(0).to_vec();
            prop_assert!(stats::mean(&row).abs() < 1e-9);
            prop_assert!((stats::population_std(&row) - 1.0).abs() < 1e-9);
            let again = normalize_rows(&n);
            for (a, b) in again.intensity().iter().zip(n.intensity().iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn cube_root_is_monotone(mut xs in prop::collection::vec(-1e6f64..1e6, 2..50)) {
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let p = signed_cube_root(&plot_from(vec![xs.clone()]));
            let out = p.intensity().row(0).to_vec();
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn clip_is_idempotent(r0 in 0usize..40, c0 in 0usize..200, dr in 0usize..40, dc in 0usize..200) {
            let p = paper_plot();
            let r1 = (r0 + dr).min(39);
            let c1 = (c0 + dc).min(199);
            let roi = RoiWindow {
                usv_lo: p.usv_grid()[r0],
                usv_hi: p.usv_grid()[r1],
                ucv_lo: p.ucv_grid()[c0],
                ucv_hi: p.ucv_grid()[c1],
            };
            let once = clip(&p, &roi).unwrap();
            prop_assert_eq!(once.intensity().dim(), (r1 - r0 + 1, c1 - c0 + 1));
            prop_assert_eq!(clip(&once, &roi).unwrap(), once);
        }
    }
}
