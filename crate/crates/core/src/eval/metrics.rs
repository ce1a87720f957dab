use std::fmt::Debug;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Entry `(i, j)` counts samples of class `i` predicted as class `j`.
pub fn confusion_matrix<L: PartialEq + Debug>(truth: &[L], predicted: &[L], classes: &[L]) -> Result<Array2<u64>> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let index = |l: &L| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::InvalidArgument(format!("label {l:?} is not among the classes")))
    };
    let mut m = Array2::zeros((classes.len(), classes.len()));
    for (t, p) in truth.iter().zip(predicted) {
        m[(index(t)?, index(p)?)] += 1;
    }
    Ok(m)
}

/// Recall per class; `None` for classes without test support.
pub fn per_class_accuracy(conf: &Array2<u64>) -> Vec<Option<f64>> {
    conf.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.sum();
            (total > 0).then(|| row[i] as f64 / total as f64)
        })
        .collect()
}

pub fn overall_accuracy(conf: &Array2<u64>) -> f64 {
    let total: u64 = conf.sum();
    if total == 0 {
        return 0.0;
    }
    conf.diag().sum() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quartiles with whiskers at the most extreme points
/// inside `1.5 * iqr` of the box.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("boxplot of no values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = stats::quantile_sorted(&sorted, 0.25);
    let median = stats::quantile_sorted(&sorted, 0.5);
    let q3 = stats::quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
    let outliers = sorted.iter().copied().filter(|v| !(lo..=hi).contains(v)).collect();
    Ok(BoxplotStats {
        q1,
        median,
        q3,
        iqr,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn tally() {
        let m = confusion_matrix(&["A", "A", "B"], &["A", "B", "B"], &["A", "B"]).unwrap();
        assert_eq!(m, array![[1, 1], [0, 1]]);
        assert_eq!(per_class_accuracy(&m), vec![Some(0.5), Some(1.0)]);
        let empty = confusion_matrix::<&str>(&[], &[], &["A", "B"]).unwrap();
        assert_eq!(empty.sum(), 0);
        assert!(confusion_matrix(&["A"], &["C"], &["A", "B"]).is_err());
        assert!(confusion_matrix(&["A"], &[], &["A"]).is_err());
    }

    #[test]
    fn perfect_and_undefined() {
        let m = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2], &[0, 1, 2, 3]).unwrap();
        assert_eq!(per_class_accuracy(&m), vec![Some(1.0), Some(1.0), Some(1.0), None]);
        assert_eq!(overall_accuracy(&m), 1.0);
    }

    #[test]
    fn quartiles() {
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let b = boxplot_stats(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3, b.iqr), (3.0, 5.0, 7.0, 4.0));
        assert!(b.outliers.is_empty());
        assert_eq!((b.whisker_lo, b.whisker_hi), (1.0, 9.0));

        let flat = boxplot_stats(&[0.7; 5]).unwrap();
        assert_eq!((flat.q1, flat.median, flat.q3, flat.iqr), (0.7, 0.7, 0.7, 0.0));
        assert!(flat.outliers.is_empty());

        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_hi, 4.0);
        assert!(boxplot_stats(&[]).is_err());
    }
}
