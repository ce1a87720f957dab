use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::check_labels;
use crate::error::{Error, Result};

/// Lazy learner: the training scores are stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub train_points: Array2<f64>,
    pub train_labels: Vec<usize>,
}

pub fn knn_fit(scores: ArrayView2<f64>, labels: &[usize], k: usize) -> Result<KnnModel> {
    check_labels(scores.nrows(), labels)?;
    if k == 0 || k > scores.nrows() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} neighbours requested but {} training points available",
            scores.nrows()
        )));
    }
    Ok(KnnModel {
        k,
        train_points: scores.to_owned(),
        train_labels: labels.to_vec(),
    })
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Majority vote among the K nearest points.
///
/// Equal distances are ordered by training index. A tied vote goes to the
/// class with the smallest summed distance, then to the lowest label.
pub fn knn_predict(model: &KnnModel, query: ArrayView1<f64>) -> Result<usize> {
    if query.len() != model.train_points.ncols() {
        return Err(Error::Dimension {
            expected: model.train_points.ncols(),
            got: query.len(),
        });
    }
    let mut dist: Vec<(f64, usize)> = model
        .train_points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| (euclidean(row, query), i))
        .collect();
    // Partial selection, then a total order on the K survivors.
    let k = model.k;
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_dist);
        dist.truncate(k);
    }
    dist.sort_by(by_dist);

    let n_classes = model.train_labels.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; n_classes];
    let mut total = vec![0.0f64; n_classes];
    for &(d, i) in &dist {
        let c = model.train_labels[i];
        votes[c] += 1;
        total[c] += d;
    }
    let best = (0..n_classes)
        .filter(|&c| votes[c] > 0)
        .min_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then(total[a].total_cmp(&total[b]))
                .then(a.cmp(&b))
        })
        .expect("k >= 1 guarantees a vote");
    Ok(best)
}
