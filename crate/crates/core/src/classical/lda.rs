use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::check_labels;
use super::shrinkage::{empirical_covariance, ledoit_wolf, shrink};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Shrinkage {
    /// Ledoit-Wolf estimate.
    #[default]
    Auto,
    Fixed(f64),
    /// Plain pooled within-class covariance.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// Label of each row in the per-class arrays, ascending.
    pub classes: Vec<usize>,
    pub class_means: Array2<f64>,
    pub shrunk_covariance: Array2<f64>,
    pub shrinkage_lambda: f64,
    pub weights: Array2<f64>,
    pub intercepts: Vec<f64>,
    pub priors: Vec<f64>,
}

/// Linear discriminant with a shrunk pooled covariance.
///
/// Features are standardised by their pooled within-class deviation before
/// the shrinkage estimate and scaled back afterwards, so the identity
/// target is meaningful when features have very different variances (as
/// PCA scores do). Each `w_c` is the least-squares solution of
/// `Sigma w_c = mu_c` and `b_c = -mu_c.w_c / 2 + ln(prior_c)`.
pub fn lda_fit(scores: ArrayView2<f64>, labels: &[usize], shrinkage: Shrinkage) -> Result<LdaModel> {
    check_labels(scores.nrows(), labels)?;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("LDA needs at least 2 classes".into()));
    }
    let (n, p) = scores.dim();
    let mut means = Array2::zeros((classes.len(), p));
    let mut priors = Vec::with_capacity(classes.len());
    for (ci, &c) in classes.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} sample(s), LDA needs at least 2",
                rows.len()
            )));
        }
        let sub = scores.select(Axis(0), &rows);
        means.row_mut(ci).assign(&sub.mean_axis(Axis(0)).expect("non-empty class"));
        priors.push(rows.len() as f64 / n as f64);
    }

    let mut centered = scores.to_owned();
    for (i, mut row) in centered.rows_mut().into_iter().enumerate() {
        let ci = classes.binary_search(&labels[i]).expect("label collected above");
        row -= &means.row(ci);
    }
    let scale: Array1<f64> = centered
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    let standardized = &centered / &scale;

    let (cov_std, lambda) = match shrinkage {
        Shrinkage::Auto => {
            let lw = ledoit_wolf(standardized.view())?;
            (lw.covariance, lw.lambda)
        }
        Shrinkage::Fixed(l) => {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidArgument(format!("shrinkage {l} outside [0, 1]")));
            }
            let s = empirical_covariance(standardized.view());
            let mu = s.diag().sum() / p as f64;
            (shrink(&s, l, mu), l)
        }
        Shrinkage::None => (empirical_covariance(standardized.view()), 0.0),
    };
    let mut cov = cov_std;
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] *= scale[i] * scale[j];
        }
    }

    let sigma = DMatrix::from_row_iterator(p, p, cov.iter().copied());
    let rhs = DMatrix::from_row_iterator(p, classes.len(), means.t().iter().copied());
    let svd = sigma.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let solution = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let mut weights = Array2::zeros((classes.len(), p));
    for ci in 0..classes.len() {
        for j in 0..p {
            weights[(ci, j)] = solution[(j, ci)];
        }
    }
    let intercepts = (0..classes.len())
        .map(|ci| -0.5 * means.row(ci).dot(&weights.row(ci)) + priors[ci].ln())
        .collect();

    Ok(LdaModel {
        classes,
        class_means: means,
        shrunk_covariance: cov,
        shrinkage_lambda: lambda,
        weights,
        intercepts,
        priors,
    })
}

impl LdaModel {
    pub fn decision_scores(&self, query: ArrayView1<f64>) -> Result<Vec<f64>> {
        if query.len() != self.weights.ncols() {
            return Err(Error::Dimension {
                expected: self.weights.ncols(),
                got: query.len(),
            });
        }
        Ok(self
            .weights
            .rows()
            .into_iter()
            .zip(&self.intercepts)
            .map(|(w, b)| w.dot(&query) + b)
            .collect())
    }
}

/// `argmax_c (query . w_c + b_c)`; the first (lowest) label wins ties.
pub fn lda_predict(model: &LdaModel, query: ArrayView1<f64>) -> Result<usize> {
    let scores = model.decision_scores(query)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(model.classes[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn symmetric_pair() -> (Array2<f64>, Vec<usize>) {
        // Means (-1, 0) and (1, 0), identical spread in each class.
        let offsets = [[0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [-0.5, -0.5]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, cx) in [(0usize, -1.0), (1, 1.0)] {
            for o in offsets {
                rows.push([cx + o[0], o[1]]);
                labels.push(c);
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        (Array2::from_shape_vec((8, 2), flat).unwrap(), labels)
    }

    #[test]
    fn symmetric_two_class_rule() {
        let (x, y) = symmetric_pair();
        let m = lda_fit(x.view(), &y, Shrinkage::Auto).unwrap();
        assert_eq!(lda_predict(&m, array![0.5, 7.0].view()).unwrap(), 1);
        assert_eq!(lda_predict(&m, array![-0.5, -7.0].view()).unwrap(), 0);
        let mid = m.decision_scores(array![0.0, 0.0].view()).unwrap();
        assert!((mid[0] - mid[1]).abs() < 1e-9);
        assert_eq!(lda_predict(&m, m.class_means.row(0)).unwrap(), 0);
        assert_eq!(lda_predict(&m, m.class_means.row(1)).unwrap(), 1);
        assert!((m.priors.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn class_with_one_sample_is_named() {
        let x = array![[0.0], [1.0], [2.0]];
        let err = lda_fit(x.view(), &[0, 0, 3], Shrinkage::Auto).unwrap_err();
        assert!(err.to_string().contains("class 3"), "{err}");
    }

    #[test]
    fn separated_clouds_train_accurately() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = Array2::zeros((200, 3));
        let mut labels = Vec::new();
        for i in 0..200 {
            let c = i / 100;
            let centre = if c == 0 { -3.0 } else { 3.0 };
            for j in 0..3 {
                data[(i, j)] = noise.sample(&mut rng) + if j == 0 { centre } else { 0.0 };
            }
            labels.push(c);
        }
        let m = lda_fit(data.view(), &labels, Shrinkage::Auto).unwrap();
        let correct = (0..200)
            .filter(|&i| lda_predict(&m, data.row(i)).unwrap() == labels[i])
            .count();
        assert!(correct as f64 / 200.0 >= 0.99);
        let cov = &m.shrunk_covariance;
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov[(i, j)] - cov[(j, i)]).abs() < 1e-10);
            }
        }
    }
}
