//! Principal component analysis via the SVD of the centred data matrix.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    Components(usize),
    /// Smallest number of components whose cumulative ratio reaches this.
    Variance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `k x p`, one principal axis per row.
    pub components: Array2<f64>,
    /// Eigenvalues of the 1/(n-1) covariance, non-increasing.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.components.ncols()
    }
}

pub fn pca_fit(data: ArrayView2<f64>, target: PcaTarget) -> Result<PcaModel> {
    let (n, p) = data.dim();
    if n < 2 || p < 1 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 samples and 1 feature, got {n}x{p}"
        )));
    }
    let max_k = (n - 1).min(p);
    if let PcaTarget::Components(k) = target {
        if k == 0 || k > max_k {
            return Err(Error::InvalidArgument(format!(
                "{k} components requested, at most {max_k} available for {n}x{p} data"
            )));
        }
    }
    if let PcaTarget::Variance(v) = target {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "variance target must lie in (0, 1], got {v}"
            )));
        }
    }

    let mean = data.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &data - &mean;
    let matrix = DMatrix::from_row_iterator(n, p, centered.iter().copied());
    let svd = matrix.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce right singular vectors".into()))?;
    let singular = svd.singular_values;

    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| singular[b].total_cmp(&singular[a]));
    let denom = (n - 1) as f64;
    let all_var: Vec<f64> = order.iter().map(|&i| singular[i] * singular[i] / denom).collect();
    let total: f64 = all_var.iter().sum();
    let all_ratio: Vec<f64> = all_var
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();

    let k = match target {
        PcaTarget::Components(k) => k,
        PcaTarget::Variance(v) => {
            let mut acc = 0.0;
            let mut k = max_k;
            for (i, r) in all_ratio.iter().enumerate().take(max_k) {
                acc += r;
                if acc >= v - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };

    let mut components = Array2::zeros((k, p));
    for (row, &src) in order.iter().take(k).enumerate() {
        let axis = v_t.row(src);
        let pivot = axis
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (j, x)| {
                if x.abs() > best.1.abs() {
                    (j, *x)
                } else {
                    best
                }
            })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (j, x) in axis.iter().enumerate() {
            components[(row, j)] = sign * x;
        }
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance: all_var[..k].to_vec(),
        explained_variance_ratio: all_ratio[..k].to_vec(),
    })
}

pub fn pca_transform(model: &PcaModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.n_features() {
        return Err(Error::Dimension {
            expected: model.n_features(),
            got: x.ncols(),
        });
    }
    Ok((&x - &model.mean).dot(&model.components.t()))
}

pub fn pca_transform_one(model: &PcaModel, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.len() != model.n_features() {
        return Err(Error::Dimension {
            expected: model.n_features(),
            got: x.len(),
        });
    }
    Ok(model.components.dot(&(&x - &model.mean)))
}

/// `scores * components + mean`.
pub fn pca_inverse_transform(model: &PcaModel, scores: ArrayView2<f64>) -> Result<Array2<f64>> {
    if scores.ncols() != model.n_components() {
        return Err(Error::Dimension {
            expected: model.n_components(),
            got: scores.ncols(),
        });
    }
    Ok(scores.dot(&model.components) + &model.mean)
}

/// Cumulative explained-variance ratios.
pub fn explained_curve(model: &PcaModel) -> Vec<f64> {
    model
        .explained_variance_ratio
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_data() {
        let data = array![[1.0, 1.0], [2.0, 2.0], [-3.0, -3.0], [0.5, 0.5]];
        let m = pca_fit(data.view(), PcaTarget::Components(1)).unwrap();
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components[(0, 0)] - h).abs() < 1e-12);
        assert!((m.components[(0, 1)] - h).abs() < 1e-12);
        let full = pca_fit(data.view(), PcaTarget::Components(2)).unwrap();
        let curve = explained_curve(&full);
        assert!((curve[0] - 1.0).abs() < 1e-12 && (curve[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_components_is_error() {
        let data = random(5, 10, 1);
        assert!(pca_fit(data.view(), PcaTarget::Components(5)).is_err());
        assert!(pca_fit(data.view(), PcaTarget::Components(4)).is_ok());
        assert!(pca_fit(random(1, 3, 1).view(), PcaTarget::Components(1)).is_err());
    }

    #[test]
    fn curve_partial_sums() {
        let model = PcaModel {
            mean: Array1::zeros(3),
            components: Array2::eye(3),
            explained_variance: vec![6.0, 3.0, 1.0],
            explained_variance_ratio: vec![0.6, 0.3, 0.1],
        };
        let c = explained_curve(&model);
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.9).abs() < 1e-15 && (c[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_and_ordered() {
        let data = random(30, 8, 2);
        let m = pca_fit(data.view(), PcaTarget::Components(8)).unwrap();
        let gram = m.components.dot(&m.components.t());
        for i in 0..8 {
            for j in 0..8 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-8);
            }
        }
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = m.explained_variance_ratio.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_properties() {
        let data = random(25, 6, 3);
        let m = pca_fit(data.view(), PcaTarget::Components(4)).unwrap();
        let at_mean = pca_transform_one(&m, m.mean.view()).unwrap();
        assert!(at_mean.iter().all(|x| x.abs() < 1e-15));
        let scores = pca_transform(&m, data.view()).unwrap();
        for c in 0..4 {
            let col = scores.column(c);
            let var = col.iter().map(|x| x * x).sum::<f64>() / 24.0;
            assert!((var - m.explained_variance[c]).abs() < 1e-8);
        }
        let one = pca_transform(&m, data.slice(ndarray::s![0..1, ..])).unwrap();
        assert_eq!(one, pca_transform(&m, data.slice(ndarray::s![0..1, ..])).unwrap());
        assert!(pca_transform(&m, random(2, 5, 9).view()).is_err());
    }

    #[test]
    fn full_rank_reconstruction() {
        let data = random(12, 5, 4);
        let m = pca_fit(data.view(), PcaTarget::Components(5)).unwrap();
        let scores = pca_transform(&m, data.view()).unwrap();
        let back = pca_inverse_transform(&m, scores.view()).unwrap();
        for (a, b) in back.iter().zip(data.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn first_axis_maximises_projected_variance() {
        let data = random(40, 6, 5);
        let m = pca_fit(data.view(), PcaTarget::Components(1)).unwrap();
        let centered = &data - &m.mean;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut d: Array1<f64> = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
            d /= d.dot(&d).sqrt();
            let proj = centered.dot(&d);
            let var = proj.dot(&proj) / 39.0;
            assert!(var <= m.explained_variance[0] + 1e-8);
        }
    }

    #[test]
    fn deterministic_and_sign_fixed() {
        let data = random(20, 7, 6);
        let a = pca_fit(data.view(), PcaTarget::Variance(0.9)).unwrap();
        let b = pca_fit(data.view(), PcaTarget::Variance(0.9)).unwrap();
        assert_eq!(a, b);
        for row in a.components.rows() {
            let pivot = row.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
        let curve = explained_curve(&a);
        assert!(*curve.last().unwrap() >= 0.9 - 1e-12);
        if curve.len() > 1 {
            assert!(curve[curve.len() - 2] < 0.9);
        }
    }
}
